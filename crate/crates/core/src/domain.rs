//! Shared vocabulary: questionnaire answers, suggested actions, user
//! decisions and the relationship state those decisions mutate.
//!
//! Every enum has a canonical text label. Those labels are what appears in
//! rule tables, snapshots, session logs and wire payloads.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("unknown answer token {token:?}")]
    UnknownToken { token: String },
    #[error("answer {token:?} is not valid for question Q{question}")]
    DomainMismatch { question: u8, token: String },
    #[error("question index {0} is outside 1..=5")]
    BadQuestion(u8),
    #[error("unknown {kind} label {token:?}")]
    UnknownLabel { kind: &'static str, token: String },
}

/// Lowercases and collapses runs of whitespace; typographic apostrophes
/// are folded to ASCII.
pub(crate) fn normalize_token(token: &str) -> String {
    token
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .replace('\u{2019}', "'")
        .to_lowercase()
}

/// Generates `label`, `ALL`, `Display`, `FromStr` and label-based serde for
/// a fieldless enum.
macro_rules! labeled_enum {
    (
        $(#[$meta:meta])*
        $name:ident, $kind:literal { $($variant:ident => $label:literal),+ $(,)? }
    ) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
        pub enum $name {
            $($variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn label(self) -> &'static str {
                match self {
                    $($name::$variant => $label),+
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.label())
            }
        }

        impl FromStr for $name {
            type Err = ParseError;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                let wanted = normalize_token(s);
                Self::ALL
                    .iter()
                    .copied()
                    .find(|v| normalize_token(v.label()) == wanted)
                    .ok_or_else(|| ParseError::UnknownLabel {
                        kind: $kind,
                        token: s.to_string(),
                    })
            }
        }

        impl Serialize for $name {
            fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
                serializer.serialize_str(self.label())
            }
        }

        impl<'de> Deserialize<'de> for $name {
            fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
                let s = String::deserialize(deserializer)?;
                s.parse().map_err(serde::de::Error::custom)
            }
        }
    };
}

labeled_enum! {
    /// Answer domain of the two interaction-frequency questions (Q1, Q2).
    FrequencyAnswer, "frequency answer" {
        Frequently => "Frequently",
        Occasionally => "Occasionally",
        NotAnymore => "Not Anymore",
        Never => "Never",
        DontRemember => "Don't Remember",
    }
}

labeled_enum! {
    /// Answer domain of the three abuse-perception questions (Q3..Q5).
    AgreementAnswer, "agreement answer" {
        Agree => "Agree",
        Disagree => "Disagree",
        DontKnow => "Don't Know",
    }
}

labeled_enum! {
    /// Action suggested by the rule table.
    ///
    /// `UnfriendOrSandbox` is only surfaced when the table runs with the
    /// sandbox option enabled; otherwise it degrades to `Unfriend`.
    Action, "action" {
        Unfriend => "Unfriend",
        UnfriendOrSandbox => "Unfriend/Sandbox",
        Restrict => "Restrict",
        Unfollow => "Unfollow",
        Nop => "NOP",
    }
}

labeled_enum! {
    /// What the user actually did with a suggestion.
    DecisionKind, "decision" {
        Unfriend => "unfriend",
        Sandbox => "sandbox",
        Restrict => "restrict",
        Unfollow => "unfollow",
        Ignore => "ignore",
    }
}

labeled_enum! {
    /// Fixed reasons a user may give for ignoring a suggestion. There is no
    /// free-text option.
    IgnoreReason, "ignore reason" {
        SuggestionMakesNoSense => "suggestion-makes-no-sense",
        AgreeButLater => "agree-but-later",
        AgreeButUnwilling => "agree-but-unwilling",
        FearOfBeingObserved => "fear-of-being-observed",
    }
}

impl IgnoreReason {
    /// Text shown in the ignore-reason prompt.
    pub fn prompt(self) -> &'static str {
        match self {
            IgnoreReason::SuggestionMakesNoSense => "This suggestion is wrong for this friend",
            IgnoreReason::AgreeButLater => "I agree, and will act on it at a later time",
            IgnoreReason::AgreeButUnwilling => "I agree, but I want to keep this friend anyway",
            IgnoreReason::FearOfBeingObserved => "I worry this friend would notice what I did",
        }
    }
}

/// An answer to any of the five questions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Answer {
    Frequency(FrequencyAnswer),
    Agreement(AgreementAnswer),
}

impl Answer {
    pub fn label(self) -> &'static str {
        match self {
            Answer::Frequency(a) => a.label(),
            Answer::Agreement(a) => a.label(),
        }
    }
}

impl fmt::Display for Answer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Which answer domain a question draws from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AnswerDomain {
    Frequency,
    Agreement,
}

impl AnswerDomain {
    pub fn for_question(question: u8) -> Result<Self, ParseError> {
        match question {
            1 | 2 => Ok(AnswerDomain::Frequency),
            3..=5 => Ok(AnswerDomain::Agreement),
            q => Err(ParseError::BadQuestion(q)),
        }
    }

    pub fn labels(self) -> Vec<&'static str> {
        match self {
            AnswerDomain::Frequency => FrequencyAnswer::ALL.iter().map(|a| a.label()).collect(),
            AnswerDomain::Agreement => AgreementAnswer::ALL.iter().map(|a| a.label()).collect(),
        }
    }

    pub fn contains(self, answer: Answer) -> bool {
        matches!(
            (self, answer),
            (AnswerDomain::Frequency, Answer::Frequency(_))
                | (AnswerDomain::Agreement, Answer::Agreement(_))
        )
    }
}

/// Question wording shown to participants, indexed 1..=5.
pub const QUESTION_TEXT: [&str; 5] = [
    "How often do you interact with this friend on Facebook?",
    "How often do you interact with this friend in real life?",
    "Would this friend misuse a sensitive photo that you upload?",
    "Would this friend misuse a status update that you post?",
    "Would this friend post offensive, misleading, false or malicious content?",
];

/// Parses an answer token for a given question (1-based).
///
/// Matching is case-insensitive with whitespace normalized. A token that
/// belongs to the other question's domain is a `DomainMismatch`, anything
/// else unrecognized is an `UnknownToken`.
pub fn parse_answer(question: u8, token: &str) -> Result<Answer, ParseError> {
    let domain = AnswerDomain::for_question(question)?;
    let freq = token.parse::<FrequencyAnswer>().ok();
    let agree = token.parse::<AgreementAnswer>().ok();
    match (domain, freq, agree) {
        (AnswerDomain::Frequency, Some(a), _) => Ok(Answer::Frequency(a)),
        (AnswerDomain::Agreement, _, Some(a)) => Ok(Answer::Agreement(a)),
        (_, None, None) => Err(ParseError::UnknownToken {
            token: token.to_string(),
        }),
        _ => Err(ParseError::DomainMismatch {
            question,
            token: token.to_string(),
        }),
    }
}

/// Answers to Q1..Q5 for one (user, friend) pair. All five are always
/// present.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ResponseSet {
    pub q1: FrequencyAnswer,
    pub q2: FrequencyAnswer,
    pub q3: AgreementAnswer,
    pub q4: AgreementAnswer,
    pub q5: AgreementAnswer,
}

impl ResponseSet {
    pub fn new(
        q1: FrequencyAnswer,
        q2: FrequencyAnswer,
        q3: AgreementAnswer,
        q4: AgreementAnswer,
        q5: AgreementAnswer,
    ) -> Self {
        ResponseSet { q1, q2, q3, q4, q5 }
    }

    /// Answer for question 1..=5.
    pub fn answer(&self, question: u8) -> Option<Answer> {
        Some(match question {
            1 => Answer::Frequency(self.q1),
            2 => Answer::Frequency(self.q2),
            3 => Answer::Agreement(self.q3),
            4 => Answer::Agreement(self.q4),
            5 => Answer::Agreement(self.q5),
            _ => return None,
        })
    }

    pub fn answers(&self) -> [Answer; 5] {
        [
            Answer::Frequency(self.q1),
            Answer::Frequency(self.q2),
            Answer::Agreement(self.q3),
            Answer::Agreement(self.q4),
            Answer::Agreement(self.q5),
        ]
    }

    /// Builds a response set from five answer tokens in question order.
    pub fn parse<S: AsRef<str>>(tokens: &[S; 5]) -> Result<Self, ParseError> {
        let freq = |q: u8| match parse_answer(q, tokens[q as usize - 1].as_ref())? {
            Answer::Frequency(a) => Ok(a),
            Answer::Agreement(_) => unreachable!("domain checked by parse_answer"),
        };
        let agree = |q: u8| match parse_answer(q, tokens[q as usize - 1].as_ref())? {
            Answer::Agreement(a) => Ok(a),
            Answer::Frequency(_) => unreachable!("domain checked by parse_answer"),
        };
        Ok(ResponseSet {
            q1: freq(1)?,
            q2: freq(2)?,
            q3: agree(3)?,
            q4: agree(4)?,
            q5: agree(5)?,
        })
    }

    /// Every one of the 5 * 5 * 3 * 3 * 3 = 675 possible response sets.
    pub fn enumerate() -> impl Iterator<Item = ResponseSet> {
        FrequencyAnswer::ALL.iter().flat_map(|&q1| {
            FrequencyAnswer::ALL.iter().flat_map(move |&q2| {
                AgreementAnswer::ALL.iter().flat_map(move |&q3| {
                    AgreementAnswer::ALL.iter().flat_map(move |&q4| {
                        AgreementAnswer::ALL
                            .iter()
                            .map(move |&q5| ResponseSet::new(q1, q2, q3, q4, q5))
                    })
                })
            })
        })
    }
}

impl fmt::Display for ResponseSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "({}, {}, {}, {}, {})",
            self.q1, self.q2, self.q3, self.q4, self.q5
        )
    }
}

/// A user's decision on a suggestion. An ignore always carries a reason.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawDecision", into = "RawDecision")]
pub struct Decision {
    kind: DecisionKind,
    ignore_reason: Option<IgnoreReason>,
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("an ignore decision requires a reason, and only an ignore may carry one")]
pub struct DecisionReasonError;

impl Decision {
    pub fn new(
        kind: DecisionKind,
        ignore_reason: Option<IgnoreReason>,
    ) -> Result<Self, DecisionReasonError> {
        if (kind == DecisionKind::Ignore) != ignore_reason.is_some() {
            return Err(DecisionReasonError);
        }
        Ok(Decision {
            kind,
            ignore_reason,
        })
    }

    pub fn accept(kind: DecisionKind) -> Self {
        assert!(kind != DecisionKind::Ignore, "use Decision::ignore");
        Decision {
            kind,
            ignore_reason: None,
        }
    }

    pub fn ignore(reason: IgnoreReason) -> Self {
        Decision {
            kind: DecisionKind::Ignore,
            ignore_reason: Some(reason),
        }
    }

    pub fn kind(&self) -> DecisionKind {
        self.kind
    }

    pub fn ignore_reason(&self) -> Option<IgnoreReason> {
        self.ignore_reason
    }
}

#[derive(Serialize, Deserialize)]
struct RawDecision {
    decision: DecisionKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    ignore_reason: Option<IgnoreReason>,
}

impl TryFrom<RawDecision> for Decision {
    type Error = DecisionReasonError;

    fn try_from(raw: RawDecision) -> Result<Self, Self::Error> {
        Decision::new(raw.decision, raw.ignore_reason)
    }
}

impl From<Decision> for RawDecision {
    fn from(d: Decision) -> Self {
        RawDecision {
            decision: d.kind,
            ignore_reason: d.ignore_reason,
        }
    }
}

/// Friendship edge plus the two directed story flows between a user and a
/// friend. A non-friend has both flows off.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RelationshipState {
    pub is_friend: bool,
    /// Friend's stories reach the user's news feed.
    pub user_sees_friend: bool,
    /// User's stories reach the friend's news feed.
    pub friend_sees_user: bool,
}

impl RelationshipState {
    pub const FRIENDS: RelationshipState = RelationshipState {
        is_friend: true,
        user_sees_friend: true,
        friend_sees_user: true,
    };

    pub fn is_valid(&self) -> bool {
        self.is_friend || (!self.user_sees_friend && !self.friend_sees_user)
    }

    /// Applies a decision. Total on valid states and idempotent; removing a
    /// flow that is already off is a no-op.
    pub fn apply(self, decision: DecisionKind) -> RelationshipState {
        match decision {
            DecisionKind::Unfollow => RelationshipState {
                user_sees_friend: false,
                ..self
            },
            DecisionKind::Restrict => RelationshipState {
                friend_sees_user: false,
                ..self
            },
            DecisionKind::Sandbox => RelationshipState {
                user_sees_friend: false,
                friend_sees_user: false,
                ..self
            },
            DecisionKind::Unfriend => RelationshipState {
                is_friend: false,
                user_sees_friend: false,
                friend_sees_user: false,
            },
            DecisionKind::Ignore => self,
        }
    }
}

/// Free-function form of [`RelationshipState::apply`].
pub fn apply_action(state: RelationshipState, decision: &Decision) -> RelationshipState {
    state.apply(decision.kind())
}
