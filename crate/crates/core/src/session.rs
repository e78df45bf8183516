//! Audit sessions.
//!
//! A session walks a queue of sampled friends (plus injected bogus probes in
//! questionnaire mode). Each friend ends in exactly one terminal state: no
//! suggestion, suggestion accepted, or suggestion ignored with a reason.
//!
//! Every state change is an event appended to the session log. The log is
//! written as JSON lines, one record per event, each carrying a `seq` and an
//! `event` tag:
//!
//! | event          | fields                                                              |
//! |----------------|---------------------------------------------------------------------|
//! | `created`      | session_id, participant_id, mode, seed, sample_size, attention_passed, sandbox_enabled, min_avg_response_seconds, attention_check_required, queue |
//! | `responses`    | friend_id, source (`answered`/`predicted`), responses, timings, predicted_decision |
//! | `suggestion`   | friend_id, action, matched_rule, reasons                            |
//! | `no-suggestion`| friend_id, cause (`nop`/`bogus`/`predicted-ignore`), matched_rule   |
//! | `decision`     | friend_id, decision, ignore_reason, seconds                         |
//! | `state-change` | friend_id, before, after                                            |
//! | `completed`    | (none)                                                              |
//!
//! Summaries are folds over the log, and [`AuditSession::replay`] rebuilds a
//! session from the input events of a log and checks that every derived
//! event comes out identical.

use std::collections::BTreeMap;
use std::fmt;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{
    Action, Decision, DecisionKind, IgnoreReason, ParseError, RelationshipState,
    ResponseSet,
};
use crate::features::{compute_features, FeatureError, SocialSnapshot};
use crate::learning::{ModelBundle, TargetName};
use crate::quality::{
    evaluate_participant, BogusResponse, ParticipantRecord, QualityConfig, QualityVerdict, Timing,
};
use crate::rules::RuleTable;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Questionnaire,
    Wild,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    InProgress,
    Complete,
}

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("participant {0:?} is not in the snapshot")]
    UnknownParticipant(String),
    #[error("participant has {available} friends, {required} required")]
    TooFewFriends { available: usize, required: usize },
    #[error("bogus friend id {0:?} collides with a real user")]
    BogusIdCollision(String),
    #[error("operation needs a {expected:?} session")]
    WrongMode { expected: Mode },
    #[error("session is complete")]
    SessionComplete,
    #[error("friend {got:?} is out of order; next is {}", .expected.as_deref().unwrap_or("nothing"))]
    OutOfOrder { expected: Option<String>, got: String },
    #[error("responses for {0:?} were already submitted")]
    DuplicateSubmission(String),
    #[error("friend {0:?} is not in this session's queue")]
    UnknownFriend(String),
    #[error("invalid timings: {0}")]
    InvalidTimings(String),
    #[error("no suggestion is pending for {0:?}")]
    NoPendingSuggestion(String),
    #[error("decision {decision} is not offered for a {suggested} suggestion")]
    IncompatibleDecision {
        suggested: Action,
        decision: DecisionKind,
    },
    #[error("an ignore decision needs a reason")]
    MissingIgnoreReason,
    #[error("only an ignore decision takes a reason")]
    UnexpectedIgnoreReason,
    #[error("no model for target {0}")]
    MissingModel(TargetName),
    #[error("predictions were already made for this session")]
    AlreadyPredicted,
    #[error("model produced an unusable label: {0}")]
    BadPrediction(#[from] ParseError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error("session is not complete")]
    SessionIncomplete,
    #[error("log record {seq}: {message}")]
    Log { seq: usize, message: String },
    #[error("replay diverged at record {seq}")]
    ReplayDiverged { seq: usize },
}

/// Decisions a user may take for each suggested action.
pub fn allowed_decisions(action: Action) -> &'static [DecisionKind] {
    use DecisionKind as D;
    match action {
        Action::Unfriend => &[D::Unfriend, D::Ignore],
        Action::UnfriendOrSandbox => &[D::Unfriend, D::Sandbox, D::Ignore],
        Action::Restrict => &[D::Restrict, D::Ignore],
        Action::Unfollow => &[D::Unfollow, D::Ignore],
        Action::Nop => &[],
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FriendEntry {
    pub friend_id: String,
    pub position: usize,
    pub bogus: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResponseSource {
    Answered,
    Predicted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoSuggestionCause {
    Nop,
    Bogus,
    PredictedIgnore,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "kebab-case")]
pub enum Event {
    Created {
        session_id: String,
        participant_id: String,
        mode: Mode,
        seed: u64,
        sample_size: usize,
        attention_passed: bool,
        sandbox_enabled: bool,
        min_avg_response_seconds: f64,
        attention_check_required: bool,
        queue: Vec<FriendEntry>,
    },
    Responses {
        friend_id: String,
        source: ResponseSource,
        responses: ResponseSet,
        #[serde(default)]
        timings: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        predicted_decision: Option<DecisionKind>,
    },
    Suggestion {
        friend_id: String,
        action: Action,
        matched_rule: usize,
        reasons: Vec<String>,
    },
    NoSuggestion {
        friend_id: String,
        cause: NoSuggestionCause,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        matched_rule: Option<usize>,
    },
    Decision {
        friend_id: String,
        decision: DecisionKind,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        ignore_reason: Option<IgnoreReason>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seconds: Option<f64>,
    },
    StateChange {
        friend_id: String,
        before: RelationshipState,
        after: RelationshipState,
    },
    Completed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub seq: usize,
    #[serde(flatten)]
    pub event: Event,
}

/// Suggestion surfaced to the user.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Suggestion {
    pub friend_id: String,
    pub action: Action,
    pub matched_rule: usize,
    pub reasons: Vec<String>,
    pub options: Vec<DecisionKind>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Outcome {
    NoSuggestion,
    Accepted,
    Ignored,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FriendProgress {
    pub entry: FriendEntry,
    pub responses: Option<ResponseSet>,
    pub predicted_decision: Option<DecisionKind>,
    pub suggestion: Option<Suggestion>,
    pub decision: Option<Decision>,
    pub timings: Vec<f64>,
    pub decision_seconds: Option<f64>,
    pub state: RelationshipState,
    pub outcome: Option<Outcome>,
}

impl FriendProgress {
    pub fn suggestion_shown(&self) -> bool {
        self.suggestion.is_some()
    }
}

/// Parameters of a new session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionRequest {
    pub session_id: String,
    pub participant_id: String,
    pub mode: Mode,
    pub sample_size: usize,
    pub seed: u64,
    #[serde(default = "default_true")]
    pub attention_passed: bool,
}

fn default_true() -> bool {
    true
}

pub const DEFAULT_SAMPLE_SIZE: usize = 20;

/// Policy shared by all sessions of a deployment.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionConfig {
    pub table: RuleTable,
    pub quality: QualityConfig,
    /// Minimum friend count a participant needs, when enforced.
    pub min_friends: Option<usize>,
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig {
            table: RuleTable::canonical(true),
            quality: QualityConfig::default(),
            min_friends: None,
        }
    }
}

/// What the client should show next.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum NextStep {
    Questionnaire {
        friend_id: String,
        position: usize,
        questions: Vec<QuestionPrompt>,
    },
    Suggestion(Suggestion),
    AwaitingPredictions,
    Complete { summary: SessionSummary },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct QuestionPrompt {
    pub index: u8,
    pub text: &'static str,
    pub answers: Vec<&'static str>,
}

pub fn questionnaire() -> Vec<QuestionPrompt> {
    (1..=5u8)
        .map(|q| QuestionPrompt {
            index: q,
            text: crate::domain::QUESTION_TEXT[q as usize - 1],
            answers: crate::domain::AnswerDomain::for_question(q)
                .expect("1..=5")
                .labels(),
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct AuditSession {
    session_id: String,
    participant_id: String,
    mode: Mode,
    table: RuleTable,
    quality: QualityConfig,
    attention_passed: bool,
    friends: Vec<FriendProgress>,
    cursor: usize,
    predicted: bool,
    status: Status,
    log: Vec<LogRecord>,
}

impl AuditSession {
    /// Samples `sample_size` friends uniformly without replacement and, in
    /// questionnaire mode, inserts the configured bogus friends at seeded
    /// random positions.
    pub fn create(
        snapshot: &SocialSnapshot,
        request: &SessionRequest,
        config: &SessionConfig,
    ) -> Result<Self, SessionError> {
        let user = snapshot
            .user(&request.participant_id)
            .ok_or_else(|| SessionError::UnknownParticipant(request.participant_id.clone()))?;
        let friends: Vec<&String> = user.friend_ids.iter().collect();
        let required = request
            .sample_size
            .max(config.min_friends.unwrap_or(0));
        if friends.len() < required {
            return Err(SessionError::TooFewFriends {
                available: friends.len(),
                required,
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(request.seed);
        let mut queue: Vec<(String, bool)> = sample(&mut rng, friends.len(), request.sample_size)
            .into_iter()
            .map(|i| (friends[i].clone(), false))
            .collect();
        if request.mode == Mode::Questionnaire {
            for bogus in &config.quality.bogus_friend_ids {
                if snapshot.user(bogus).is_some() {
                    return Err(SessionError::BogusIdCollision(bogus.clone()));
                }
                let at = rng.random_range(0..=queue.len());
                queue.insert(at, (bogus.clone(), true));
            }
        }
        let queue = queue
            .into_iter()
            .enumerate()
            .map(|(position, (friend_id, bogus))| FriendEntry {
                friend_id,
                position,
                bogus,
            })
            .collect();
        let created = Event::Created {
            session_id: request.session_id.clone(),
            participant_id: request.participant_id.clone(),
            mode: request.mode,
            seed: request.seed,
            sample_size: request.sample_size,
            attention_passed: request.attention_passed,
            sandbox_enabled: config.table.sandbox_enabled(),
            min_avg_response_seconds: config.quality.min_avg_response_seconds,
            attention_check_required: config.quality.attention_check_required,
            queue,
        };
        Self::from_created(created, &config.table)
    }

    fn from_created(created: Event, table: &RuleTable) -> Result<Self, SessionError> {
        let Event::Created {
            session_id,
            participant_id,
            mode,
            attention_passed,
            sandbox_enabled,
            min_avg_response_seconds,
            attention_check_required,
            queue,
            ..
        } = &created
        else {
            return Err(SessionError::Log {
                seq: 0,
                message: "log must start with a created event".into(),
            });
        };
        let quality = QualityConfig {
            min_avg_response_seconds: *min_avg_response_seconds,
            bogus_friend_ids: queue
                .iter()
                .filter(|e| e.bogus)
                .map(|e| e.friend_id.clone())
                .collect(),
            attention_check_required: *attention_check_required,
        };
        let mut session = AuditSession {
            session_id: session_id.clone(),
            participant_id: participant_id.clone(),
            mode: *mode,
            table: table.clone().with_sandbox(*sandbox_enabled),
            quality,
            attention_passed: *attention_passed,
            friends: queue
                .iter()
                .map(|entry| FriendProgress {
                    entry: entry.clone(),
                    responses: None,
                    predicted_decision: None,
                    suggestion: None,
                    decision: None,
                    timings: Vec::new(),
                    decision_seconds: None,
                    state: RelationshipState::FRIENDS,
                    outcome: None,
                })
                .collect(),
            cursor: 0,
            predicted: false,
            status: Status::InProgress,
            log: Vec::new(),
        };
        session.push(created);
        if session.mode == Mode::Questionnaire {
            session.advance();
        }
        Ok(session)
    }

    pub fn id(&self) -> &str {
        &self.session_id
    }

    pub fn participant_id(&self) -> &str {
        &self.participant_id
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn status(&self) -> Status {
        self.status
    }

    pub fn friends(&self) -> &[FriendProgress] {
        &self.friends
    }

    pub fn log(&self) -> &[LogRecord] {
        &self.log
    }

    pub fn queue_len(&self) -> usize {
        self.friends.len()
    }

    pub fn log_jsonl(&self) -> String {
        log_to_jsonl(&self.log)
    }

    /// Friend whose turn it is, if any.
    pub fn current_friend(&self) -> Option<&FriendProgress> {
        self.friends.get(self.cursor)
    }

    fn push(&mut self, event: Event) {
        let seq = self.log.len();
        self.log.push(LogRecord { seq, event });
    }

    /// Moves the cursor to the first friend without a terminal outcome.
    fn advance(&mut self) {
        while self.cursor < self.friends.len() && self.friends[self.cursor].outcome.is_some() {
            self.cursor += 1;
        }
        if self.cursor == self.friends.len() && self.status == Status::InProgress {
            self.status = Status::Complete;
            self.push(Event::Completed);
        }
    }

    fn ensure_open(&self) -> Result<(), SessionError> {
        match self.status {
            Status::Complete => Err(SessionError::SessionComplete),
            Status::InProgress => Ok(()),
        }
    }

    fn index_of(&self, friend_id: &str) -> Result<usize, SessionError> {
        self.friends
            .iter()
            .position(|f| f.entry.friend_id == friend_id)
            .ok_or_else(|| SessionError::UnknownFriend(friend_id.to_string()))
    }

    /// Records questionnaire answers for the friend at the head of the
    /// queue. Returns a suggestion when the rule table yields an action;
    /// bogus friends never get one.
    pub fn submit_responses(
        &mut self,
        friend_id: &str,
        responses: ResponseSet,
        timings: Vec<f64>,
    ) -> Result<Option<Suggestion>, SessionError> {
        if self.mode != Mode::Questionnaire {
            return Err(SessionError::WrongMode {
                expected: Mode::Questionnaire,
            });
        }
        self.ensure_open()?;
        let idx = self.index_of(friend_id)?;
        if self.friends[idx].responses.is_some() {
            return Err(SessionError::DuplicateSubmission(friend_id.to_string()));
        }
        if idx != self.cursor {
            return Err(SessionError::OutOfOrder {
                expected: self.current_friend().map(|f| f.entry.friend_id.clone()),
                got: friend_id.to_string(),
            });
        }
        if timings.len() != 5 || timings.iter().any(|t| t.is_nan() || *t <= 0.0) {
            return Err(SessionError::InvalidTimings(
                "expected five positive per-question timings".into(),
            ));
        }
        self.push(Event::Responses {
            friend_id: friend_id.to_string(),
            source: ResponseSource::Answered,
            responses,
            timings: timings.clone(),
            predicted_decision: None,
        });
        let friend = &mut self.friends[idx];
        friend.responses = Some(responses);
        friend.timings = timings;
        Ok(self.conclude_responses(idx, None))
    }

    /// Runs the rule table on stored responses, logs the outcome and
    /// advances the queue when nothing is pending.
    fn conclude_responses(
        &mut self,
        idx: usize,
        predicted_decision: Option<DecisionKind>,
    ) -> Option<Suggestion> {
        let friend_id = self.friends[idx].entry.friend_id.clone();
        let responses = self.friends[idx].responses.expect("responses stored");
        let no_suggestion = |cause, matched_rule| Event::NoSuggestion {
            friend_id: friend_id.clone(),
            cause,
            matched_rule,
        };
        let outcome = if self.friends[idx].entry.bogus {
            Err(no_suggestion(NoSuggestionCause::Bogus, None))
        } else {
            let verdict = self
                .table
                .evaluate(&responses)
                .expect("session tables are total");
            if verdict.action == Action::Nop {
                Err(no_suggestion(NoSuggestionCause::Nop, Some(verdict.matched_rule)))
            } else if predicted_decision == Some(DecisionKind::Ignore) {
                Err(no_suggestion(
                    NoSuggestionCause::PredictedIgnore,
                    Some(verdict.matched_rule),
                ))
            } else {
                Ok(Suggestion {
                    friend_id: friend_id.clone(),
                    action: verdict.action,
                    matched_rule: verdict.matched_rule,
                    reasons: verdict.reasons,
                    options: allowed_decisions(verdict.action).to_vec(),
                })
            }
        };
        match outcome {
            Ok(suggestion) => {
                self.push(Event::Suggestion {
                    friend_id,
                    action: suggestion.action,
                    matched_rule: suggestion.matched_rule,
                    reasons: suggestion.reasons.clone(),
                });
                self.friends[idx].suggestion = Some(suggestion.clone());
                Some(suggestion)
            }
            Err(event) => {
                self.push(event);
                self.friends[idx].outcome = Some(Outcome::NoSuggestion);
                if self.mode == Mode::Questionnaire {
                    self.advance();
                }
                None
            }
        }
    }

    /// Applies the user's decision on the pending suggestion and returns the
    /// updated relationship state.
    pub fn submit_decision(
        &mut self,
        friend_id: &str,
        kind: DecisionKind,
        ignore_reason: Option<IgnoreReason>,
        seconds: Option<f64>,
    ) -> Result<RelationshipState, SessionError> {
        self.ensure_open()?;
        let idx = self.index_of(friend_id)?;
        let pending = idx == self.cursor
            && self.friends[idx].suggestion.is_some()
            && self.friends[idx].outcome.is_none();
        if !pending {
            return Err(SessionError::NoPendingSuggestion(friend_id.to_string()));
        }
        let action = self.friends[idx]
            .suggestion
            .as_ref()
            .expect("pending")
            .action;
        if !allowed_decisions(action).contains(&kind) {
            return Err(SessionError::IncompatibleDecision {
                suggested: action,
                decision: kind,
            });
        }
        let decision = match (kind, ignore_reason) {
            (DecisionKind::Ignore, None) => return Err(SessionError::MissingIgnoreReason),
            (DecisionKind::Ignore, Some(reason)) => Decision::ignore(reason),
            (_, Some(_)) => return Err(SessionError::UnexpectedIgnoreReason),
            (k, None) => Decision::accept(k),
        };
        if let Some(s) = seconds {
            if s.is_nan() || s <= 0.0 {
                return Err(SessionError::InvalidTimings(
                    "decision time must be positive".into(),
                ));
            }
        }

        let before = self.friends[idx].state;
        let after = before.apply(kind);
        self.push(Event::Decision {
            friend_id: friend_id.to_string(),
            decision: kind,
            ignore_reason,
            seconds,
        });
        self.push(Event::StateChange {
            friend_id: friend_id.to_string(),
            before,
            after,
        });
        let friend = &mut self.friends[idx];
        friend.decision = Some(decision);
        friend.decision_seconds = seconds;
        friend.state = after;
        friend.outcome = Some(if kind == DecisionKind::Ignore {
            Outcome::Ignored
        } else {
            Outcome::Accepted
        });
        self.advance();
        Ok(after)
    }

    fn apply_prediction(
        &mut self,
        idx: usize,
        responses: ResponseSet,
        predicted_decision: DecisionKind,
    ) -> Option<Suggestion> {
        let friend_id = self.friends[idx].entry.friend_id.clone();
        self.push(Event::Responses {
            friend_id,
            source: ResponseSource::Predicted,
            responses,
            timings: Vec::new(),
            predicted_decision: Some(predicted_decision),
        });
        let friend = &mut self.friends[idx];
        friend.responses = Some(responses);
        friend.predicted_decision = Some(predicted_decision);
        self.conclude_responses(idx, Some(predicted_decision))
    }

    /// Autonomous mode: predicts answers and the user's decision for every
    /// queued friend and surfaces a suggestion only when the rule table
    /// yields an action and the user is not predicted to ignore it.
    ///
    /// Features live only for the duration of the two predictions; the log
    /// records predicted labels, never snapshot fields.
    pub fn run_wild(
        &mut self,
        models: &ModelBundle,
        snapshot: &SocialSnapshot,
    ) -> Result<Vec<(String, Suggestion)>, SessionError> {
        if self.mode != Mode::Wild {
            return Err(SessionError::WrongMode {
                expected: Mode::Wild,
            });
        }
        self.ensure_open()?;
        if self.predicted {
            return Err(SessionError::AlreadyPredicted);
        }
        if let Some(missing) = models.missing().first() {
            return Err(SessionError::MissingModel(*missing));
        }
        let model = |t: TargetName| models.get(t).expect("checked above");

        // predict everything before touching the log so a failure leaves
        // the session unchanged
        let mut predictions = Vec::with_capacity(self.friends.len());
        for friend in &self.friends {
            let features =
                compute_features(snapshot, &self.participant_id, &friend.entry.friend_id)?;
            let label = |t: TargetName| model(t).predict(&features).label;
            let responses =
                ResponseSet::parse(&[label(TargetName::Q1), label(TargetName::Q2), label(TargetName::Q3), label(TargetName::Q4), label(TargetName::Q5)])?;
            let decision: DecisionKind = label(TargetName::Decision).parse()?;
            predictions.push((responses, decision));
        }

        self.predicted = true;
        let mut surfaced = Vec::new();
        for (idx, (responses, decision)) in predictions.into_iter().enumerate() {
            if let Some(s) = self.apply_prediction(idx, responses, decision) {
                surfaced.push((s.friend_id.clone(), s));
            }
        }
        self.advance();
        Ok(surfaced)
    }

    pub fn next_step(&self) -> NextStep {
        if self.status == Status::Complete {
            return NextStep::Complete {
                summary: SessionSummary::from_session(self),
            };
        }
        if self.mode == Mode::Wild && !self.predicted {
            return NextStep::AwaitingPredictions;
        }
        let friend = &self.friends[self.cursor];
        match &friend.suggestion {
            Some(s) => NextStep::Suggestion(s.clone()),
            None => NextStep::Questionnaire {
                friend_id: friend.entry.friend_id.clone(),
                position: friend.entry.position,
                questions: questionnaire(),
            },
        }
    }

    /// Participant record for quality screening. Timings cover both the
    /// questionnaire and the decision screens.
    pub fn participant_record(&self) -> ParticipantRecord {
        let mut timings = Vec::new();
        let mut bogus_responses = Vec::new();
        for f in &self.friends {
            for (q, &seconds) in f.timings.iter().enumerate() {
                timings.push(Timing {
                    friend_id: f.entry.friend_id.clone(),
                    question: Some(q as u8 + 1),
                    seconds,
                });
            }
            if let Some(seconds) = f.decision_seconds {
                timings.push(Timing {
                    friend_id: f.entry.friend_id.clone(),
                    question: None,
                    seconds,
                });
            }
            if f.entry.bogus {
                if let Some(responses) = f.responses {
                    bogus_responses.push(BogusResponse {
                        friend_id: f.entry.friend_id.clone(),
                        responses,
                    });
                }
            }
        }
        ParticipantRecord {
            id: self.participant_id.clone(),
            attention_passed: self.attention_passed,
            timings,
            bogus_responses,
        }
    }

    pub fn quality_verdict(&self) -> QualityVerdict {
        evaluate_participant(&self.participant_record(), &self.quality)
    }

    pub fn summary(&self) -> Result<SessionSummary, SessionError> {
        if self.status != Status::Complete {
            return Err(SessionError::SessionIncomplete);
        }
        Ok(SessionSummary::from_session(self))
    }

    /// Rebuilds a session from a log by re-running its input events
    /// (responses, predictions and decisions) through the pipeline. Fails
    /// unless the regenerated log equals the given one record for record.
    pub fn replay(log: &[LogRecord], table: &RuleTable) -> Result<Self, SessionError> {
        let first = log.first().ok_or(SessionError::Log {
            seq: 0,
            message: "empty log".into(),
        })?;
        let mut session = Self::from_created(first.event.clone(), table)?;
        for record in &log[1..] {
            let result = match &record.event {
                Event::Responses {
                    friend_id,
                    source: ResponseSource::Answered,
                    responses,
                    timings,
                    ..
                } => session
                    .submit_responses(friend_id, *responses, timings.clone())
                    .map(|_| ()),
                Event::Responses {
                    friend_id,
                    source: ResponseSource::Predicted,
                    responses,
                    predicted_decision,
                    ..
                } => {
                    let decision = predicted_decision.ok_or(SessionError::Log {
                        seq: record.seq,
                        message: "predicted responses without a predicted decision".into(),
                    })?;
                    let idx = session.index_of(friend_id)?;
                    session.predicted = true;
                    session.apply_prediction(idx, *responses, decision);
                    if idx + 1 == session.friends.len() {
                        session.advance();
                    }
                    Ok(())
                }
                Event::Decision {
                    friend_id,
                    decision,
                    ignore_reason,
                    seconds,
                } => session
                    .submit_decision(friend_id, *decision, *ignore_reason, *seconds)
                    .map(|_| ()),
                // a wild session over an empty queue completes with no predictions
                Event::Completed if session.mode == Mode::Wild && !session.predicted => {
                    session.predicted = true;
                    session.advance();
                    Ok(())
                }
                _ => Ok(()),
            };
            result.map_err(|e| SessionError::Log {
                seq: record.seq,
                message: e.to_string(),
            })?;
        }
        if let Some(seq) = (0..log.len().max(session.log.len()))
            .find(|&i| log.get(i) != session.log.get(i))
        {
            return Err(SessionError::ReplayDiverged { seq });
        }
        Ok(session)
    }
}

pub fn log_to_jsonl(log: &[LogRecord]) -> String {
    let mut out = String::new();
    for record in log {
        out.push_str(&serde_json::to_string(record).expect("log records serialize"));
        out.push('\n');
    }
    out
}

pub fn parse_log(text: &str) -> Result<Vec<LogRecord>, SessionError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, line)| {
            serde_json::from_str(line).map_err(|e| SessionError::Log {
                seq: n,
                message: e.to_string(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionTally {
    pub action: Action,
    pub recommended: usize,
    pub accepted: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SessionSummary {
    /// One row per suggestible action.
    pub actions: Vec<ActionTally>,
    pub ignore_reasons: BTreeMap<IgnoreReason, usize>,
    pub total_recommended: usize,
    pub total_accepted: usize,
    pub quality: Option<QualityVerdict>,
}

const SUGGESTIBLE: [Action; 4] = [
    Action::Unfriend,
    Action::UnfriendOrSandbox,
    Action::Restrict,
    Action::Unfollow,
];

impl SessionSummary {
    /// Tallies suggestions and decisions from a log. Quality is left unset.
    pub fn from_log(log: &[LogRecord]) -> Self {
        let mut suggested: BTreeMap<&str, Action> = BTreeMap::new();
        let mut rows: Vec<ActionTally> = SUGGESTIBLE
            .iter()
            .map(|&action| ActionTally {
                action,
                recommended: 0,
                accepted: 0,
            })
            .collect();
        let mut ignore_reasons: BTreeMap<IgnoreReason, usize> =
            IgnoreReason::ALL.iter().map(|&r| (r, 0)).collect();
        let row = |rows: &mut Vec<ActionTally>, action: Action| -> Option<usize> {
            rows.iter().position(|r| r.action == action)
        };
        for record in log {
            match &record.event {
                Event::Suggestion {
                    friend_id, action, ..
                } => {
                    suggested.insert(friend_id, *action);
                    if let Some(i) = row(&mut rows, *action) {
                        rows[i].recommended += 1;
                    }
                }
                Event::Decision {
                    friend_id,
                    decision,
                    ignore_reason,
                    ..
                } => {
                    if *decision == DecisionKind::Ignore {
                        if let Some(r) = ignore_reason {
                            *ignore_reasons.entry(*r).or_default() += 1;
                        }
                    } else if let Some(action) = suggested.get(friend_id.as_str()) {
                        if let Some(i) = row(&mut rows, *action) {
                            rows[i].accepted += 1;
                        }
                    }
                }
                _ => {}
            }
        }
        SessionSummary {
            total_recommended: rows.iter().map(|r| r.recommended).sum(),
            total_accepted: rows.iter().map(|r| r.accepted).sum(),
            actions: rows,
            ignore_reasons,
            quality: None,
        }
    }

    pub fn from_session(session: &AuditSession) -> Self {
        SessionSummary {
            quality: Some(session.quality_verdict()),
            ..Self::from_log(session.log())
        }
    }

    pub fn row(&self, action: Action) -> Option<&ActionTally> {
        self.actions.iter().find(|r| r.action == action)
    }
}

impl fmt::Display for SessionSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<18} {:>11} {:>8}", "action", "recommended", "accepted")?;
        for r in &self.actions {
            writeln!(f, "{:<18} {:>11} {:>8}", r.action.label(), r.recommended, r.accepted)?;
        }
        writeln!(
            f,
            "{:<18} {:>11} {:>8}",
            "total", self.total_recommended, self.total_accepted
        )?;
        for (reason, n) in &self.ignore_reasons {
            writeln!(f, "ignored ({reason}): {n}")?;
        }
        if let Some(q) = &self.quality {
            if q.retained {
                writeln!(f, "quality: retained")?;
            } else {
                writeln!(f, "quality: discarded {:?}", q.failed_checks)?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{AgreementAnswer as A, FrequencyAnswer as F};
    use crate::features::UserProfile;

    fn snapshot(friends: usize) -> SocialSnapshot {
        let mut users = vec![UserProfile::new("me")];
        for i in 0..friends {
            let mut f = UserProfile::new(format!("f{i:02}"));
            f.friend_ids.insert("me".into());
            users[0].friend_ids.insert(f.id.clone());
            users.push(f);
        }
        SocialSnapshot::new(users, vec![], vec![]).unwrap()
    }

    fn request(mode: Mode, sample_size: usize, seed: u64) -> SessionRequest {
        SessionRequest {
            session_id: "s1".into(),
            participant_id: "me".into(),
            mode,
            sample_size,
            seed,
            attention_passed: true,
        }
    }

    const T5: [f64; 5] = [4.0, 4.0, 4.0, 4.0, 4.0];
    const NOP: ResponseSet = ResponseSet {
        q1: F::Frequently,
        q2: F::Frequently,
        q3: A::Disagree,
        q4: A::Disagree,
        q5: A::Disagree,
    };
    const UNFOLLOW: ResponseSet = ResponseSet {
        q1: F::Occasionally,
        q2: F::Frequently,
        q3: A::Disagree,
        q4: A::Disagree,
        q5: A::Agree,
    };
    const STRANGER: ResponseSet = ResponseSet {
        q1: F::Never,
        q2: F::Never,
        q3: A::Disagree,
        q4: A::Disagree,
        q5: A::Disagree,
    };

    #[test]
    fn queue_has_sample_plus_bogus() {
        let s = AuditSession::create(&snapshot(30), &request(Mode::Questionnaire, 20, 7), &SessionConfig::default()).unwrap();
        assert_eq!(s.queue_len(), 23);
        assert_eq!(s.friends().iter().filter(|f| f.entry.bogus).count(), 3);
        let again = AuditSession::create(&snapshot(30), &request(Mode::Questionnaire, 20, 7), &SessionConfig::default()).unwrap();
        assert_eq!(s.log(), again.log());
    }

    #[test]
    fn too_few_friends() {
        let err = AuditSession::create(&snapshot(30), &request(Mode::Questionnaire, 31, 1), &SessionConfig::default()).unwrap_err();
        assert!(matches!(err, SessionError::TooFewFriends { available: 30, required: 31 }));
        let config = SessionConfig {
            min_friends: Some(30),
            ..Default::default()
        };
        let err = AuditSession::create(&snapshot(25), &request(Mode::Questionnaire, 20, 1), &config).unwrap_err();
        assert!(matches!(err, SessionError::TooFewFriends { required: 30, .. }));
    }

    #[test]
    fn wild_mode_injects_no_bogus() {
        let s = AuditSession::create(&snapshot(30), &request(Mode::Wild, 30, 2), &SessionConfig::default()).unwrap();
        assert_eq!(s.queue_len(), 30);
        assert_eq!(s.next_step(), NextStep::AwaitingPredictions);
    }

    fn run_to_first_real(s: &mut AuditSession) -> String {
        loop {
            let f = s.current_friend().unwrap().clone();
            if f.entry.bogus {
                s.submit_responses(&f.entry.friend_id, STRANGER, T5.to_vec()).unwrap();
            } else {
                return f.entry.friend_id;
            }
        }
    }

    #[test]
    fn rule_fifteen_suggests_unfollow() {
        let mut s = AuditSession::create(&snapshot(5), &request(Mode::Questionnaire, 5, 3), &SessionConfig::default()).unwrap();
        let id = run_to_first_real(&mut s);
        let sug = s.submit_responses(&id, UNFOLLOW, T5.to_vec()).unwrap().unwrap();
        assert_eq!(sug.action, Action::Unfollow);
        assert_eq!(sug.matched_rule, 15);
        assert!(!sug.reasons.is_empty());
        assert_eq!(sug.options, vec![DecisionKind::Unfollow, DecisionKind::Ignore]);
        // queue does not move while a suggestion is pending
        assert_eq!(s.current_friend().unwrap().entry.friend_id, id);
    }

    #[test]
    fn nop_advances_queue() {
        let mut s = AuditSession::create(&snapshot(5), &request(Mode::Questionnaire, 5, 3), &SessionConfig::default()).unwrap();
        let id = run_to_first_real(&mut s);
        assert!(s.submit_responses(&id, NOP, T5.to_vec()).unwrap().is_none());
        assert_ne!(s.current_friend().unwrap().entry.friend_id, id);
    }

    #[test]
    fn bogus_friends_never_get_suggestions() {
        let mut s = AuditSession::create(&snapshot(3), &request(Mode::Questionnaire, 3, 9), &SessionConfig::default()).unwrap();
        while s.status() == Status::InProgress {
            let f = s.current_friend().unwrap().clone();
            let got = s.submit_responses(&f.entry.friend_id, STRANGER, T5.to_vec()).unwrap();
            if f.entry.bogus {
                assert!(got.is_none());
            } else {
                s.submit_decision(&f.entry.friend_id, DecisionKind::Sandbox, None, Some(2.0)).unwrap();
            }
        }
        for f in s.friends() {
            assert_eq!(f.suggestion_shown(), !f.entry.bogus);
        }
    }

    #[test]
    fn sandbox_decision_keeps_friendship() {
        let mut s = AuditSession::create(&snapshot(5), &request(Mode::Questionnaire, 5, 3), &SessionConfig::default()).unwrap();
        let id = run_to_first_real(&mut s);
        let sug = s.submit_responses(&id, STRANGER, T5.to_vec()).unwrap().unwrap();
        assert_eq!(sug.action, Action::UnfriendOrSandbox);
        let state = s.submit_decision(&id, DecisionKind::Sandbox, None, None).unwrap();
        assert_eq!(
            state,
            RelationshipState {
                is_friend: true,
                user_sees_friend: false,
                friend_sees_user: false
            }
        );
    }

    #[test]
    fn decision_errors() {
        let config = SessionConfig {
            table: RuleTable::canonical(false),
            ..Default::default()
        };
        let mut s = AuditSession::create(&snapshot(5), &request(Mode::Questionnaire, 5, 3), &config).unwrap();
        let id = run_to_first_real(&mut s);
        assert!(matches!(
            s.submit_decision(&id, DecisionKind::Unfriend, None, None),
            Err(SessionError::NoPendingSuggestion(_))
        ));
        let sug = s.submit_responses(&id, STRANGER, T5.to_vec()).unwrap().unwrap();
        assert_eq!(sug.action, Action::Unfriend);
        assert!(matches!(
            s.submit_decision(&id, DecisionKind::Ignore, None, None),
            Err(SessionError::MissingIgnoreReason)
        ));
        assert!(matches!(
            s.submit_decision(&id, DecisionKind::Sandbox, None, None),
            Err(SessionError::IncompatibleDecision { .. })
        ));
        assert!(matches!(
            s.submit_decision(&id, DecisionKind::Unfriend, Some(IgnoreReason::AgreeButLater), None),
            Err(SessionError::UnexpectedIgnoreReason)
        ));
        assert!(matches!(
            s.submit_responses(&id, STRANGER, T5.to_vec()),
            Err(SessionError::DuplicateSubmission(_))
        ));
        s.submit_decision(&id, DecisionKind::Ignore, Some(IgnoreReason::FearOfBeingObserved), None)
            .unwrap();
    }

    #[test]
    fn restrict_rejects_unfollow() {
        let mut s = AuditSession::create(&snapshot(5), &request(Mode::Questionnaire, 5, 3), &SessionConfig::default()).unwrap();
        let id = run_to_first_real(&mut s);
        let restrict = ResponseSet::new(F::Frequently, F::Frequently, A::Agree, A::Agree, A::Disagree);
        assert_eq!(s.submit_responses(&id, restrict, T5.to_vec()).unwrap().unwrap().action, Action::Restrict);
        assert!(matches!(
            s.submit_decision(&id, DecisionKind::Unfollow, None, None),
            Err(SessionError::IncompatibleDecision { suggested: Action::Restrict, decision: DecisionKind::Unfollow })
        ));
    }

    #[test]
    fn out_of_order_and_unknown() {
        let mut s = AuditSession::create(&snapshot(5), &request(Mode::Questionnaire, 5, 3), &SessionConfig::default()).unwrap();
        let later = s.friends()[4].entry.friend_id.clone();
        assert!(matches!(
            s.submit_responses(&later, NOP, T5.to_vec()),
            Err(SessionError::OutOfOrder { .. })
        ));
        assert!(matches!(
            s.submit_responses("nobody", NOP, T5.to_vec()),
            Err(SessionError::UnknownFriend(_))
        ));
        let head = s.current_friend().unwrap().entry.friend_id.clone();
        assert!(matches!(
            s.submit_responses(&head, NOP, vec![1.0; 4]),
            Err(SessionError::InvalidTimings(_))
        ));
    }

    #[test]
    fn summary_requires_completion_and_counts_decisions() {
        let mut s = AuditSession::create(&snapshot(4), &request(Mode::Questionnaire, 4, 5), &SessionConfig::default()).unwrap();
        assert!(matches!(s.summary(), Err(SessionError::SessionIncomplete)));
        let mut real = 0;
        while s.status() == Status::InProgress {
            let f = s.current_friend().unwrap().clone();
            if f.entry.bogus {
                s.submit_responses(&f.entry.friend_id, STRANGER, T5.to_vec()).unwrap();
                continue;
            }
            real += 1;
            s.submit_responses(&f.entry.friend_id, UNFOLLOW, T5.to_vec()).unwrap();
            if real % 2 == 0 {
                s.submit_decision(&f.entry.friend_id, DecisionKind::Unfollow, None, Some(3.0)).unwrap();
            } else {
                s.submit_decision(&f.entry.friend_id, DecisionKind::Ignore, Some(IgnoreReason::AgreeButLater), Some(3.0))
                    .unwrap();
            }
        }
        let summary = s.summary().unwrap();
        let row = summary.row(Action::Unfollow).unwrap();
        assert_eq!((row.recommended, row.accepted), (4, 2));
        assert_eq!(summary.ignore_reasons[&IgnoreReason::AgreeButLater], 2);
        assert!(summary.quality.as_ref().unwrap().retained);
        assert!(matches!(s.next_step(), NextStep::Complete { .. }));
        assert!(matches!(
            s.submit_responses("f00", NOP, T5.to_vec()),
            Err(SessionError::SessionComplete)
        ));
    }

    #[test]
    fn empty_queue_completes_immediately() {
        let config = SessionConfig {
            quality: QualityConfig {
                bogus_friend_ids: Default::default(),
                ..Default::default()
            },
            ..Default::default()
        };
        let s = AuditSession::create(&snapshot(3), &request(Mode::Questionnaire, 0, 1), &config).unwrap();
        assert_eq!(s.status(), Status::Complete);
        let summary = s.summary().unwrap();
        assert!(summary.actions.iter().all(|r| r.recommended == 0 && r.accepted == 0));
    }

    #[test]
    fn bogus_collision_is_rejected() {
        let config = SessionConfig {
            quality: QualityConfig {
                bogus_friend_ids: ["f01".to_string()].into(),
                ..Default::default()
            },
            ..Default::default()
        };
        assert!(matches!(
            AuditSession::create(&snapshot(3), &request(Mode::Questionnaire, 2, 1), &config),
            Err(SessionError::BogusIdCollision(_))
        ));
    }

    #[test]
    fn log_round_trips_and_replays() {
        let mut s = AuditSession::create(&snapshot(6), &request(Mode::Questionnaire, 6, 11), &SessionConfig::default()).unwrap();
        while s.status() == Status::InProgress {
            let f = s.current_friend().unwrap().clone();
            let r = if f.entry.bogus { STRANGER } else { UNFOLLOW };
            if s.submit_responses(&f.entry.friend_id, r, T5.to_vec()).unwrap().is_some() {
                s.submit_decision(&f.entry.friend_id, DecisionKind::Unfollow, None, Some(1.5)).unwrap();
            }
        }
        let text = s.log_jsonl();
        let parsed = parse_log(&text).unwrap();
        assert_eq!(parsed, s.log());
        let replayed = AuditSession::replay(&parsed, &RuleTable::canonical(true)).unwrap();
        assert_eq!(replayed.log_jsonl(), text);

        let mut tampered = parsed.clone();
        if let Some(LogRecord { event: Event::Suggestion { matched_rule, .. }, .. }) =
            tampered.iter_mut().find(|r| matches!(r.event, Event::Suggestion { .. }))
        {
            *matched_rule = 3;
        }
        assert!(matches!(
            AuditSession::replay(&tampered, &RuleTable::canonical(true)),
            Err(SessionError::ReplayDiverged { .. })
        ));
    }

    #[test]
    fn decision_compatibility_is_exhaustive() {
        for &action in Action::ALL {
            for &kind in DecisionKind::ALL {
                let allowed = allowed_decisions(action).contains(&kind);
                if action == Action::Nop {
                    assert!(!allowed);
                }
                if kind == DecisionKind::Ignore && action != Action::Nop {
                    assert!(allowed);
                }
            }
        }
    }
}
