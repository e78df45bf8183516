//! First-match rule table mapping questionnaire responses to a suggested
//! action.
//!
//! A table is an ordered list of rules. Each rule holds one slot pattern per
//! question and an action; the lowest-index rule whose five slots all match
//! decides. The canonical table ships embedded in the crate, and alternative
//! tables can be loaded from the same text format:
//!
//! ```text
//! # index | Q1 | Q2 | Q3 | Q4 | Q5 | action
//! 1 | Never | Never | !Agree | !Agree | !Agree | Unfriend/Sandbox
//! 16 | * | * | * | * | * | NOP
//! ```
//!
//! `!X` matches every answer other than `X`, so "Don't Remember" satisfies
//! `!Never` and "Don't Know" satisfies `!Agree`.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{parse_answer, Action, Answer, AnswerDomain, ParseError, ResponseSet};

/// The canonical rule table file, byte for byte.
pub const CANONICAL_TABLE: &str = include_str!("../data/canonical_rules.txt");

/// Number of distinct response sets (5 * 5 * 3 * 3 * 3).
pub const RESPONSE_SPACE: usize = 675;

#[derive(Debug, Error)]
pub enum RuleError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: {source}")]
    Token {
        line: usize,
        #[source]
        source: ParseError,
    },
    #[error("rule indices must run 1..={expected_last} in order; found {found} at position {position}")]
    Index {
        position: usize,
        found: usize,
        expected_last: usize,
    },
    #[error("rule table is not total: {0} is matched by no rule")]
    NotTotal(ResponseSet),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SlotPattern {
    Any,
    Is(Answer),
    Not(Answer),
}

impl SlotPattern {
    pub fn matches(self, answer: Answer) -> bool {
        match self {
            SlotPattern::Any => true,
            SlotPattern::Is(a) => answer == a,
            SlotPattern::Not(a) => answer != a,
        }
    }

    fn parse(question: u8, token: &str) -> Result<Self, ParseError> {
        let token = token.trim();
        if token == "*" {
            Ok(SlotPattern::Any)
        } else if let Some(rest) = token.strip_prefix('!') {
            Ok(SlotPattern::Not(parse_answer(question, rest)?))
        } else {
            Ok(SlotPattern::Is(parse_answer(question, token)?))
        }
    }
}

impl fmt::Display for SlotPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SlotPattern::Any => f.write_str("*"),
            SlotPattern::Is(a) => write!(f, "{a}"),
            SlotPattern::Not(a) => write!(f, "!{a}"),
        }
    }
}

/// Free-function form of [`SlotPattern::matches`].
pub fn match_slot(pattern: SlotPattern, answer: Answer) -> bool {
    pattern.matches(answer)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rule {
    pub index: usize,
    /// Patterns for Q1..Q5.
    pub slots: [SlotPattern; 5],
    pub action: Action,
}

impl Rule {
    pub fn matches(&self, responses: &ResponseSet) -> bool {
        self.slots
            .iter()
            .zip(responses.answers())
            .all(|(slot, answer)| slot.matches(answer))
    }

    pub fn is_catch_all(&self) -> bool {
        self.slots.iter().all(|s| *s == SlotPattern::Any)
    }
}

/// Outcome of evaluating a response set against a table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub action: Action,
    pub matched_rule: usize,
    pub reasons: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RuleTable {
    rules: Vec<Rule>,
    sandbox_enabled: bool,
}

impl RuleTable {
    /// The embedded canonical table.
    pub fn canonical(sandbox_enabled: bool) -> Self {
        Self::parse(CANONICAL_TABLE, sandbox_enabled).expect("embedded rule table is valid")
    }

    /// Builds a table, rejecting non-contiguous indices and tables that
    /// leave some response set unmatched.
    pub fn new(rules: Vec<Rule>, sandbox_enabled: bool) -> Result<Self, RuleError> {
        let table = Self::new_unchecked(rules, sandbox_enabled)?;
        if let Some(gap) = table.validate().unmatched.first() {
            return Err(RuleError::NotTotal(*gap));
        }
        Ok(table)
    }

    /// Builds a table without the totality check, for validation tooling.
    /// Indices must still run 1..=n.
    pub fn new_unchecked(rules: Vec<Rule>, sandbox_enabled: bool) -> Result<Self, RuleError> {
        let n = rules.len();
        for (position, rule) in rules.iter().enumerate() {
            if rule.index != position + 1 {
                return Err(RuleError::Index {
                    position,
                    found: rule.index,
                    expected_last: n,
                });
            }
        }
        Ok(RuleTable {
            rules,
            sandbox_enabled,
        })
    }

    pub fn parse(text: &str, sandbox_enabled: bool) -> Result<Self, RuleError> {
        Self::new(parse_rules(text)?, sandbox_enabled)
    }

    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    pub fn sandbox_enabled(&self) -> bool {
        self.sandbox_enabled
    }

    pub fn with_sandbox(mut self, enabled: bool) -> Self {
        self.sandbox_enabled = enabled;
        self
    }

    /// The action a rule yields under this table's sandbox setting.
    pub fn effective_action(&self, rule: &Rule) -> Action {
        match rule.action {
            Action::UnfriendOrSandbox if !self.sandbox_enabled => Action::Unfriend,
            a => a,
        }
    }

    /// First matching rule, if any.
    pub fn first_match(&self, responses: &ResponseSet) -> Option<&Rule> {
        self.rules.iter().find(|r| r.matches(responses))
    }

    /// Evaluates the table. `None` only for tables built with
    /// [`RuleTable::new_unchecked`] that are not total.
    pub fn evaluate(&self, responses: &ResponseSet) -> Option<Verdict> {
        let rule = self.first_match(responses)?;
        let reasons = rule
            .slots
            .iter()
            .zip(responses.answers())
            .enumerate()
            .filter_map(|(i, (slot, answer))| reason_for(i as u8 + 1, *slot, answer))
            .collect();
        Some(Verdict {
            action: self.effective_action(rule),
            matched_rule: rule.index,
            reasons,
        })
    }

    /// Writes the table in the text format accepted by [`RuleTable::parse`].
    pub fn to_text(&self) -> String {
        let mut out = String::from("# index | Q1 | Q2 | Q3 | Q4 | Q5 | action\n");
        for rule in &self.rules {
            out.push_str(&rule.index.to_string());
            for slot in &rule.slots {
                out.push_str(" | ");
                out.push_str(&slot.to_string());
            }
            out.push_str(" | ");
            out.push_str(rule.action.label());
            out.push('\n');
        }
        out
    }

    pub fn validate(&self) -> ValidationReport {
        validate_rule_table(self)
    }
}

/// Evaluates a total table.
///
/// # Panics
///
/// Panics if no rule matches, which cannot happen for tables built through
/// [`RuleTable::new`] or [`RuleTable::parse`].
pub fn infer_action(table: &RuleTable, responses: &ResponseSet) -> Verdict {
    table
        .evaluate(responses)
        .expect("rule table is total")
}

const TOPICS: [&str; 5] = [
    "Interaction on Facebook",
    "Interaction in real life",
    "Misuse of your photos",
    "Misuse of your status updates",
    "Offensive or false posts",
];

fn reason_for(question: u8, slot: SlotPattern, answer: Answer) -> Option<String> {
    let topic = TOPICS[question as usize - 1];
    match slot {
        SlotPattern::Any => None,
        SlotPattern::Is(_) => Some(format!("{topic}: you answered \"{answer}\"")),
        SlotPattern::Not(excluded) => Some(format!(
            "{topic}: you answered \"{answer}\", not \"{excluded}\""
        )),
    }
}

pub fn parse_rules(text: &str) -> Result<Vec<Rule>, RuleError> {
    let mut rules = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = n + 1;
        let content = raw.trim();
        if content.is_empty() || content.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = content.split('|').map(str::trim).collect();
        if fields.len() != 7 {
            return Err(RuleError::Syntax {
                line,
                message: format!("expected 7 '|'-separated fields, found {}", fields.len()),
            });
        }
        let index = fields[0].parse::<usize>().map_err(|_| RuleError::Syntax {
            line,
            message: format!("bad rule index {:?}", fields[0]),
        })?;
        let mut slots = [SlotPattern::Any; 5];
        for (q, slot) in slots.iter_mut().enumerate() {
            *slot = SlotPattern::parse(q as u8 + 1, fields[q + 1])
                .map_err(|source| RuleError::Token { line, source })?;
        }
        let action = fields[6]
            .parse::<Action>()
            .map_err(|source| RuleError::Token { line, source })?;
        rules.push(Rule {
            index,
            slots,
            action,
        });
    }
    Ok(rules)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub tuples_checked: usize,
    pub total: bool,
    /// Response sets no rule matches.
    #[serde(serialize_with = "serialize_display_list")]
    pub unmatched: Vec<ResponseSet>,
    /// Rules no response set reaches under first-match.
    pub unreachable: Vec<usize>,
    /// Slot patterns whose answer belongs to the wrong question domain.
    pub domain_errors: Vec<String>,
    /// Number of response sets decided by each rule, in table order.
    pub hits: Vec<usize>,
}

fn serialize_display_list<S: serde::Serializer>(
    items: &[ResponseSet],
    s: S,
) -> Result<S::Ok, S::Error> {
    s.collect_seq(items.iter().map(|r| r.to_string()))
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.total && self.unreachable.is_empty() && self.domain_errors.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.total {
            writeln!(f, "total over {} tuples", self.tuples_checked)?;
        } else {
            writeln!(
                f,
                "NOT total: {} of {} tuples unmatched (first: {})",
                self.unmatched.len(),
                self.tuples_checked,
                self.unmatched[0]
            )?;
        }
        for index in &self.unreachable {
            writeln!(f, "warning: rule {index} is unreachable")?;
        }
        for e in &self.domain_errors {
            writeln!(f, "error: {e}")?;
        }
        Ok(())
    }
}

/// Exhaustively checks totality, per-rule reachability and slot domains.
pub fn validate_rule_table(table: &RuleTable) -> ValidationReport {
    let mut hits = vec![0usize; table.rules.len()];
    let mut unmatched = Vec::new();
    let mut tuples_checked = 0;
    for responses in ResponseSet::enumerate() {
        tuples_checked += 1;
        match table.rules.iter().position(|r| r.matches(&responses)) {
            Some(i) => hits[i] += 1,
            None => unmatched.push(responses),
        }
    }
    let unreachable = table
        .rules
        .iter()
        .zip(&hits)
        .filter(|(_, &h)| h == 0)
        .map(|(r, _)| r.index)
        .collect();
    let mut domain_errors = Vec::new();
    for rule in &table.rules {
        for (q, slot) in rule.slots.iter().enumerate() {
            let question = q as u8 + 1;
            let domain = AnswerDomain::for_question(question).expect("1..=5");
            if let SlotPattern::Is(a) | SlotPattern::Not(a) = slot {
                if !domain.contains(*a) {
                    domain_errors.push(format!(
                        "rule {}: Q{question} pattern {slot} is outside the question's domain",
                        rule.index
                    ));
                }
            }
        }
    }
    ValidationReport {
        tuples_checked,
        total: unmatched.is_empty(),
        unmatched,
        unreachable,
        domain_errors,
        hits,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{AgreementAnswer as A, FrequencyAnswer as F};

    fn rs(q1: F, q2: F, q3: A, q4: A, q5: A) -> ResponseSet {
        ResponseSet::new(q1, q2, q3, q4, q5)
    }

    #[test]
    fn match_slot_examples() {
        assert!(match_slot(
            SlotPattern::Not(Answer::Frequency(F::Never)),
            Answer::Frequency(F::DontRemember)
        ));
        assert!(match_slot(
            SlotPattern::Is(Answer::Agreement(A::Agree)),
            Answer::Agreement(A::Agree)
        ));
        assert!(match_slot(
            SlotPattern::Not(Answer::Agreement(A::Agree)),
            Answer::Agreement(A::DontKnow)
        ));
        assert!(!match_slot(
            SlotPattern::Not(Answer::Agreement(A::Agree)),
            Answer::Agreement(A::Agree)
        ));
    }

    #[test]
    fn infer_action_examples() {
        let sandbox = RuleTable::canonical(true);
        let plain = RuleTable::canonical(false);

        let v = infer_action(&sandbox, &rs(F::Never, F::Never, A::Disagree, A::DontKnow, A::Disagree));
        assert_eq!((v.action, v.matched_rule), (Action::UnfriendOrSandbox, 1));

        let v = infer_action(&plain, &rs(F::Never, F::Never, A::Agree, A::Disagree, A::Disagree));
        assert_eq!((v.action, v.matched_rule), (Action::Unfriend, 2));

        let v = infer_action(&plain, &rs(F::Frequently, F::Frequently, A::Agree, A::Agree, A::Disagree));
        assert_eq!((v.action, v.matched_rule), (Action::Restrict, 12));

        let v = infer_action(&plain, &rs(F::Occasionally, F::Frequently, A::Disagree, A::Disagree, A::Agree));
        assert_eq!((v.action, v.matched_rule), (Action::Unfollow, 15));

        let v = infer_action(&plain, &rs(F::DontRemember, F::Never, A::Agree, A::Disagree, A::Agree));
        assert_eq!((v.action, v.matched_rule), (Action::Unfriend, 7));

        let v = infer_action(&plain, &rs(F::Frequently, F::Frequently, A::Disagree, A::DontKnow, A::DontKnow));
        assert_eq!((v.action, v.matched_rule), (Action::Nop, 16));
        assert!(v.reasons.is_empty());
    }

    #[test]
    fn reasons_follow_constrained_slots() {
        let table = RuleTable::canonical(false);
        let v = infer_action(&table, &rs(F::Never, F::Never, A::Agree, A::Disagree, A::Disagree));
        // rule 2 constrains only Q1 and Q2
        assert_eq!(v.reasons.len(), 2);
        assert!(v.reasons[0].contains("Facebook") && v.reasons[0].contains("\"Never\""));

        let v = infer_action(&table, &rs(F::Occasionally, F::Frequently, A::Disagree, A::Disagree, A::Agree));
        assert_eq!(v.reasons.len(), 5);
        assert!(v.reasons[1].contains("not \"Never\""));
    }

    #[test]
    fn sandbox_mode_only_changes_rule_one() {
        let table = RuleTable::canonical(false);
        assert_eq!(table.effective_action(&table.rules()[0]), Action::Unfriend);
        let table = table.with_sandbox(true);
        assert_eq!(table.effective_action(&table.rules()[0]), Action::UnfriendOrSandbox);
    }

    #[test]
    fn canonical_table_is_total_and_fully_reachable() {
        let report = RuleTable::canonical(false).validate();
        assert!(report.total);
        assert_eq!(report.tuples_checked, RESPONSE_SPACE);
        assert!(report.unreachable.is_empty(), "{report}");
        assert!(report.domain_errors.is_empty());
        assert_eq!(report.hits.iter().sum::<usize>(), RESPONSE_SPACE);
        assert!(report.to_string().starts_with("total over 675 tuples"));
    }

    #[test]
    fn removing_catch_all_breaks_totality() {
        let mut rules = RuleTable::canonical(false).rules().to_vec();
        rules.pop();
        let table = RuleTable::new_unchecked(rules.clone(), false).unwrap();
        let report = table.validate();
        assert!(!report.total);
        assert!(!report.unmatched.is_empty());
        assert!(table.evaluate(&report.unmatched[0]).is_none());
        assert!(matches!(RuleTable::new(rules, false), Err(RuleError::NotTotal(_))));
    }

    #[test]
    fn duplicate_rule_is_unreachable() {
        let mut rules = RuleTable::canonical(false).rules().to_vec();
        rules.insert(2, rules[1].clone());
        for (i, r) in rules.iter_mut().enumerate() {
            r.index = i + 1;
        }
        let report = RuleTable::new_unchecked(rules, false).unwrap().validate();
        assert!(report.total);
        assert_eq!(report.unreachable, vec![3]);
    }

    #[test]
    fn domain_errors_are_reported() {
        let mut rules = RuleTable::canonical(false).rules().to_vec();
        rules[0].slots[0] = SlotPattern::Is(Answer::Agreement(A::Agree));
        let report = RuleTable::new_unchecked(rules, false).unwrap().validate();
        assert_eq!(report.domain_errors.len(), 1);
    }

    #[test]
    fn parser_rejects_bad_input() {
        assert!(matches!(
            parse_rules("1 | Never | Never | * | * | NOP"),
            Err(RuleError::Syntax { line: 1, .. })
        ));
        assert!(matches!(
            parse_rules("1 | Agree | * | * | * | * | NOP"),
            Err(RuleError::Token { line: 1, source: ParseError::DomainMismatch { .. } })
        ));
        assert!(matches!(
            parse_rules("x | * | * | * | * | * | NOP"),
            Err(RuleError::Syntax { .. })
        ));
        let rules = parse_rules("2 | * | * | * | * | * | NOP").unwrap();
        assert!(matches!(RuleTable::new(rules, false), Err(RuleError::Index { .. })));
    }

    #[test]
    fn text_form_round_trips() {
        let table = RuleTable::canonical(true);
        let again = RuleTable::parse(&table.to_text(), true).unwrap();
        assert_eq!(table, again);
    }
}
