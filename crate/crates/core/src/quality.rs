//! Participant screening: attention check, bogus-friend probes and
//! response timing.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{FrequencyAnswer, ResponseSet};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum QualityError {
    #[error("no responses recorded for bogus friend {0:?}")]
    MissingBogusResponse(String),
    #[error("participant has no timings")]
    NoTimings,
    #[error("invalid quality config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QualityConfig {
    pub min_avg_response_seconds: f64,
    pub bogus_friend_ids: BTreeSet<String>,
    pub attention_check_required: bool,
}

impl Default for QualityConfig {
    fn default() -> Self {
        QualityConfig {
            min_avg_response_seconds: 3.0,
            bogus_friend_ids: ["bogus-1", "bogus-2", "bogus-3"]
                .into_iter()
                .map(String::from)
                .collect(),
            attention_check_required: true,
        }
    }
}

impl QualityConfig {
    pub fn validate(&self) -> Result<(), QualityError> {
        if self.min_avg_response_seconds.is_nan() || self.min_avg_response_seconds <= 0.0 {
            return Err(QualityError::InvalidConfig(
                "min_avg_response_seconds must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// One timed screen. `question` is 1..=5 for questionnaire answers and
/// `None` for the accept/ignore decision screen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub friend_id: String,
    pub question: Option<u8>,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BogusResponse {
    pub friend_id: String,
    pub responses: ResponseSet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticipantRecord {
    pub id: String,
    pub attention_passed: bool,
    #[serde(default)]
    pub timings: Vec<Timing>,
    #[serde(default)]
    pub bogus_responses: Vec<BogusResponse>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum QualityCheck {
    AttentionCheck,
    BogusFriend,
    Timing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityVerdict {
    pub retained: bool,
    pub failed_checks: Vec<QualityCheck>,
    /// Average seconds per timed screen, when computable.
    pub average_seconds: Option<f64>,
    pub offending_bogus_ids: Vec<String>,
    /// Record-level problems that forced a check to fail.
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BogusCheck {
    pub passed: bool,
    pub offending: Vec<String>,
}

/// Fails if any bogus friend got a Q1 or Q2 answer other than "Never" or
/// "Don't Remember". Q3..Q5 are unconstrained.
pub fn check_bogus(
    record: &ParticipantRecord,
    config: &QualityConfig,
) -> Result<BogusCheck, QualityError> {
    let plausible = |a: FrequencyAnswer| {
        matches!(a, FrequencyAnswer::Never | FrequencyAnswer::DontRemember)
    };
    let mut offending = Vec::new();
    for bogus in &config.bogus_friend_ids {
        let response = record
            .bogus_responses
            .iter()
            .find(|b| &b.friend_id == bogus)
            .ok_or_else(|| QualityError::MissingBogusResponse(bogus.clone()))?;
        if !plausible(response.responses.q1) || !plausible(response.responses.q2) {
            offending.push(bogus.clone());
        }
    }
    Ok(BogusCheck {
        passed: offending.is_empty(),
        offending,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimingCheck {
    pub passed: bool,
    pub average: f64,
}

/// Averages every recorded timing, questionnaire and decision screens
/// alike. Fails strictly below the threshold.
pub fn check_timing(
    record: &ParticipantRecord,
    config: &QualityConfig,
) -> Result<TimingCheck, QualityError> {
    if record.timings.is_empty() {
        return Err(QualityError::NoTimings);
    }
    let average =
        record.timings.iter().map(|t| t.seconds).sum::<f64>() / record.timings.len() as f64;
    Ok(TimingCheck {
        passed: average >= config.min_avg_response_seconds,
        average,
    })
}

/// Runs every check on one record. Errors become failed checks with a note.
pub fn evaluate_participant(record: &ParticipantRecord, config: &QualityConfig) -> QualityVerdict {
    let mut failed = Vec::new();
    let mut notes = Vec::new();
    let mut offending_bogus_ids = Vec::new();
    let mut average_seconds = None;

    if config.attention_check_required && !record.attention_passed {
        failed.push(QualityCheck::AttentionCheck);
    }
    match check_bogus(record, config) {
        Ok(check) => {
            if !check.passed {
                failed.push(QualityCheck::BogusFriend);
                offending_bogus_ids = check.offending;
            }
        }
        Err(e) => {
            failed.push(QualityCheck::BogusFriend);
            notes.push(e.to_string());
        }
    }
    if let Some(bad) = record.timings.iter().find(|t| t.seconds.is_nan() || t.seconds <= 0.0) {
        failed.push(QualityCheck::Timing);
        notes.push(format!(
            "non-positive timing {} for friend {:?}",
            bad.seconds, bad.friend_id
        ));
    } else {
        match check_timing(record, config) {
            Ok(check) => {
                average_seconds = Some(check.average);
                if !check.passed {
                    failed.push(QualityCheck::Timing);
                }
            }
            Err(e) => {
                failed.push(QualityCheck::Timing);
                notes.push(e.to_string());
            }
        }
    }

    QualityVerdict {
        retained: failed.is_empty(),
        failed_checks: failed,
        average_seconds,
        offending_bogus_ids,
        notes,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Screening {
    pub retained: Vec<ParticipantRecord>,
    pub discarded: Vec<(ParticipantRecord, QualityVerdict)>,
}

impl Screening {
    /// Per-participant verdict lines followed by aggregate counts.
    pub fn report(&self, config: &QualityConfig) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "# timing threshold {}s, averaged over questionnaire and decision screens",
            config.min_avg_response_seconds
        );
        for r in &self.retained {
            let _ = writeln!(out, "{}\tretained", r.id);
        }
        for (r, v) in &self.discarded {
            let checks: Vec<String> = v.failed_checks.iter().map(|c| format!("{c:?}")).collect();
            let _ = write!(out, "{}\tdiscarded\t{}", r.id, checks.join(","));
            if !v.notes.is_empty() {
                let _ = write!(out, "\t{}", v.notes.join("; "));
            }
            out.push('\n');
        }
        let count = |check: QualityCheck| {
            self.discarded
                .iter()
                .filter(|(_, v)| v.failed_checks.contains(&check))
                .count()
        };
        let _ = writeln!(
            out,
            "total {}\tretained {}\tdiscarded {}\tattention {}\tbogus {}\ttiming {}",
            self.retained.len() + self.discarded.len(),
            self.retained.len(),
            self.discarded.len(),
            count(QualityCheck::AttentionCheck),
            count(QualityCheck::BogusFriend),
            count(QualityCheck::Timing),
        );
        out
    }
}

/// Partitions records into retained and discarded, keeping input order
/// within each side.
pub fn screen_participants(records: &[ParticipantRecord], config: &QualityConfig) -> Screening {
    let mut retained = Vec::new();
    let mut discarded = Vec::new();
    for record in records {
        let verdict = evaluate_participant(record, config);
        if verdict.retained {
            retained.push(record.clone());
        } else {
            discarded.push((record.clone(), verdict));
        }
    }
    Screening {
        retained,
        discarded,
    }
}
