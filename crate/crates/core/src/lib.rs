//! Friend audit decision engine: questionnaire rules, mutual-activity
//! features, classifiers, evaluation statistics, participant screening and
//! audit sessions.

pub mod domain;
pub mod evaluation;
pub mod features;
pub mod learning;
pub mod quality;
pub mod rules;
pub mod session;
pub mod special;
pub mod synth;

pub use domain::{Action, Decision, DecisionKind, IgnoreReason, RelationshipState, ResponseSet};
pub use features::{compute_features, FeatureVector, SocialSnapshot};
pub use rules::{infer_action, RuleTable, Verdict};
pub use session::{AuditSession, SessionConfig, SessionRequest, SessionSummary};

pub type Metrics = evaluation::ClassMetrics<f64>;
pub type Averages = evaluation::Averages<f64>;
pub type ChiSquare = evaluation::ChiSquareResult<f64>;
