use serde::{Deserialize, Serialize};
use serde_json::Value;

use friend_audit_core::session::SessionError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ErrorCode {
    BadRequest,
    NotFound,
    Conflict,
    Invariant,
}

impl ErrorCode {
    pub fn status(self) -> u16 {
        match self {
            ErrorCode::BadRequest => 400,
            ErrorCode::NotFound => 404,
            ErrorCode::Conflict => 409,
            ErrorCode::Invariant => 500,
        }
    }
}

/// Error body returned by every failing request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiError {
    pub code: ErrorCode,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<Value>,
}

impl ApiError {
    pub fn new(code: ErrorCode, message: impl Into<String>) -> Self {
        ApiError {
            code,
            message: message.into(),
            detail: None,
        }
    }

    pub fn with_detail(mut self, detail: Value) -> Self {
        self.detail = Some(detail);
        self
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        Self::new(ErrorCode::BadRequest, message)
    }

    pub fn not_found(message: impl Into<String>) -> Self {
        Self::new(ErrorCode::NotFound, message)
    }

    pub fn status(&self) -> u16 {
        self.code.status()
    }
}

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        use serde_json::json;
        use SessionError as E;
        let message = e.to_string();
        let (code, detail) = match &e {
            E::UnknownParticipant(id) => (ErrorCode::NotFound, Some(json!({ "participant_id": id }))),
            E::TooFewFriends { available, required } => (
                ErrorCode::BadRequest,
                Some(json!({ "available": available, "required": required })),
            ),
            E::OutOfOrder { expected, got } => (
                ErrorCode::Conflict,
                Some(json!({ "expected": expected, "got": got })),
            ),
            E::IncompatibleDecision { suggested, decision } => (
                ErrorCode::BadRequest,
                Some(json!({ "suggested": suggested, "decision": decision })),
            ),
            E::BogusIdCollision(_)
            | E::UnknownFriend(_)
            | E::InvalidTimings(_)
            | E::MissingIgnoreReason
            | E::UnexpectedIgnoreReason => (ErrorCode::BadRequest, None),
            E::WrongMode { .. }
            | E::SessionComplete
            | E::DuplicateSubmission(_)
            | E::NoPendingSuggestion(_)
            | E::AlreadyPredicted
            | E::SessionIncomplete => (ErrorCode::Conflict, None),
            E::MissingModel(_)
            | E::BadPrediction(_)
            | E::Feature(_)
            | E::Log { .. }
            | E::ReplayDiverged { .. } => (ErrorCode::Invariant, None),
        };
        ApiError {
            code,
            message,
            detail,
        }
    }
}
