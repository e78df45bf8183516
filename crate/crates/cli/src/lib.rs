//! Command-line tool and HTTP service for friend audits.

pub mod api;
pub mod cli;
pub mod config;
pub mod http;
pub mod service;

pub use api::{ApiError, ErrorCode};
pub use service::{Response, ScriptStep, Service};
