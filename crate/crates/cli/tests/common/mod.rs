#![allow(dead_code)]

use std::fs::File;
use std::io::BufReader;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use friend_audit::Service;
use friend_audit_core::features::{load_snapshot, SocialSnapshot};
use friend_audit_core::session::SessionConfig;

pub fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

pub fn snapshot() -> SocialSnapshot {
    load_snapshot(BufReader::new(File::open(fixture_path("snapshot.jsonl")).unwrap())).unwrap()
}

pub fn service() -> Service {
    Service::new(snapshot(), SessionConfig::default())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Request {
    pub method: String,
    pub path: String,
    pub body: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recorded {
    pub status: u16,
    pub body: Value,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Exchange {
    pub request: Request,
    pub response: Option<Recorded>,
}

pub fn exchanges() -> Vec<Exchange> {
    std::fs::read_to_string(fixture_path("exchange.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

/// JSON bodies compare as values; the log endpoint's JSONL compares as text.
pub fn recorded(status: u16, content_type: &str, body: &str) -> Recorded {
    let body = if content_type == "application/json" {
        serde_json::from_str(body).unwrap()
    } else {
        Value::String(body.to_string())
    };
    Recorded { status, body }
}
