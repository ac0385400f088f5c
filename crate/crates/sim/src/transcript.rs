//! Transcript lines: one JSON object per inbound webhook, operator API
//! call, or outbound payload.

use chrono::SecondsFormat;
use expertloop::channel::WirePayload;
use expertloop::clock::Timestamp;
use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// Webhook body posted by a user's device.
    In,
    /// Operator call that bypasses the chat channel.
    Api,
    /// Payload delivered to a user's device.
    Out,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TranscriptItem {
    pub seq: u64,
    pub at: String,
    pub direction: Direction,
    /// Script alias of the sender or recipient.
    pub actor: String,
    pub payload: Value,
}

impl TranscriptItem {
    pub fn new(seq: u64, at: Timestamp, direction: Direction, actor: &str, payload: Value) -> Self {
        Self {
            seq,
            at: at.to_rfc3339_opts(SecondsFormat::Secs, true),
            direction,
            actor: actor.to_owned(),
            payload,
        }
    }

    /// The outbound payload, if this is an outbound line.
    pub fn wire(&self) -> Option<WirePayload> {
        if self.direction != Direction::Out {
            return None;
        }
        serde_json::from_value(self.payload.clone()).ok()
    }
}

/// JSON Lines rendering, one item per line.
pub fn to_jsonl(items: &[TranscriptItem]) -> String {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(item).expect("transcript serializes"));
        out.push('\n');
    }
    out
}

pub fn from_jsonl(text: &str) -> Result<Vec<TranscriptItem>, serde_json::Error> {
    text.lines().filter(|l| !l.trim().is_empty()).map(serde_json::from_str).collect()
}
