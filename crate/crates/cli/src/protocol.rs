//! JSON frames exchanged with live clients.
//!
//! Server to client: `hello`, `snapshot`, `onset` (broadcast, sequence
//! numbered), `rejected` and `error` (to one session). Client to server: one
//! engine command object, or an array of them applied all-or-nothing.

use serde::{Deserialize, Serialize};
use vocsync::{Command, OnsetEvent, Scenario, Snapshot};

pub const PROTOCOL_VERSION: &str = "1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Frame {
    Hello {
        seq: u64,
        protocol: String,
        config: Scenario,
    },
    Snapshot {
        seq: u64,
        #[serde(flatten)]
        snapshot: Snapshot,
    },
    Onset {
        seq: u64,
        #[serde(flatten)]
        event: OnsetEvent,
    },
    Rejected {
        reason: String,
    },
    Error {
        reason: String,
    },
}

impl Frame {
    pub fn hello(seq: u64, config: Scenario) -> Self {
        Frame::Hello {
            seq,
            protocol: PROTOCOL_VERSION.to_owned(),
            config,
        }
    }

    pub fn seq(&self) -> Option<u64> {
        match self {
            Frame::Hello { seq, .. } | Frame::Snapshot { seq, .. } | Frame::Onset { seq, .. } => {
                Some(*seq)
            }
            Frame::Rejected { .. } | Frame::Error { .. } => None,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("frames serialize")
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum Incoming {
    Batch(Vec<Command>),
    One(Command),
}

/// Parses a client text frame into the commands it carries.
pub fn parse_commands(text: &str) -> Result<Vec<Command>, String> {
    // Try the single form first so its error message is the one reported.
    match serde_json::from_str::<Command>(text) {
        Ok(c) => Ok(vec![c]),
        Err(single) => match serde_json::from_str::<Incoming>(text) {
            Ok(Incoming::Batch(b)) if !b.is_empty() => Ok(b),
            Ok(Incoming::Batch(_)) => Err("empty command batch".to_owned()),
            Ok(Incoming::One(c)) => Ok(vec![c]),
            Err(_) => Err(single.to_string()),
        },
    }
}
