//! Wire messages: one JSON object per frame,
//! `{type, session_id, sender_id, payload}`.

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::backend::TaskState;
use crate::sketch::{EditOp, SketchDocument};
use crate::validator::ValidationReport;

pub const PALETTE: [&str; 10] = [
    "#e6194b", "#3cb44b", "#ffe119", "#4363d8", "#f58231", "#911eb4", "#46f0f0", "#f032e6", "#bcf60c", "#fabebe",
];

/// Sender id used by the server.
pub const SERVER_ID: &str = "server";

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ProtocolError {
    #[error("ProtocolError: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Participant {
    pub participant_id: String,
    pub display_name: String,
    pub color_index: u32,
}

impl Participant {
    pub fn color(&self) -> &'static str {
        PALETTE[self.color_index as usize % PALETTE.len()]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "payload")]
pub enum Message {
    Join {
        #[serde(default)]
        display_name: String,
    },
    Welcome {
        participant_id: String,
        color_index: u32,
        /// Canonical document, embedded as a JSON object.
        snapshot: Value,
        last_seq: u64,
        participants: Vec<Participant>,
    },
    SubmitOp {
        op: EditOp,
    },
    OpApplied {
        op: EditOp,
    },
    OpRejected {
        op_id: String,
        reason: String,
    },
    TriggerGeneration {
        prompt: String,
        #[serde(default)]
        seed: u64,
    },
    GenerationStatus {
        request_id: String,
        state: TaskState,
        #[serde(default)]
        progress: Option<u8>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        reason: Option<String>,
    },
    AssetReady {
        request_id: String,
        obj_base64: String,
        report: ValidationReport,
    },
    PresenceUpdate {
        participants: Vec<Participant>,
    },
    Leave {},
    /// Client asks for a fresh Welcome after a sequence gap.
    Resync {},
    /// Request-level failure that is not tied to an op.
    Error {
        code: String,
        message: String,
    },
}

impl Message {
    pub fn type_name(&self) -> &'static str {
        match self {
            Message::Join { .. } => "Join",
            Message::Welcome { .. } => "Welcome",
            Message::SubmitOp { .. } => "SubmitOp",
            Message::OpApplied { .. } => "OpApplied",
            Message::OpRejected { .. } => "OpRejected",
            Message::TriggerGeneration { .. } => "TriggerGeneration",
            Message::GenerationStatus { .. } => "GenerationStatus",
            Message::AssetReady { .. } => "AssetReady",
            Message::PresenceUpdate { .. } => "PresenceUpdate",
            Message::Leave {} => "Leave",
            Message::Resync {} => "Resync",
            Message::Error { .. } => "Error",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Envelope {
    pub session_id: String,
    pub sender_id: String,
    pub message: Message,
}

#[derive(Deserialize)]
struct RawEnvelope {
    #[serde(rename = "type")]
    kind: String,
    session_id: String,
    sender_id: String,
    #[serde(default)]
    payload: Value,
}

impl Envelope {
    pub fn new(session_id: impl Into<String>, sender_id: impl Into<String>, message: Message) -> Self {
        Self { session_id: session_id.into(), sender_id: sender_id.into(), message }
    }

    pub fn to_value(&self) -> Value {
        let mut obj = match serde_json::to_value(&self.message) {
            Ok(Value::Object(m)) => m,
            _ => Map::new(),
        };
        obj.entry("payload").or_insert_with(|| Value::Object(Map::new()));
        obj.insert("session_id".into(), Value::String(self.session_id.clone()));
        obj.insert("sender_id".into(), Value::String(self.sender_id.clone()));
        Value::Object(obj)
    }

    /// Compact JSON text for one frame.
    pub fn to_json(&self) -> String {
        self.to_value().to_string()
    }

    /// Parse one frame. Unknown fields are ignored; unknown types fail.
    pub fn from_json(text: &str) -> Result<Envelope, ProtocolError> {
        let raw: RawEnvelope =
            serde_json::from_str(text).map_err(|e| ProtocolError::Malformed(format!("envelope: {e}")))?;
        let payload = match raw.payload {
            Value::Null => Value::Object(Map::new()),
            p => p,
        };
        let tagged = serde_json::json!({ "type": raw.kind, "payload": payload });
        let message: Message = serde_json::from_value(tagged)
            .map_err(|e| ProtocolError::Malformed(format!("{} message: {e}", raw.kind)))?;
        Ok(Envelope { session_id: raw.session_id, sender_id: raw.sender_id, message })
    }
}

/// Embed a document as a JSON value for Welcome.
pub fn snapshot_value(doc: &SketchDocument) -> Value {
    doc.to_canonical_bytes()
        .ok()
        .and_then(|b| serde_json::from_slice(&b).ok())
        .unwrap_or(Value::Null)
}

pub fn document_from_snapshot(snapshot: &Value) -> Result<SketchDocument, ProtocolError> {
    let bytes = serde_json::to_vec(snapshot).map_err(|e| ProtocolError::Malformed(e.to_string()))?;
    SketchDocument::parse(&bytes).map_err(|e| ProtocolError::Malformed(format!("snapshot: {e}")))
}
