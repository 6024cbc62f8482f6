use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{DeviceEvent, TeleopError, WorkspaceBox};
use crate::command::Intent;

/// Hex SHA-256 of a file's exact bytes.
pub fn file_hash(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogHeader {
    pub scene_hash: String,
    pub robot_hash: String,
    pub config_hash: String,
    pub seed: u64,
    /// Calibration in force while recording.
    pub workspace: WorkspaceBox,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
}

/// One line of the JSON-lines file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LogLine {
    Header(LogHeader),
    Event(DeviceEvent),
    Intent { t: f64, intent: Intent },
}

/// Recorded session. Intents are stored as resolved, so replay does not
/// depend on the parser.
#[derive(Debug, Clone, PartialEq)]
pub struct TeleopLog {
    pub header: LogHeader,
    pub events: Vec<DeviceEvent>,
    pub intents: Vec<(f64, Intent)>,
}

impl TeleopLog {
    pub fn new(header: LogHeader) -> Self {
        TeleopLog { header, events: Vec::new(), intents: Vec::new() }
    }

    /// Time of the last recorded line, zero for an empty log.
    pub fn end_time(&self) -> f64 {
        let e = self.events.iter().map(|e| e.t);
        let i = self.intents.iter().map(|(t, _)| *t);
        e.chain(i).fold(0.0, f64::max)
    }

    /// Header first, then events and intents merged by time; at equal times
    /// events precede intents.
    pub fn to_jsonl(&self) -> String {
        let mut lines = vec![LogLine::Header(self.header.clone())];
        let (mut ei, mut ii) = (0, 0);
        while ei < self.events.len() || ii < self.intents.len() {
            let take_event = match (self.events.get(ei), self.intents.get(ii)) {
                (Some(e), Some((t, _))) => e.t <= *t,
                (Some(_), None) => true,
                _ => false,
            };
            if take_event {
                lines.push(LogLine::Event(self.events[ei].clone()));
                ei += 1;
            } else {
                let (t, intent) = self.intents[ii].clone();
                lines.push(LogLine::Intent { t, intent });
                ii += 1;
            }
        }
        let mut out = String::new();
        for l in lines {
            out.push_str(&serde_json::to_string(&l).expect("log lines serialize"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self, TeleopError> {
        let mut log: Option<TeleopLog> = None;
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            if raw.trim().is_empty() {
                continue;
            }
            let parsed: LogLine =
                serde_json::from_str(raw).map_err(|e| TeleopError::Format { line, message: e.to_string() })?;
            let fail = |message: &str| TeleopError::Format { line, message: message.into() };
            match (parsed, log.as_mut()) {
                (LogLine::Header(h), None) => {
                    h.workspace.validate().map_err(|e| fail(&e.to_string()))?;
                    log = Some(TeleopLog::new(h));
                }
                (LogLine::Header(_), Some(_)) => return Err(fail("second header")),
                (_, None) => return Err(fail("first line must be the header")),
                (LogLine::Event(e), Some(l)) => {
                    if !e.t.is_finite() || e.t < 0.0 {
                        return Err(fail("event time must be finite and non-negative"));
                    }
                    l.events.push(e);
                }
                (LogLine::Intent { t, intent }, Some(l)) => {
                    if !t.is_finite() || t < 0.0 {
                        return Err(fail("intent time must be finite and non-negative"));
                    }
                    l.intents.push((t, intent));
                }
            }
        }
        log.ok_or(TeleopError::Format { line: 0, message: "empty log".into() })
    }

    pub fn read(path: &Path) -> Result<Self, TeleopError> {
        Self::from_jsonl(&std::fs::read_to_string(path)?)
    }

    pub fn write(&self, path: &Path) -> Result<(), TeleopError> {
        std::fs::write(path, self.to_jsonl())?;
        Ok(())
    }
}
