use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{parse_transcript, CommandError, Intent};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(2);

/// HTTP endpoint of an external language model that resolves transcripts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalModel {
    /// Base URL; requests go to `{base_url}/resolve`.
    pub base_url: String,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
}

fn default_timeout_ms() -> u64 {
    DEFAULT_TIMEOUT.as_millis() as u64
}

#[derive(Serialize)]
struct Request<'a> {
    v: u32,
    transcript: &'a str,
    vocabulary: &'a [String],
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Response {
    v: u32,
    enable: Vec<String>,
    disable: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExternalResolution {
    pub intent: Intent,
    /// True when the grammar produced the intent because the model failed.
    pub fallback: bool,
    /// Why the model's answer was not used.
    pub error: Option<CommandError>,
}

/// Asks the external model first; any transport, timeout or schema failure
/// falls back to the rule grammar so avoidance never depends on the network.
pub fn external_model_resolve(
    transcript: &str,
    vocabulary: &[String],
    endpoint: &ExternalModel,
) -> Result<ExternalResolution, CommandError> {
    match query(transcript, vocabulary, endpoint) {
        Ok(intent) => Ok(ExternalResolution { intent, fallback: false, error: None }),
        Err(e) => {
            log::warn!("external model failed, using grammar: {e}");
            let intent = parse_transcript(transcript, vocabulary)?;
            Ok(ExternalResolution { intent, fallback: true, error: Some(e) })
        }
    }
}

fn query(transcript: &str, vocabulary: &[String], endpoint: &ExternalModel) -> Result<Intent, CommandError> {
    let agent: ureq::Agent = ureq::Agent::config_builder()
        .timeout_global(Some(Duration::from_millis(endpoint.timeout_ms)))
        .build()
        .into();
    let url = format!("{}/resolve", endpoint.base_url.trim_end_matches('/'));
    let body = Request { v: 1, transcript, vocabulary };
    let mut resp = agent.post(&url).send_json(&body).map_err(|e| CommandError::Transport(e.to_string()))?;
    let text = resp.body_mut().read_to_string().map_err(|e| CommandError::Transport(e.to_string()))?;
    intent_from_response(&text, transcript)
}

/// Validates a `/resolve` reply against the frozen v1 schema.
pub fn intent_from_response(text: &str, transcript: &str) -> Result<Intent, CommandError> {
    let r: Response = serde_json::from_str(text).map_err(|e| CommandError::Protocol(e.to_string()))?;
    if r.v != 1 {
        return Err(CommandError::Protocol(format!("unsupported version {}", r.v)));
    }
    Intent::new(r.enable, r.disable, transcript).map_err(|e| CommandError::Protocol(e.to_string()))
}
