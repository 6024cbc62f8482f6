//! WebSocket wire format. Every message is a JSON object carrying
//! `"v": 1` and a `"type"` tag; anything else is rejected before decoding.

use std::collections::BTreeMap;

use hullguard_core::command::{Intent, ResolutionReport};
use hullguard_core::geometry::PoseJson;
use hullguard_core::kinematics::Hand;
use hullguard_core::perception::{CollisionMesh, Scene};
use hullguard_core::teleop::{DeviceEvent, Simulator};
use hullguard_core::wbc::RowReport;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

pub const PROTOCOL_VERSION: u64 = 1;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ProtocolError {
    #[error("malformed message: {0}")]
    Malformed(String),
    #[error("missing protocol version")]
    MissingVersion,
    #[error("unsupported protocol version {0}")]
    UnsupportedVersion(String),
}

/// One value per hand.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerHand<T> {
    pub left: T,
    pub right: T,
}

impl<T> PerHand<T> {
    pub fn from_fn(mut f: impl FnMut(Hand) -> T) -> Self {
        PerHand { left: f(Hand::Left), right: f(Hand::Right) }
    }

    pub fn get(&self, hand: Hand) -> &T {
        match hand {
            Hand::Left => &self.left,
            Hand::Right => &self.right,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkPose {
    pub name: String,
    #[serde(flatten)]
    pub pose: PoseJson,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeshSummary {
    pub id: String,
    /// Hex SHA-256 of the mesh JSON.
    pub hash: String,
    pub triangles: usize,
}

/// Entry of the `/meshes` listing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeshEntry {
    pub id: String,
    pub hash: String,
    #[serde(flatten)]
    pub mesh: CollisionMesh,
}

impl From<&MeshEntry> for MeshSummary {
    fn from(e: &MeshEntry) -> Self {
        MeshSummary { id: e.id.clone(), hash: e.hash.clone(), triangles: e.mesh.mesh.triangles.len() }
    }
}

/// Static description a client needs to draw the scene: object primitives
/// and the robot with its link capsules.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldDescription {
    pub scene: Scene,
    /// Robot file contents.
    pub robot: Value,
}

/// Outcome of one spoken or typed command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntentReport {
    /// Simulated time the result took effect, or was rejected.
    pub t: f64,
    pub transcript: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hand: Option<Hand>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intent: Option<Intent>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<ResolutionReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Robot and scene state after one control step. Link poses are the forward
/// kinematics of `q`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateSnapshot {
    pub t: f64,
    pub step: u64,
    pub q: Vec<f64>,
    pub links: Vec<LinkPose>,
    pub end_effectors: PerHand<PoseJson>,
    pub grippers: PerHand<bool>,
    pub clutched: PerHand<bool>,
    pub haptics: PerHand<f64>,
    pub active_meshes: Vec<MeshSummary>,
    /// Smallest distance per constraint source: `"self"` or an obstacle id.
    pub min_distances: BTreeMap<String, f64>,
    pub constraints: Vec<RowReport>,
    pub avoidance: bool,
    pub halted: bool,
    pub kkt_residual: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub last_intent: Option<IntentReport>,
    /// Present on the first snapshot of every connection.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub world: Option<WorldDescription>,
    /// Geometry of active meshes this connection has not been sent yet.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub mesh_geometry: Vec<MeshEntry>,
}

impl StateSnapshot {
    pub fn capture(sim: &Simulator, meshes: &[MeshSummary], last_intent: Option<&IntentReport>) -> Self {
        let model = sim.model();
        let session = sim.session();
        let step = sim.last_step();
        StateSnapshot {
            t: sim.t(),
            step: sim.steps(),
            q: sim.q().as_slice().to_vec(),
            links: model
                .links
                .iter()
                .zip(&sim.poses().links)
                .map(|(l, p)| LinkPose { name: l.name.clone(), pose: p.into() })
                .collect(),
            end_effectors: PerHand::from_fn(|h| (&sim.end_effector_pose(h)).into()),
            grippers: PerHand::from_fn(|h| session.gripper_closed(h)),
            clutched: PerHand::from_fn(|h| session.clutched(h)),
            haptics: PerHand::from_fn(|h| session.haptic(h)),
            active_meshes: meshes.to_vec(),
            min_distances: step.map(|s| s.min_distance.clone()).unwrap_or_default(),
            constraints: step.map(|s| s.rows.clone()).unwrap_or_default(),
            avoidance: sim.avoidance(),
            halted: step.is_some_and(|s| s.halted),
            kkt_residual: step.map_or(0.0, |s| s.kkt_residual),
            last_intent: last_intent.cloned(),
            world: None,
            mesh_geometry: Vec::new(),
        }
    }
}

/// Client to server.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ClientMessage {
    /// Tracker sample. The server restamps `t` with its own clock.
    Event { event: DeviceEvent },
    Transcript {
        text: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        hand: Option<Hand>,
    },
}

/// Server to client.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    Snapshot(Box<StateSnapshot>),
    IntentReport(IntentReport),
    Error { message: String },
}

fn encode<T: Serialize>(body: &T) -> String {
    let mut value = serde_json::to_value(body).expect("wire messages serialize");
    value
        .as_object_mut()
        .expect("wire messages are tagged objects")
        .insert("v".into(), PROTOCOL_VERSION.into());
    value.to_string()
}

fn decode<T: DeserializeOwned>(text: &str) -> Result<T, ProtocolError> {
    let mut value: Value = serde_json::from_str(text).map_err(|e| ProtocolError::Malformed(e.to_string()))?;
    let object = value.as_object_mut().ok_or_else(|| ProtocolError::Malformed("not a JSON object".into()))?;
    match object.remove("v") {
        None => return Err(ProtocolError::MissingVersion),
        Some(v) if v.as_u64() == Some(PROTOCOL_VERSION) => {}
        Some(v) => return Err(ProtocolError::UnsupportedVersion(v.to_string())),
    }
    serde_json::from_value(value).map_err(|e| ProtocolError::Malformed(e.to_string()))
}

impl ClientMessage {
    pub fn encode(&self) -> String {
        encode(self)
    }

    pub fn decode(text: &str) -> Result<Self, ProtocolError> {
        decode(text)
    }
}

impl ServerMessage {
    pub fn encode(&self) -> String {
        encode(self)
    }

    pub fn decode(text: &str) -> Result<Self, ProtocolError> {
        decode(text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use hullguard_core::geometry::Pose;
    use hullguard_core::teleop::Buttons;

    fn event() -> ClientMessage {
        ClientMessage::Event {
            event: DeviceEvent {
                t: 0.25,
                hand: Hand::Right,
                pose: Pose::identity(),
                buttons: Buttons { clutch: true, ..Default::default() },
                payload: None,
            },
        }
    }

    #[test]
    fn client_messages_roundtrip_with_version() {
        for m in [event(), ClientMessage::Transcript { text: "avoid the red box".into(), hand: None }] {
            let text = m.encode();
            let raw: Value = serde_json::from_str(&text).unwrap();
            assert_eq!(raw["v"], 1);
            assert_eq!(ClientMessage::decode(&text).unwrap(), m);
        }
        let t = ClientMessage::decode(r#"{"v":1,"type":"transcript","text":"remove ketchup"}"#).unwrap();
        assert_eq!(t, ClientMessage::Transcript { text: "remove ketchup".into(), hand: None });
    }

    #[test]
    fn versions_other_than_one_are_rejected() {
        let body = r#""type":"transcript","text":"x""#;
        assert_eq!(ClientMessage::decode(&format!("{{{body}}}")), Err(ProtocolError::MissingVersion));
        assert_eq!(ClientMessage::decode(&format!("{{\"v\":2,{body}}}")), Err(ProtocolError::UnsupportedVersion("2".into())));
        assert_eq!(ClientMessage::decode(&format!("{{\"v\":\"1\",{body}}}")), Err(ProtocolError::UnsupportedVersion("\"1\"".into())));
        assert!(ClientMessage::decode(&format!("{{\"v\":1,{body}}}")).is_ok());
    }

    #[test]
    fn malformed_messages_are_rejected() {
        for text in [
            "[]",
            "not json",
            r#"{"v":1,"type":"snapshot"}"#,
            r#"{"v":1,"type":"transcript"}"#,
            r#"{"v":1,"type":"transcript","text":"x","extra":true}"#,
            r#"{"v":1,"type":"event","event":{"t":0.0}}"#,
        ] {
            assert!(matches!(ClientMessage::decode(text), Err(ProtocolError::Malformed(_))), "{text}");
        }
    }

    #[test]
    fn server_messages_carry_type_tags() {
        let m = ServerMessage::Error { message: "busy".into() };
        let raw: Value = serde_json::from_str(&m.encode()).unwrap();
        assert_eq!(raw, serde_json::json!({"v": 1, "type": "error", "message": "busy"}));
        assert_eq!(ServerMessage::decode(&m.encode()).unwrap(), m);
    }
}
