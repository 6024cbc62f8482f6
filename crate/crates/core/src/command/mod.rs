//! Operator text to structured avoidance intents, and the registry of active
//! obstacle meshes those intents maintain.

mod external;
mod grammar;
mod registry;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use external::{external_model_resolve, intent_from_response, ExternalModel, ExternalResolution, DEFAULT_TIMEOUT};
pub use grammar::{
    correct_phrase, fuzzy_match, normalized_edit_distance, parse_transcript, phonetic_key, phonetic_match, DISABLE_VERBS,
    ENABLE_VERBS, FUZZY_THRESHOLD,
};
pub use registry::{apply_intent, Action, HistoryEntry, ObstacleRegistry, Outcome, PerceptionContext, PhraseOutcome, ResolutionReport};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CommandError {
    #[error("no avoidance verb in '{0}'")]
    Unparseable(String),
    #[error("intent must enable or disable at least one object")]
    EmptyIntent,
    #[error("external model protocol: {0}")]
    Protocol(String),
    #[error("external model transport: {0}")]
    Transport(String),
}

/// Which objects to start and stop avoiding.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Intent {
    pub enable: Vec<String>,
    pub disable: Vec<String>,
    pub raw_text: String,
}

impl Intent {
    /// Lowercases and trims phrases, drops empty ones, and rejects an intent
    /// that names nothing.
    pub fn new(enable: Vec<String>, disable: Vec<String>, raw_text: &str) -> Result<Self, CommandError> {
        let clean = |v: Vec<String>| -> Vec<String> {
            v.into_iter().map(|s| s.trim().to_lowercase()).filter(|s| !s.is_empty()).collect()
        };
        let intent = Intent { enable: clean(enable), disable: clean(disable), raw_text: raw_text.to_string() };
        if intent.enable.is_empty() && intent.disable.is_empty() {
            return Err(CommandError::EmptyIntent);
        }
        Ok(intent)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Pose, Vec3};
    use crate::perception::{CameraConfig, Intrinsics, PipelineParams, Primitive, Scene, SceneObject};

    fn scene() -> Scene {
        let obj = |id: &str, label: &str, syn: &[&str], attrs: &[&str], geometry, pose| SceneObject {
            id: id.into(),
            label: label.into(),
            synonyms: syn.iter().map(|s| s.to_string()).collect(),
            attributes: attrs.iter().map(|s| s.to_string()).collect(),
            geometry,
            pose,
        };
        Scene {
            objects: vec![
                obj("red_box", "box", &["crate"], &["red"], Primitive::Box { size: Vec3::new(0.3, 0.3, 0.3) }, Pose::translation(-0.25, 0.0, 1.2)),
                obj("mustard", "mustard bottle", &["mustard", "yellow sauce"], &["yellow"], Primitive::Cylinder { radius: 0.1, height: 0.3 }, Pose::translation(0.25, 0.0, 1.2)),
                obj("wall", "wall", &[], &[], Primitive::Box { size: Vec3::new(3.0, 3.0, 0.05) }, Pose::translation(0.0, 0.0, 2.5)),
                obj("ketchup", "ketchup bottle", &["ketchup", "red sauce"], &["red"], Primitive::Sphere { radius: 0.1 }, Pose::translation(0.0, 0.0, 3.0)),
                obj("coin", "coin", &[], &[], Primitive::Cylinder { radius: 0.01, height: 0.002 }, Pose::translation(0.0, 0.2, 1.0)),
            ],
            camera: CameraConfig {
                pose: Pose::identity(),
                intrinsics: Intrinsics { fx: 200.0, fy: 200.0, cx: 80.0, cy: 60.0 },
                width: 160,
                height: 120,
                noise: None,
            },
        }
    }

    #[test]
    fn enable_then_disable_restores_registry() {
        let s = scene();
        let view = s.render().unwrap();
        let params = PipelineParams { min_pts: 10, ..Default::default() };
        let ctx = PerceptionContext { scene: &s, view: &view, params: &params };
        let mut reg = ObstacleRegistry::new();
        let first = apply_intent(&mut reg, &parse_transcript("avoid the yellow sauce", &s.vocabulary()).unwrap(), &ctx, 1);
        assert_eq!(first.outcomes[0].outcome, Outcome::Added);
        let before = reg.active().clone();

        let add = parse_transcript("avoid the red box", &s.vocabulary()).unwrap();
        let r = apply_intent(&mut reg, &add, &ctx, 2);
        assert_eq!(r.outcomes.len(), 1);
        assert_eq!((r.outcomes[0].object.as_deref(), r.outcomes[0].outcome), (Some("red_box"), Outcome::Added));
        assert_eq!(reg.active().len(), 2);
        let mesh = &reg.active()["red_box"];
        mesh.mesh.check_convex(1e-9).unwrap();
        assert_eq!(mesh.created_at_ms, 2);

        let r = apply_intent(&mut reg, &parse_transcript("remove the red box", &s.vocabulary()).unwrap(), &ctx, 3);
        assert_eq!(r.outcomes[0].outcome, Outcome::Removed);
        assert_eq!(reg.active(), &before);
        assert_eq!(reg.history().len(), 3);
    }

    #[test]
    fn outcomes_for_failures() {
        let s = scene();
        let view = s.render().unwrap();
        let params = PipelineParams { min_pts: 10, ..Default::default() };
        let ctx = PerceptionContext { scene: &s, view: &view, params: &params };
        let mut reg = ObstacleRegistry::new();
        let intent = Intent::new(vec!["spaceship".into(), "red sauce".into(), "coin".into()], vec!["box".into()], "t").unwrap();
        let r = apply_intent(&mut reg, &intent, &ctx, 0);
        let kinds: Vec<Outcome> = r.outcomes.iter().map(|o| o.outcome).collect();
        assert_eq!(kinds, vec![Outcome::NotFound, Outcome::NotVisible, Outcome::TooSparse, Outcome::NotFound]);
        assert!(reg.active().is_empty());
        assert_eq!(reg.history().len(), 1);
    }

    #[test]
    fn replacing_keeps_one_mesh_per_object() {
        let s = scene();
        let view = s.render().unwrap();
        let params = PipelineParams { min_pts: 10, ..Default::default() };
        let ctx = PerceptionContext { scene: &s, view: &view, params: &params };
        let mut reg = ObstacleRegistry::new();
        let i = Intent::new(vec!["crate".into()], vec![], "t").unwrap();
        apply_intent(&mut reg, &i, &ctx, 0);
        let r = apply_intent(&mut reg, &i, &ctx, 5);
        assert_eq!(r.outcomes[0].outcome, Outcome::Replaced);
        assert_eq!(reg.active().len(), 1);
        assert_eq!(reg.active()["red_box"].created_at_ms, 5);
    }

    #[test]
    fn intent_normalizes_and_rejects_empty() {
        let i = Intent::new(vec!["  Red Box ".into(), "".into()], vec![], "x").unwrap();
        assert_eq!(i.enable, vec!["red box"]);
        assert_eq!(Intent::new(vec![" ".into()], vec![], "x"), Err(CommandError::EmptyIntent));
    }
}
