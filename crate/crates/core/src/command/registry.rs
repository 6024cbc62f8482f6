use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::Intent;
use crate::perception::{build_collision_mesh, ground_phrase, project_mask_to_subcloud, CollisionMesh, DepthView, PerceptionError, PipelineParams, Scene};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Outcome {
    Added,
    Replaced,
    Removed,
    NotFound,
    NotVisible,
    TooSparse,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Action {
    Enable,
    Disable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhraseOutcome {
    pub phrase: String,
    pub action: Action,
    /// Grounded object, absent when the phrase matched nothing.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub object: Option<String>,
    pub outcome: Outcome,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ResolutionReport {
    pub outcomes: Vec<PhraseOutcome>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub t_ms: u64,
    pub intent: Intent,
    pub report: ResolutionReport,
}

/// Active obstacle meshes keyed by object id, plus an append-only log.
#[derive(Debug, Clone, Default)]
pub struct ObstacleRegistry {
    active: BTreeMap<String, CollisionMesh>,
    history: Vec<HistoryEntry>,
}

impl ObstacleRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn active(&self) -> &BTreeMap<String, CollisionMesh> {
        &self.active
    }

    pub fn history(&self) -> &[HistoryEntry] {
        &self.history
    }

    pub fn meshes(&self) -> impl Iterator<Item = &CollisionMesh> {
        self.active.values()
    }
}

/// Sensing context for `apply_intent`: the scene, a rendered view of it and
/// the pipeline parameters.
pub struct PerceptionContext<'a> {
    pub scene: &'a Scene,
    pub view: &'a DepthView,
    pub params: &'a PipelineParams,
}

/// Resolves every phrase of `intent` against the scene and updates the
/// registry. Failures are reported per phrase, never raised.
pub fn apply_intent(registry: &mut ObstacleRegistry, intent: &Intent, ctx: &PerceptionContext<'_>, t_ms: u64) -> ResolutionReport {
    let mut report = ResolutionReport::default();
    for phrase in &intent.enable {
        let ids = ground_phrase(&ctx.scene.objects, phrase);
        if ids.is_empty() {
            report.outcomes.push(outcome(phrase, Action::Enable, None, Outcome::NotFound, None));
        }
        for id in ids {
            let built = project_mask_to_subcloud(ctx.view, &id)
                .and_then(|cloud| build_collision_mesh(&cloud, ctx.params, &ctx.view.camera_pose, &id, t_ms));
            let (kind, detail) = match built {
                Ok(mesh) => match registry.active.insert(id.clone(), mesh) {
                    Some(_) => (Outcome::Replaced, None),
                    None => (Outcome::Added, None),
                },
                Err(PerceptionError::NotVisible(_)) => (Outcome::NotVisible, None),
                // Sparse clusters and flat patches alike cannot bound a volume.
                Err(e) => (Outcome::TooSparse, Some(e.to_string())),
            };
            report.outcomes.push(outcome(phrase, Action::Enable, Some(id), kind, detail));
        }
    }
    for phrase in &intent.disable {
        let ids = ground_phrase(&ctx.scene.objects, phrase);
        let mut removed_any = false;
        for id in &ids {
            if registry.active.remove(id).is_some() {
                removed_any = true;
                report.outcomes.push(outcome(phrase, Action::Disable, Some(id.clone()), Outcome::Removed, None));
            }
        }
        if !removed_any {
            let detail = (!ids.is_empty()).then(|| "no active mesh".to_string());
            report.outcomes.push(outcome(phrase, Action::Disable, ids.into_iter().next(), Outcome::NotFound, detail));
        }
    }
    registry.history.push(HistoryEntry { t_ms, intent: intent.clone(), report: report.clone() });
    report
}

fn outcome(phrase: &str, action: Action, object: Option<String>, outcome: Outcome, detail: Option<String>) -> PhraseOutcome {
    PhraseOutcome { phrase: phrase.to_string(), action, object, outcome, detail }
}
