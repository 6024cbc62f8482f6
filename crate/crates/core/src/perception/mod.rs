//! Synthetic sensing and the sub-cloud to collision-mesh pipeline.

mod ground;
mod pipeline;
mod render;
mod scene;
pub mod synthetic;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{pose_serde, GeometryError, Pose};

pub use ground::{ground_phrase, grounding_score, ATTRIBUTE_SCORE, LABEL_SCORE, SYNONYM_SCORE};
pub use pipeline::{build_collision_mesh, build_collision_mesh_staged, CollisionMesh, PipelineParams, PipelineStages};
pub use render::{project_mask_to_subcloud, render_depth_view, DepthNoise, DepthView, Intrinsics};
pub use scene::{capsule_object_distance, Primitive, SceneObject};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PerceptionError {
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("object '{0}' is not visible")]
    NotVisible(String),
    #[error("cluster too sparse: {points} points, min_pts {min_pts}")]
    TooSparse { points: usize, min_pts: usize },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("scene: {0}")]
    Scene(String),
}

/// Head camera used for segmentation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraConfig {
    /// world ← camera.
    #[serde(with = "pose_serde")]
    pub pose: Pose,
    pub intrinsics: Intrinsics,
    pub width: usize,
    pub height: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<DepthNoise>,
}

/// Scene file: objects plus the camera that observes them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scene {
    pub objects: Vec<SceneObject>,
    pub camera: CameraConfig,
}

impl Scene {
    pub fn from_json(text: &str) -> Result<Self, PerceptionError> {
        let scene: Scene = serde_json::from_str(text).map_err(|e| PerceptionError::Scene(e.to_string()))?;
        scene.validate()?;
        Ok(scene)
    }

    pub fn validate(&self) -> Result<(), PerceptionError> {
        let mut seen = std::collections::BTreeSet::new();
        for o in &self.objects {
            if !seen.insert(o.id.as_str()) {
                return Err(PerceptionError::Scene(format!("duplicate object id '{}'", o.id)));
            }
            o.geometry.validate()?;
        }
        self.camera.intrinsics.validate()
    }

    pub fn object(&self, id: &str) -> Option<&SceneObject> {
        self.objects.iter().find(|o| o.id == id)
    }

    /// Every label, synonym and attribute phrase, for fuzzy matching.
    pub fn vocabulary(&self) -> Vec<String> {
        let mut out = std::collections::BTreeSet::new();
        for o in &self.objects {
            out.insert(o.label.to_lowercase());
            out.extend(o.synonyms.iter().map(|s| s.to_lowercase()));
        }
        out.into_iter().collect()
    }

    pub fn render(&self) -> Result<DepthView, PerceptionError> {
        let c = &self.camera;
        render_depth_view(&self.objects, &c.pose, &c.intrinsics, (c.width, c.height), c.noise)
    }
}
