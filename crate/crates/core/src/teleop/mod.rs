//! Operator session layer: device events to Cartesian references, workspace
//! calibration and haptics, ground-truth collision checks, and the recorded
//! trial format with its replay harness.

mod log;
pub mod script;
mod session;
mod sim;
mod trial;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::command::CommandError;
use crate::geometry::{convex_hull, pose_serde, vec3_array, GeometryError, Pose, Vec3};
use crate::kinematics::{world_capsules, Hand, KinematicsError, RobotModel};
use crate::perception::{capsule_object_distance, PerceptionError, SceneObject};
use crate::wbc::WbcError;

pub use self::log::{file_hash, LogHeader, LogLine, TeleopLog};
pub use session::{InputEffect, TeleopSession};
pub use sim::{Simulator, SystemConfig, TeleopParams};
pub use trial::{run_trial, CollisionEpisode, TrialReport, TrialSetup, BUNDLED_CONFIG, BUNDLED_ROBOT, BUNDLED_SCENE, SETTLE_TIME};

#[derive(Debug, Error)]
pub enum TeleopError {
    #[error("calibration: {0}; sweep the trackers over a wider volume")]
    Calibration(String),
    #[error("session is not calibrated")]
    NotCalibrated,
    #[error("event out of order: t {t} before {last} for the {hand:?} hand")]
    OutOfOrder { hand: Hand, t: f64, last: f64 },
    #[error("replay integrity: {0}")]
    Integrity(String),
    #[error("log format, line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error(transparent)]
    Wbc(#[from] WbcError),
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
    #[error(transparent)]
    Perception(#[from] PerceptionError),
    #[error(transparent)]
    Command(#[from] CommandError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Buttons {
    /// Level: held or not.
    #[serde(default)]
    pub clutch: bool,
    /// Edge: set only on the event where the button went down.
    #[serde(default)]
    pub gripper_toggle: bool,
    /// Edge: set on release, with the transcript as payload.
    #[serde(default)]
    pub speak: bool,
}

/// One tracker sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceEvent {
    pub t: f64,
    pub hand: Hand,
    /// Tracker frame, which is aligned with the world frame.
    #[serde(with = "pose_serde")]
    pub pose: Pose,
    #[serde(default)]
    pub buttons: Buttons,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payload: Option<String>,
}

/// Axis-aligned box the trackers were swept over.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkspaceBox {
    #[serde(with = "vec3_array")]
    pub min: Vec3,
    #[serde(with = "vec3_array")]
    pub max: Vec3,
    pub margin: f64,
}

impl WorkspaceBox {
    pub fn new(min: Vec3, max: Vec3, margin: f64) -> Result<Self, TeleopError> {
        let b = WorkspaceBox { min, max, margin };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<(), TeleopError> {
        let ordered = (0..3).all(|i| self.min[i] < self.max[i]) && self.min.iter().chain(self.max.iter()).all(|c| c.is_finite());
        if !ordered || !(self.margin >= 0.0) || !self.margin.is_finite() {
            return Err(TeleopError::Parameter(format!("workspace box must have min < max and margin >= 0: {self:?}")));
        }
        Ok(())
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }

    pub fn clamp(&self, p: &Vec3) -> Vec3 {
        Vec3::from_fn(|i, _| p[i].clamp(self.min[i], self.max[i]))
    }

    /// Distance to the nearest face, negative outside.
    pub fn depth(&self, p: &Vec3) -> f64 {
        (0..3).map(|i| (p[i] - self.min[i]).min(self.max[i] - p[i])).fold(f64::INFINITY, f64::min)
    }

    pub fn center(&self) -> Vec3 {
        (self.min + self.max) * 0.5
    }
}

/// Box around a calibration sweep. The hull rejects flat or tiny sweeps; its
/// extreme vertices are the extreme samples, so the box is their min/max.
pub fn calibrate_workspace(samples: &[Pose], margin: f64) -> Result<WorkspaceBox, TeleopError> {
    let points: Vec<Vec3> = samples.iter().map(|p| p.translation.vector).collect();
    let hull = convex_hull(&points).map_err(|e| match e {
        GeometryError::Degenerate(d) => TeleopError::Calibration(d.to_string()),
        other => TeleopError::Calibration(other.to_string()),
    })?;
    let mut min = Vec3::repeat(f64::INFINITY);
    let mut max = Vec3::repeat(f64::NEG_INFINITY);
    for v in &hull.vertices {
        min = min.inf(v);
        max = max.sup(v);
    }
    WorkspaceBox::new(min, max, margin)
}

/// Haptic intensity in `[0, 1]`: zero deeper than `margin` inside the box,
/// rising linearly to one at a face, one outside.
pub fn proximity_event(workspace: &WorkspaceBox, pose: &Pose) -> f64 {
    let depth = workspace.depth(&pose.translation.vector);
    if depth <= 0.0 {
        1.0
    } else if depth >= workspace.margin {
        0.0
    } else {
        1.0 - depth / workspace.margin
    }
}

/// Result of a ground-truth collision check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollisionCheck {
    pub colliding: bool,
    /// Deepest offending link and object, when colliding.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pair: Option<(String, String)>,
    /// Penetration depth in meters, zero when clear.
    pub depth: f64,
    /// Smallest signed capsule-object distance over all pairs.
    pub min_distance: f64,
}

/// Tangency within this distance is not contact.
pub const CONTACT_TOLERANCE: f64 = 1e-9;

/// Tests every link capsule against the true primitive of every scene object,
/// independent of any segmented mesh.
pub fn detect_collision(model: &RobotModel, q: &nalgebra::DVector<f64>, scene: &[SceneObject]) -> Result<CollisionCheck, TeleopError> {
    let capsules = world_capsules(model, q)?;
    let mut check = CollisionCheck { colliding: false, pair: None, depth: 0.0, min_distance: f64::INFINITY };
    for (link, capsule) in &capsules {
        for object in scene {
            let (d, _) = capsule_object_distance(object, capsule);
            check.min_distance = check.min_distance.min(d);
            if d < -CONTACT_TOLERANCE && -d > check.depth {
                check.colliding = true;
                check.depth = -d;
                check.pair = Some((link.clone(), object.id.clone()));
            }
        }
    }
    Ok(check)
}
