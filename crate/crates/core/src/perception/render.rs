use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{PerceptionError, SceneObject};
use crate::geometry::{Pose, PointCloud, Vec3, CAMERA_FRAME};

/// Pinhole intrinsics; camera looks along +z with x right and y down.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl Intrinsics {
    pub fn validate(&self) -> Result<(), PerceptionError> {
        if self.fx > 0.0 && self.fy > 0.0 && self.cx.is_finite() && self.cy.is_finite() {
            Ok(())
        } else {
            Err(PerceptionError::Parameter(format!("invalid intrinsics {self:?}")))
        }
    }

    /// Camera-frame ray through pixel `(u, v)`, scaled so its z component is 1.
    pub fn ray(&self, u: usize, v: usize) -> Vec3 {
        Vec3::new((u as f64 - self.cx) / self.fx, (v as f64 - self.cy) / self.fy, 1.0)
    }
}

/// Additive Gaussian noise on depth, drawn in row-major pixel order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DepthNoise {
    pub sigma: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DepthView {
    pub width: usize,
    pub height: usize,
    pub intrinsics: Intrinsics,
    /// world ← camera.
    pub camera_pose: Pose,
    /// Row-major z-depth in meters; 0 means no return.
    pub depth: Vec<f64>,
    /// Row-major object id of the nearest hit, only where depth > 0.
    pub label_map: Vec<Option<String>>,
}

impl DepthView {
    pub fn at(&self, u: usize, v: usize) -> (f64, Option<&str>) {
        let i = v * self.width + u;
        (self.depth[i], self.label_map[i].as_deref())
    }
}

/// Ray-casts every pixel against every object and keeps the nearest hit.
/// Depth is the camera-frame z of the hit, not the ray length.
pub fn render_depth_view(
    scene: &[SceneObject],
    camera_pose: &Pose,
    intrinsics: &Intrinsics,
    (width, height): (usize, usize),
    noise: Option<DepthNoise>,
) -> Result<DepthView, PerceptionError> {
    intrinsics.validate()?;
    if width == 0 || height == 0 {
        return Err(PerceptionError::Parameter(format!("resolution {width}x{height} is empty")));
    }
    let mut sampler = match noise {
        Some(n) if n.sigma > 0.0 => Some((
            Normal::new(0.0, n.sigma).map_err(|e| PerceptionError::Parameter(e.to_string()))?,
            ChaCha8Rng::seed_from_u64(n.seed),
        )),
        Some(n) if n.sigma < 0.0 => return Err(PerceptionError::Parameter(format!("noise sigma {} < 0", n.sigma))),
        _ => None,
    };
    let origin = camera_pose.translation.vector;
    let mut depth = vec![0.0; width * height];
    let mut label_map = vec![None; width * height];
    for v in 0..height {
        for u in 0..width {
            let dir = camera_pose.rotation * intrinsics.ray(u, v);
            let hit = scene
                .iter()
                .filter_map(|o| o.ray_hit(&origin, &dir).map(|t| (t, o)))
                .min_by(|a, b| a.0.total_cmp(&b.0));
            if let Some((t, o)) = hit {
                let mut z = t;
                if let Some((dist, rng)) = sampler.as_mut() {
                    z += dist.sample(rng);
                }
                if z > 0.0 {
                    depth[v * width + u] = z;
                    label_map[v * width + u] = Some(o.id.clone());
                }
            }
        }
    }
    Ok(DepthView { width, height, intrinsics: *intrinsics, camera_pose: *camera_pose, depth, label_map })
}

/// Back-projects the pixels labeled `object_id` into the camera frame.
pub fn project_mask_to_subcloud(view: &DepthView, object_id: &str) -> Result<PointCloud, PerceptionError> {
    let mut points = Vec::new();
    for v in 0..view.height {
        for u in 0..view.width {
            let (z, label) = view.at(u, v);
            if label == Some(object_id) && z > 0.0 {
                points.push(view.intrinsics.ray(u, v) * z);
            }
        }
    }
    if points.is_empty() {
        return Err(PerceptionError::NotVisible(object_id.to_string()));
    }
    Ok(PointCloud::new(points, CAMERA_FRAME))
}
