use serde::{Deserialize, Serialize};

use super::PerceptionError;
use crate::geometry::{
    convex_hull, dbscan_largest_cluster, decimate, estimate_normals, scale_about_centroid, select_normal_radius,
    voxel_downsample, PointCloud, Pose, TriangleMesh, CAMERA_FRAME, WORLD_FRAME,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineParams {
    pub leaf1: f64,
    pub leaf2: f64,
    pub dbscan_eps: f64,
    pub min_pts: usize,
    pub max_triangles: usize,
    pub safety_scale: f64,
}

impl Default for PipelineParams {
    fn default() -> Self {
        Self { leaf1: 0.02, leaf2: 0.01, dbscan_eps: 0.10, min_pts: 50, max_triangles: 5000, safety_scale: 1.05 }
    }
}

impl PipelineParams {
    pub fn validate(&self) -> Result<(), PerceptionError> {
        let all_positive = [self.leaf1, self.leaf2, self.dbscan_eps, self.safety_scale].iter().all(|v| *v > 0.0 && v.is_finite())
            && self.min_pts > 0
            && self.max_triangles > 0;
        if !all_positive {
            return Err(PerceptionError::Parameter(format!("pipeline parameters must be positive: {self:?}")));
        }
        if self.leaf2 > self.leaf1 {
            return Err(PerceptionError::Parameter(format!("leaf2 {} exceeds leaf1 {}", self.leaf2, self.leaf1)));
        }
        Ok(())
    }
}

/// World-frame convex obstacle with provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollisionMesh {
    #[serde(flatten)]
    pub mesh: TriangleMesh,
    pub source_object: String,
    pub scale_applied: f64,
    pub created_at_ms: u64,
}

/// Intermediate products of one pipeline run, all in the camera frame.
#[derive(Debug, Clone)]
pub struct PipelineStages {
    pub downsampled: PointCloud,
    pub with_normals: PointCloud,
    pub clustered: PointCloud,
    pub refined: PointCloud,
    /// Convex, at most `max_triangles`, before scaling.
    pub hull: TriangleMesh,
    pub scaled: TriangleMesh,
}

pub fn build_collision_mesh(
    subcloud: &PointCloud,
    params: &PipelineParams,
    camera_pose: &Pose,
    source_object: &str,
    created_at_ms: u64,
) -> Result<CollisionMesh, PerceptionError> {
    build_collision_mesh_staged(subcloud, params, camera_pose, source_object, created_at_ms).map(|(m, _)| m)
}

pub fn build_collision_mesh_staged(
    subcloud: &PointCloud,
    params: &PipelineParams,
    camera_pose: &Pose,
    source_object: &str,
    created_at_ms: u64,
) -> Result<(CollisionMesh, PipelineStages), PerceptionError> {
    params.validate()?;
    if subcloud.is_empty() {
        return Err(PerceptionError::TooSparse { points: 0, min_pts: params.min_pts });
    }
    if subcloud.frame != CAMERA_FRAME {
        return Err(PerceptionError::Parameter(format!("sub-cloud must be in the camera frame, got '{}'", subcloud.frame)));
    }
    let downsampled = voxel_downsample(subcloud, params.leaf1)?;
    let with_normals = estimate_normals(&downsampled, select_normal_radius(subcloud.len()))?;
    let clustered = dbscan_largest_cluster(&with_normals, params.dbscan_eps, params.min_pts);
    if clustered.is_empty() {
        return Err(PerceptionError::TooSparse { points: downsampled.len(), min_pts: params.min_pts });
    }
    let refined = voxel_downsample(&clustered, params.leaf2)?;
    let mut hull = convex_hull(&refined.points)?;
    if hull.triangles.len() > params.max_triangles {
        // Collapsing hull edges can dent the surface; the hull of the
        // survivors is convex again and has no more faces.
        let reduced = decimate(&hull, params.max_triangles)?;
        hull = convex_hull(&reduced.vertices)?;
    }
    let scaled = scale_about_centroid(&hull, params.safety_scale)?;
    let mesh = scaled.transformed(camera_pose, WORLD_FRAME);
    let out = CollisionMesh { mesh, source_object: source_object.to_string(), scale_applied: params.safety_scale, created_at_ms };
    Ok((out, PipelineStages { downsampled, with_normals, clustered, refined, hull, scaled }))
}
