//! Geometric kernel: point-cloud filtering, clustering, convex hulls,
//! decimation and the distance queries used by the controller.

mod dbscan;
mod decimate;
mod distance;
mod hull;
mod kdtree;
mod normals;
pub mod ply;
mod voxel;

use nalgebra::{Isometry3, Point3, Translation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use dbscan::{dbscan_labels, dbscan_largest_cluster, DbscanLabel};
pub use decimate::decimate;
pub use distance::{
    capsule_capsule_distance, capsule_convex_distance, closest_point_on_segment,
    segment_segment_closest, ConvexPolytope, PairDistance, SegmentClosest,
};
pub(crate) use distance::closest_point_on_triangle;
pub use hull::convex_hull;
pub use kdtree::KdTree;
pub use normals::{estimate_normals, select_normal_radius};
pub use voxel::voxel_downsample;

/// 3-vector in meters.
pub type Vec3 = Vector3<f64>;

/// Rigid transform; rotation is a unit quaternion, translation in meters.
pub type Pose = Isometry3<f64>;

/// Frame identifier carried by clouds and meshes.
pub type Frame = String;

pub const WORLD_FRAME: &str = "world";
pub const CAMERA_FRAME: &str = "camera";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("degenerate hull input: {0}")]
    Degenerate(Degeneracy),
    #[error("mesh topology: {0}")]
    Topology(String),
    #[error("mesh is not convex: vertex {vertex} lies {excess:.3e} m outside face {face}")]
    NonConvex { face: usize, vertex: usize, excess: f64 },
}

/// Failure mode for hull construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Degeneracy {
    TooFewPoints,
    Coincident,
    Collinear,
    Coplanar,
}

impl std::fmt::Display for Degeneracy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Degeneracy::TooFewPoints => "fewer than 4 points",
            Degeneracy::Coincident => "points coincide",
            Degeneracy::Collinear => "points are collinear",
            Degeneracy::Coplanar => "points are coplanar",
        };
        f.write_str(s)
    }
}

/// Ordered set of 3D points with optional per-point unit normals.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Vec3>,
    pub normals: Option<Vec<Vec3>>,
    /// Set by normal estimation: `true` where the neighborhood had fewer than
    /// three points and the normal is the fallback `+z`.
    pub degenerate: Option<Vec<bool>>,
    pub frame: Frame,
}

impl PointCloud {
    pub fn new(points: Vec<Vec3>, frame: impl Into<Frame>) -> Self {
        Self { points, normals: None, degenerate: None, frame: frame.into() }
    }

    pub fn empty(frame: impl Into<Frame>) -> Self {
        Self::new(Vec::new(), frame)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Checks the finiteness and unit-normal invariants.
    pub fn validate(&self) -> Result<(), GeometryError> {
        if let Some(i) = self.points.iter().position(|p| !p.iter().all(|c| c.is_finite())) {
            return Err(GeometryError::Parameter(format!("point {i} is not finite")));
        }
        if let Some(normals) = &self.normals {
            if normals.len() != self.points.len() {
                return Err(GeometryError::Parameter(format!(
                    "{} normals for {} points",
                    normals.len(),
                    self.points.len()
                )));
            }
            if let Some(i) = normals.iter().position(|n| (n.norm() - 1.0).abs() > 1e-6) {
                return Err(GeometryError::Parameter(format!("normal {i} is not unit length")));
            }
        }
        Ok(())
    }

    /// Applies `pose` to every point (and rotates normals), relabelling the frame.
    pub fn transformed(&self, pose: &Pose, frame: impl Into<Frame>) -> PointCloud {
        PointCloud {
            points: self.points.iter().map(|p| pose.transform_vector(p) + pose.translation.vector).collect(),
            normals: self
                .normals
                .as_ref()
                .map(|ns| ns.iter().map(|n| pose.rotation * n).collect()),
            degenerate: self.degenerate.clone(),
            frame: frame.into(),
        }
    }
}

/// Indexed triangle mesh. Triangles are wound counter-clockwise seen from outside.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriangleMesh {
    #[serde(with = "vec3_list")]
    pub vertices: Vec<Vec3>,
    pub triangles: Vec<[usize; 3]>,
    pub frame: Frame,
}

impl TriangleMesh {
    pub fn new(vertices: Vec<Vec3>, triangles: Vec<[usize; 3]>, frame: impl Into<Frame>) -> Self {
        Self { vertices, triangles, frame: frame.into() }
    }

    pub fn indices_in_range(&self) -> bool {
        let n = self.vertices.len();
        self.triangles.iter().all(|t| t.iter().all(|&i| i < n))
    }

    /// Every undirected edge is shared by exactly two triangles, with opposite
    /// orientation, and no triangle repeats a vertex.
    pub fn is_watertight(&self) -> bool {
        self.check_watertight().is_ok()
    }

    pub fn check_watertight(&self) -> Result<(), GeometryError> {
        use std::collections::HashMap;
        if self.triangles.is_empty() {
            return Err(GeometryError::Topology("mesh has no triangles".into()));
        }
        if !self.indices_in_range() {
            return Err(GeometryError::Topology("triangle index out of range".into()));
        }
        let mut directed: HashMap<(usize, usize), usize> = HashMap::new();
        for (ti, t) in self.triangles.iter().enumerate() {
            if t[0] == t[1] || t[1] == t[2] || t[0] == t[2] {
                return Err(GeometryError::Topology(format!("triangle {ti} is degenerate")));
            }
            for k in 0..3 {
                let e = (t[k], t[(k + 1) % 3]);
                if directed.insert(e, ti).is_some() {
                    return Err(GeometryError::Topology(format!(
                        "directed edge {:?} used twice",
                        e
                    )));
                }
            }
        }
        for &(a, b) in directed.keys() {
            if !directed.contains_key(&(b, a)) {
                return Err(GeometryError::Topology(format!("edge ({a}, {b}) is a boundary edge")));
            }
        }
        Ok(())
    }

    /// Outward unit normal and plane offset of each face (`n·x = d` on the face).
    pub fn face_planes(&self) -> Vec<(Vec3, f64)> {
        self.triangles
            .iter()
            .map(|t| {
                let (a, b, c) = (self.vertices[t[0]], self.vertices[t[1]], self.vertices[t[2]]);
                let n = (b - a).cross(&(c - a));
                let len = n.norm();
                let n = if len > 0.0 { n / len } else { Vec3::zeros() };
                (n, n.dot(&a))
            })
            .collect()
    }

    /// Every vertex lies on the inner side of every face plane within `tol`.
    pub fn check_convex(&self, tol: f64) -> Result<(), GeometryError> {
        for (face, (n, d)) in self.face_planes().into_iter().enumerate() {
            for (vertex, v) in self.vertices.iter().enumerate() {
                let excess = n.dot(v) - d;
                if excess > tol {
                    return Err(GeometryError::NonConvex { face, vertex, excess });
                }
            }
        }
        Ok(())
    }

    pub fn is_convex(&self, tol: f64) -> bool {
        self.check_convex(tol).is_ok()
    }

    /// Signed volume via the divergence theorem; positive for outward winding.
    pub fn volume(&self) -> f64 {
        self.triangles
            .iter()
            .map(|t| {
                let (a, b, c) = (self.vertices[t[0]], self.vertices[t[1]], self.vertices[t[2]]);
                a.dot(&b.cross(&c)) / 6.0
            })
            .sum()
    }

    pub fn vertex_centroid(&self) -> Vec3 {
        if self.vertices.is_empty() {
            return Vec3::zeros();
        }
        self.vertices.iter().sum::<Vec3>() / self.vertices.len() as f64
    }

    /// Area-weighted vertex normals.
    pub fn vertex_normals(&self) -> Vec<Vec3> {
        let mut normals = vec![Vec3::zeros(); self.vertices.len()];
        for t in &self.triangles {
            let (a, b, c) = (self.vertices[t[0]], self.vertices[t[1]], self.vertices[t[2]]);
            let n = (b - a).cross(&(c - a));
            for &i in t {
                normals[i] += n;
            }
        }
        for n in &mut normals {
            let len = n.norm();
            if len > 0.0 {
                *n /= len;
            }
        }
        normals
    }

    /// Point containment for convex meshes: inside or on every face plane within `tol`.
    pub fn contains_convex(&self, p: &Vec3, tol: f64) -> bool {
        self.face_planes().iter().all(|(n, d)| n.dot(p) - d <= tol)
    }

    pub fn transformed(&self, pose: &Pose, frame: impl Into<Frame>) -> TriangleMesh {
        TriangleMesh {
            vertices: self.vertices.iter().map(|v| transform_point(pose, v)).collect(),
            triangles: self.triangles.clone(),
            frame: frame.into(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("mesh serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }
}

/// Uniformly scales vertices about their centroid: `v ← c + s·(v − c)`.
pub fn scale_about_centroid(mesh: &TriangleMesh, s: f64) -> Result<TriangleMesh, GeometryError> {
    if !(s > 0.0) || !s.is_finite() {
        return Err(GeometryError::Parameter(format!("scale must be positive, got {s}")));
    }
    let c = mesh.vertex_centroid();
    Ok(TriangleMesh {
        vertices: mesh.vertices.iter().map(|v| c + (v - c) * s).collect(),
        triangles: mesh.triangles.clone(),
        frame: mesh.frame.clone(),
    })
}

/// Sphere-swept segment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Capsule {
    #[serde(rename = "a", with = "vec3_array")]
    pub endpoint_a: Vec3,
    #[serde(rename = "b", with = "vec3_array")]
    pub endpoint_b: Vec3,
    #[serde(rename = "r")]
    pub radius: f64,
}

impl Capsule {
    pub fn new(endpoint_a: Vec3, endpoint_b: Vec3, radius: f64) -> Result<Self, GeometryError> {
        if !(radius > 0.0) {
            return Err(GeometryError::Parameter(format!("capsule radius must be positive, got {radius}")));
        }
        if !endpoint_a.iter().chain(endpoint_b.iter()).all(|c| c.is_finite()) {
            return Err(GeometryError::Parameter("capsule endpoints must be finite".into()));
        }
        Ok(Self { endpoint_a, endpoint_b, radius })
    }

    pub fn sphere(center: Vec3, radius: f64) -> Result<Self, GeometryError> {
        Self::new(center, center, radius)
    }

    pub fn transformed(&self, pose: &Pose) -> Capsule {
        Capsule {
            endpoint_a: transform_point(pose, &self.endpoint_a),
            endpoint_b: transform_point(pose, &self.endpoint_b),
            radius: self.radius,
        }
    }
}

pub fn transform_point(pose: &Pose, p: &Vec3) -> Vec3 {
    (pose * Point3::from(*p)).coords
}

pub fn pose_from_parts(xyz: Vec3, rotation: UnitQuaternion<f64>) -> Pose {
    Isometry3::from_parts(Translation3::from(xyz), rotation)
}

/// Wire form of a pose: `{"xyz": [x, y, z], "quat_wxyz": [w, x, y, z]}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseJson {
    pub xyz: [f64; 3],
    pub quat_wxyz: [f64; 4],
}

impl From<&Pose> for PoseJson {
    fn from(p: &Pose) -> Self {
        let q = p.rotation.quaternion();
        let t = p.translation.vector;
        PoseJson { xyz: [t.x, t.y, t.z], quat_wxyz: [q.w, q.i, q.j, q.k] }
    }
}

impl PoseJson {
    /// Rejects quaternions whose norm is off by more than 1e-6 and
    /// renormalizes the rest. Norms already within a few ulp of one are kept
    /// bit-for-bit so poses survive a write/read cycle unchanged.
    pub fn to_pose(&self) -> Result<Pose, GeometryError> {
        let [w, x, y, z] = self.quat_wxyz;
        let q = nalgebra::Quaternion::new(w, x, y, z);
        let norm = q.norm();
        if !norm.is_finite() || (norm - 1.0).abs() > 1e-6 {
            return Err(GeometryError::Parameter(format!("quaternion norm {norm} is not 1")));
        }
        let rotation = if (norm - 1.0).abs() <= 4.0 * f64::EPSILON {
            UnitQuaternion::new_unchecked(q)
        } else {
            UnitQuaternion::from_quaternion(q)
        };
        Ok(pose_from_parts(Vec3::from(self.xyz), rotation))
    }
}

/// serde adapter for `Pose` fields using [`PoseJson`].
pub mod pose_serde {
    use super::{Pose, PoseJson};
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(p: &Pose, s: S) -> Result<S::Ok, S::Error> {
        PoseJson::from(p).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Pose, D::Error> {
        PoseJson::deserialize(d)?.to_pose().map_err(serde::de::Error::custom)
    }
}

pub(crate) mod vec3_array {
    use super::Vec3;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &Vec3, s: S) -> Result<S::Ok, S::Error> {
        [v.x, v.y, v.z].serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec3, D::Error> {
        Ok(Vec3::from(<[f64; 3]>::deserialize(d)?))
    }
}

pub(crate) mod vec3_list {
    use super::Vec3;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &[Vec3], s: S) -> Result<S::Ok, S::Error> {
        v.iter().map(|p| [p.x, p.y, p.z]).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Vec3>, D::Error> {
        Ok(Vec::<[f64; 3]>::deserialize(d)?.into_iter().map(Vec3::from).collect())
    }
}

#[cfg(test)]
pub(crate) mod test_shapes {
    use super::*;

    pub fn unit_cube_corners() -> Vec<Vec3> {
        let mut pts = Vec::new();
        for x in [0.0, 1.0] {
            for y in [0.0, 1.0] {
                for z in [0.0, 1.0] {
                    pts.push(Vec3::new(x, y, z));
                }
            }
        }
        pts
    }

    pub fn unit_cube_mesh() -> TriangleMesh {
        convex_hull(&unit_cube_corners()).unwrap()
    }

    /// Subdivided icosahedron projected onto the sphere of `radius`.
    pub fn icosphere(subdivisions: usize, radius: f64) -> TriangleMesh {
        use std::collections::HashMap;
        let t = (1.0 + 5f64.sqrt()) / 2.0;
        let mut verts: Vec<Vec3> = [
            (-1.0, t, 0.0),
            (1.0, t, 0.0),
            (-1.0, -t, 0.0),
            (1.0, -t, 0.0),
            (0.0, -1.0, t),
            (0.0, 1.0, t),
            (0.0, -1.0, -t),
            (0.0, 1.0, -t),
            (t, 0.0, -1.0),
            (t, 0.0, 1.0),
            (-t, 0.0, -1.0),
            (-t, 0.0, 1.0),
        ]
        .iter()
        .map(|&(x, y, z)| Vec3::new(x, y, z).normalize())
        .collect();
        let mut tris: Vec<[usize; 3]> = vec![
            [0, 11, 5],
            [0, 5, 1],
            [0, 1, 7],
            [0, 7, 10],
            [0, 10, 11],
            [1, 5, 9],
            [5, 11, 4],
            [11, 10, 2],
            [10, 7, 6],
            [7, 1, 8],
            [3, 9, 4],
            [3, 4, 2],
            [3, 2, 6],
            [3, 6, 8],
            [3, 8, 9],
            [4, 9, 5],
            [2, 4, 11],
            [6, 2, 10],
            [8, 6, 7],
            [9, 8, 1],
        ];
        for _ in 0..subdivisions {
            let mut mid: HashMap<(usize, usize), usize> = HashMap::new();
            let mut midpoint = |a: usize, b: usize, verts: &mut Vec<Vec3>| {
                let key = (a.min(b), a.max(b));
                *mid.entry(key).or_insert_with(|| {
                    verts.push(((verts[a] + verts[b]) / 2.0).normalize());
                    verts.len() - 1
                })
            };
            let mut next = Vec::with_capacity(tris.len() * 4);
            for [a, b, c] in tris {
                let ab = midpoint(a, b, &mut verts);
                let bc = midpoint(b, c, &mut verts);
                let ca = midpoint(c, a, &mut verts);
                next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
            }
            tris = next;
        }
        TriangleMesh::new(verts.into_iter().map(|v| v * radius).collect(), tris, WORLD_FRAME)
    }
}

#[cfg(test)]
mod tests {
    use super::test_shapes::*;
    use super::*;

    #[test]
    fn scale_volume_and_identity() {
        let cube = unit_cube_mesh();
        assert!((cube.volume() - 1.0).abs() < 1e-9);
        let scaled = scale_about_centroid(&cube, 1.05).unwrap();
        assert!((scaled.volume() - 1.157625).abs() < 1e-9);
        assert_eq!(scale_about_centroid(&cube, 1.0).unwrap(), cube);
        assert!(scale_about_centroid(&cube, 0.0).is_err());
        assert!(scale_about_centroid(&cube, -2.0).is_err());
    }

    #[test]
    fn icosphere_is_closed() {
        let s = icosphere(4, 1.0);
        assert_eq!(s.triangles.len(), 5120);
        s.check_watertight().unwrap();
        assert!(s.volume() > 4.0);
    }

    #[test]
    fn mesh_json_shape() {
        let m = TriangleMesh::new(
            vec![Vec3::new(0.0, 0.0, 0.0), Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 1.0, 0.0)],
            vec![[0, 1, 2]],
            WORLD_FRAME,
        );
        let v: serde_json::Value = serde_json::from_str(&m.to_json()).unwrap();
        assert_eq!(v["vertices"][1], serde_json::json!([1.0, 0.0, 0.0]));
        assert_eq!(v["triangles"][0], serde_json::json!([0, 1, 2]));
        assert_eq!(v["frame"], "world");
        assert_eq!(TriangleMesh::from_json(&m.to_json()).unwrap(), m);
    }

    #[test]
    fn pose_json_rejects_non_unit_quaternion() {
        let bad = PoseJson { xyz: [0.0; 3], quat_wxyz: [2.0, 0.0, 0.0, 0.0] };
        assert!(bad.to_pose().is_err());
        let good = PoseJson { xyz: [1.0, 2.0, 3.0], quat_wxyz: [1.0, 0.0, 0.0, 0.0] };
        let p = good.to_pose().unwrap();
        assert_eq!(PoseJson::from(&p), good);
    }

    #[test]
    fn cloud_validation() {
        let mut c = PointCloud::new(vec![Vec3::new(0.0, 0.0, f64::NAN)], CAMERA_FRAME);
        assert!(c.validate().is_err());
        c.points[0].z = 1.0;
        c.normals = Some(vec![Vec3::new(0.0, 0.0, 2.0)]);
        assert!(c.validate().is_err());
        c.normals = Some(vec![Vec3::new(0.0, 0.0, 1.0)]);
        c.validate().unwrap();
    }
}
