use serde::{Deserialize, Serialize};

use crate::geometry::{
    pose_serde, transform_point, ConvexPolytope, GeometryError, Pose, TriangleMesh, Vec3,
};

/// Object geometry in its own frame. Boxes, spheres and cylinders are centered
/// at the origin; cylinders run along local z.
#[derive(Debug, Clone, PartialEq)]
pub enum Primitive {
    /// Full side lengths.
    Box { size: Vec3 },
    Sphere { radius: f64 },
    Cylinder { radius: f64, height: f64 },
    /// Convex mesh in the object frame.
    Mesh(TriangleMesh),
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PrimitiveJson {
    #[serde(rename = "type")]
    kind: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    dims: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mesh: Option<TriangleMesh>,
}

impl Serialize for Primitive {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let (kind, dims, mesh) = match self {
            Primitive::Box { size } => ("box", vec![size.x, size.y, size.z], None),
            Primitive::Sphere { radius } => ("sphere", vec![*radius], None),
            Primitive::Cylinder { radius, height } => ("cylinder", vec![*radius, *height], None),
            Primitive::Mesh(m) => ("mesh", Vec::new(), Some(m.clone())),
        };
        PrimitiveJson { kind: kind.into(), dims, mesh }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Primitive {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        let raw = PrimitiveJson::deserialize(d)?;
        let p = match (raw.kind.as_str(), raw.dims.as_slice(), raw.mesh) {
            ("box", [x, y, z], None) => Primitive::Box { size: Vec3::new(*x, *y, *z) },
            ("sphere", [r], None) => Primitive::Sphere { radius: *r },
            ("cylinder", [r, h], None) => Primitive::Cylinder { radius: *r, height: *h },
            ("mesh", [], Some(m)) => Primitive::Mesh(m),
            (k, dims, _) => {
                return Err(D::Error::custom(format!("bad geometry: type '{k}' with {} dims", dims.len())))
            }
        };
        p.validate().map_err(D::Error::custom)?;
        Ok(p)
    }
}

impl Primitive {
    pub fn validate(&self) -> Result<(), GeometryError> {
        let positive = |v: f64, what: &str| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(GeometryError::Parameter(format!("{what} must be positive, got {v}")))
            }
        };
        match self {
            Primitive::Box { size } => size.iter().try_for_each(|&s| positive(s, "box side")),
            Primitive::Sphere { radius } => positive(*radius, "sphere radius"),
            Primitive::Cylinder { radius, height } => {
                positive(*radius, "cylinder radius")?;
                positive(*height, "cylinder height")
            }
            Primitive::Mesh(m) => ConvexPolytope::new(m).map(|_| ()),
        }
    }

    pub fn volume(&self) -> f64 {
        match self {
            Primitive::Box { size } => size.x * size.y * size.z,
            Primitive::Sphere { radius } => 4.0 / 3.0 * std::f64::consts::PI * radius.powi(3),
            Primitive::Cylinder { radius, height } => std::f64::consts::PI * radius * radius * height,
            Primitive::Mesh(m) => m.volume(),
        }
    }

    /// Exact signed Euclidean distance to the surface, negative inside.
    pub fn signed_distance(&self, p: &Vec3) -> f64 {
        match self {
            Primitive::Box { size } => {
                let q = p.abs() - size * 0.5;
                let outside = q.map(|c| c.max(0.0)).norm();
                outside + q.max().min(0.0)
            }
            Primitive::Sphere { radius } => p.norm() - radius,
            Primitive::Cylinder { radius, height } => {
                let dr = p.xy().norm() - radius;
                let dz = p.z.abs() - height * 0.5;
                let outside = (dr.max(0.0).powi(2) + dz.max(0.0).powi(2)).sqrt();
                outside + dr.max(dz).min(0.0)
            }
            Primitive::Mesh(m) => mesh_signed_distance(m, p),
        }
    }

    /// Smallest `t > 0` with `origin + t·dir` on the surface, entering from outside.
    pub fn ray_hit(&self, origin: &Vec3, dir: &Vec3) -> Option<f64> {
        let (t_in, _) = match self {
            Primitive::Box { size } => slab(origin, dir, &(size * 0.5))?,
            Primitive::Sphere { radius } => {
                let (t0, t1) = quadratic_roots(dir.norm_squared(), 2.0 * origin.dot(dir), origin.norm_squared() - radius * radius)?;
                (t0, t1)
            }
            Primitive::Cylinder { radius, height } => cylinder_interval(origin, dir, *radius, height * 0.5)?,
            Primitive::Mesh(m) => convex_interval(m, origin, dir)?,
        };
        (t_in > 0.0).then_some(t_in)
    }
}

fn mesh_signed_distance(m: &TriangleMesh, p: &Vec3) -> f64 {
    let planes = m.face_planes();
    let excess = planes.iter().map(|(n, d)| n.dot(p) - d).fold(f64::NEG_INFINITY, f64::max);
    if excess <= 0.0 {
        // Inside a convex body the nearest boundary point lies on a face plane.
        return excess;
    }
    m.triangles
        .iter()
        .map(|t| {
            let c = crate::geometry::closest_point_on_triangle(p, &m.vertices[t[0]], &m.vertices[t[1]], &m.vertices[t[2]]);
            (c - p).norm()
        })
        .fold(f64::INFINITY, f64::min)
}

fn quadratic_roots(a: f64, b: f64, c: f64) -> Option<(f64, f64)> {
    if a <= 0.0 {
        return None;
    }
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return None;
    }
    let s = disc.sqrt();
    // Stable form avoids cancellation when b² ≫ 4ac.
    let q = -0.5 * (b + b.signum() * s);
    let (r0, r1) = if q == 0.0 { (0.0, 0.0) } else { (q / a, c / q) };
    Some((r0.min(r1), r0.max(r1)))
}

fn slab(origin: &Vec3, dir: &Vec3, half: &Vec3) -> Option<(f64, f64)> {
    let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
    for k in 0..3 {
        if dir[k] == 0.0 {
            if origin[k].abs() > half[k] {
                return None;
            }
            continue;
        }
        let (a, b) = ((-half[k] - origin[k]) / dir[k], (half[k] - origin[k]) / dir[k]);
        lo = lo.max(a.min(b));
        hi = hi.min(a.max(b));
    }
    (lo <= hi).then_some((lo, hi))
}

fn cylinder_interval(origin: &Vec3, dir: &Vec3, r: f64, half_h: f64) -> Option<(f64, f64)> {
    let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
    if dir.z == 0.0 {
        if origin.z.abs() > half_h {
            return None;
        }
    } else {
        let (a, b) = ((-half_h - origin.z) / dir.z, (half_h - origin.z) / dir.z);
        lo = a.min(b);
        hi = a.max(b);
    }
    let a = dir.x * dir.x + dir.y * dir.y;
    let c = origin.x * origin.x + origin.y * origin.y - r * r;
    if a == 0.0 {
        if c > 0.0 {
            return None;
        }
    } else {
        let (t0, t1) = quadratic_roots(a, 2.0 * (origin.x * dir.x + origin.y * dir.y), c)?;
        lo = lo.max(t0);
        hi = hi.min(t1);
    }
    (lo <= hi).then_some((lo, hi))
}

/// Cyrus–Beck clipping against the face planes.
fn convex_interval(m: &TriangleMesh, origin: &Vec3, dir: &Vec3) -> Option<(f64, f64)> {
    let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
    for (n, d) in m.face_planes() {
        let denom = n.dot(dir);
        let num = d - n.dot(origin);
        if denom == 0.0 {
            if num < 0.0 {
                return None;
            }
        } else if denom > 0.0 {
            hi = hi.min(num / denom);
        } else {
            lo = lo.max(num / denom);
        }
    }
    (lo <= hi).then_some((lo, hi))
}

/// Labeled physical object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneObject {
    pub id: String,
    pub label: String,
    #[serde(default)]
    pub synonyms: Vec<String>,
    #[serde(default)]
    pub attributes: Vec<String>,
    pub geometry: Primitive,
    #[serde(with = "pose_serde")]
    pub pose: Pose,
}

impl SceneObject {
    pub fn signed_distance(&self, p_world: &Vec3) -> f64 {
        self.geometry.signed_distance(&self.pose.inverse_transform_vector(&(p_world - self.pose.translation.vector)))
    }

    pub fn ray_hit(&self, origin_world: &Vec3, dir_world: &Vec3) -> Option<f64> {
        let o = self.pose.inverse_transform_vector(&(origin_world - self.pose.translation.vector));
        let d = self.pose.inverse_transform_vector(dir_world);
        self.geometry.ray_hit(&o, &d)
    }

    /// Smallest signed distance from the segment `[a, b]` to the object.
    ///
    /// The signed distance of a convex body is a convex function, so its
    /// restriction to a segment is unimodal and golden-section search finds the
    /// minimum to within floating-point resolution of the parameter.
    pub fn segment_min_distance(&self, a: &Vec3, b: &Vec3) -> (f64, Vec3) {
        let f = |s: f64| self.signed_distance(&(a + (b - a) * s));
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        if (b - a).norm() > 0.0 {
            const INV_PHI: f64 = 0.618_033_988_749_894_8;
            let mut x1 = hi - INV_PHI * (hi - lo);
            let mut x2 = lo + INV_PHI * (hi - lo);
            let (mut f1, mut f2) = (f(x1), f(x2));
            while hi - lo > 1e-12 {
                if f1 <= f2 {
                    hi = x2;
                    x2 = x1;
                    f2 = f1;
                    x1 = hi - INV_PHI * (hi - lo);
                    f1 = f(x1);
                } else {
                    lo = x1;
                    x1 = x2;
                    f1 = f2;
                    x2 = lo + INV_PHI * (hi - lo);
                    f2 = f(x2);
                }
            }
        }
        let s = 0.5 * (lo + hi);
        // Endpoints are not sampled by the bracket; check them explicitly.
        [(f(s), s), (f(0.0), 0.0), (f(1.0), 1.0)]
            .into_iter()
            .min_by(|x, y| x.0.total_cmp(&y.0))
            .map(|(d, s)| (d, a + (b - a) * s))
            .unwrap()
    }

    /// Ground-truth world-frame mesh of a box or convex mesh primitive;
    /// spheres and cylinders are tessellated with `segments` around.
    pub fn world_mesh(&self, segments: usize) -> TriangleMesh {
        let local: Vec<Vec3> = match &self.geometry {
            Primitive::Box { size } => {
                let h = size * 0.5;
                (0..8)
                    .map(|i| Vec3::new(if i & 1 == 0 { -h.x } else { h.x }, if i & 2 == 0 { -h.y } else { h.y }, if i & 4 == 0 { -h.z } else { h.z }))
                    .collect()
            }
            Primitive::Sphere { radius } => {
                let n = segments.max(6);
                let mut v = vec![Vec3::new(0.0, 0.0, *radius), Vec3::new(0.0, 0.0, -radius)];
                for i in 1..n / 2 {
                    let th = std::f64::consts::PI * i as f64 / (n / 2) as f64;
                    for j in 0..n {
                        let ph = 2.0 * std::f64::consts::PI * j as f64 / n as f64;
                        v.push(Vec3::new(th.sin() * ph.cos(), th.sin() * ph.sin(), th.cos()) * *radius);
                    }
                }
                v
            }
            Primitive::Cylinder { radius, height } => {
                let n = segments.max(6);
                (0..n)
                    .flat_map(|j| {
                        let ph = 2.0 * std::f64::consts::PI * j as f64 / n as f64;
                        let (x, y) = (radius * ph.cos(), radius * ph.sin());
                        [Vec3::new(x, y, height * 0.5), Vec3::new(x, y, -height * 0.5)]
                    })
                    .collect()
            }
            Primitive::Mesh(m) => m.vertices.clone(),
        };
        let pts: Vec<Vec3> = local.iter().map(|p| transform_point(&self.pose, p)).collect();
        crate::geometry::convex_hull(&pts).expect("primitive vertex sets are full-dimensional")
    }
}

/// Closest signed distance between a capsule and an object's true geometry.
pub fn capsule_object_distance(object: &SceneObject, capsule: &crate::geometry::Capsule) -> (f64, Vec3) {
    let (d, on_axis) = object.segment_min_distance(&capsule.endpoint_a, &capsule.endpoint_b);
    (d - capsule.radius, on_axis)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::UnitQuaternion;
    use proptest::prelude::*;

    fn object(geometry: Primitive, pose: Pose) -> SceneObject {
        SceneObject { id: "o".into(), label: "thing".into(), synonyms: vec![], attributes: vec![], geometry, pose }
    }

    #[test]
    fn primitive_json_shapes() {
        let p: Primitive = serde_json::from_str(r#"{"type":"box","dims":[0.1,0.2,0.3]}"#).unwrap();
        assert_eq!(p, Primitive::Box { size: Vec3::new(0.1, 0.2, 0.3) });
        assert!(serde_json::from_str::<Primitive>(r#"{"type":"box","dims":[0.1,0.2]}"#).is_err());
        assert!(serde_json::from_str::<Primitive>(r#"{"type":"sphere","dims":[-1]}"#).is_err());
        let back: Primitive = serde_json::from_str(&serde_json::to_string(&p).unwrap()).unwrap();
        assert_eq!(back, p);
    }

    #[test]
    fn box_distance_cases() {
        let b = Primitive::Box { size: Vec3::new(2.0, 2.0, 2.0) };
        assert_eq!(b.signed_distance(&Vec3::zeros()), -1.0);
        assert_eq!(b.signed_distance(&Vec3::new(3.0, 0.0, 0.0)), 2.0);
        assert!((b.signed_distance(&Vec3::new(2.0, 2.0, 1.0)) - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn sphere_hit_on_axis() {
        let o = object(Primitive::Sphere { radius: 1.0 }, Pose::translation(0.0, 0.0, 2.0));
        assert_eq!(o.ray_hit(&Vec3::zeros(), &Vec3::z()), Some(1.0));
        assert_eq!(o.ray_hit(&Vec3::zeros(), &Vec3::x()), None);
    }

    #[test]
    fn segment_min_distance_through_box() {
        let o = object(Primitive::Box { size: Vec3::new(0.2, 0.2, 0.2) }, Pose::translation(1.0, 0.0, 0.0));
        let (d, _) = o.segment_min_distance(&Vec3::new(1.0, -1.0, 0.0), &Vec3::new(1.0, 1.0, 0.0));
        assert!((d + 0.1).abs() < 1e-9, "{d}");
        let (d, p) = o.segment_min_distance(&Vec3::new(0.0, 0.0, 0.5), &Vec3::new(2.0, 0.0, 0.5));
        assert!((d - 0.4).abs() < 1e-9 && (p.x - 1.0).abs() < 0.1 + 1e-6);
    }

    fn arb_primitive() -> impl Strategy<Value = Primitive> {
        prop_oneof![
            (0.05f64..1.0, 0.05f64..1.0, 0.05f64..1.0).prop_map(|(x, y, z)| Primitive::Box { size: Vec3::new(x, y, z) }),
            (0.05f64..1.0).prop_map(|r| Primitive::Sphere { radius: r }),
            (0.05f64..1.0, 0.05f64..1.0).prop_map(|(r, h)| Primitive::Cylinder { radius: r, height: h }),
        ]
    }

    fn arb_pose() -> impl Strategy<Value = Pose> {
        (prop::array::uniform3(-1.0f64..1.0), prop::array::uniform3(-3.0f64..3.0)).prop_map(|(t, r)| {
            crate::geometry::pose_from_parts(Vec3::from(t), UnitQuaternion::from_scaled_axis(Vec3::from(r)))
        })
    }

    proptest! {
        #[test]
        fn ray_hits_lie_on_surface(g in arb_primitive(), pose in arb_pose(), dir in prop::array::uniform3(-1.0f64..1.0)) {
            let o = object(g, pose);
            let origin = Vec3::new(0.0, 0.0, 4.0);
            let target = pose.translation.vector + Vec3::from(dir) * 0.3;
            let d = target - origin;
            if let Some(t) = o.ray_hit(&origin, &d) {
                let p = origin + d * t;
                prop_assert!(o.signed_distance(&p).abs() < 1e-9);
                // Nothing on the ray before the hit is inside.
                for k in 1..20 {
                    let q = origin + d * (t * k as f64 / 20.0);
                    prop_assert!(o.signed_distance(&q) > -1e-9);
                }
            }
        }

        #[test]
        fn mesh_distance_matches_box(size in prop::array::uniform3(0.05f64..1.0), p in prop::array::uniform3(-1.5f64..1.5)) {
            let bx = object(Primitive::Box { size: Vec3::from(size) }, Pose::identity());
            let mesh = object(Primitive::Mesh(bx.world_mesh(0)), Pose::identity());
            let p = Vec3::from(p);
            prop_assert!((bx.signed_distance(&p) - mesh.signed_distance(&p)).abs() < 1e-9);
        }

        #[test]
        fn segment_min_matches_sampling(g in arb_primitive(), pose in arb_pose(), a in prop::array::uniform3(-1.5f64..1.5), b in prop::array::uniform3(-1.5f64..1.5)) {
            let o = object(g, pose);
            let (a, b) = (Vec3::from(a), Vec3::from(b));
            let (d, _) = o.segment_min_distance(&a, &b);
            let sampled = (0..=2000).map(|i| o.signed_distance(&(a + (b - a) * (i as f64 / 2000.0)))).fold(f64::INFINITY, f64::min);
            prop_assert!(d <= sampled + 1e-9);
            prop_assert!(sampled - d <= (b - a).norm() / 2000.0 + 1e-9);
        }
    }
}
