//! Closest-point queries between capsules and convex polytopes.
//!
//! Separation distance comes from GJK on the Minkowski difference of the
//! capsule axis and the polytope; when the axis touches or enters the
//! polytope, a separating-axis search over face normals and edge/axis cross
//! products yields the penetration depth and direction.

use std::collections::BTreeSet;

use super::{Capsule, GeometryError, TriangleMesh, Vec3};

const GJK_MAX_ITERATIONS: usize = 128;
const TOUCH_TOL: f64 = 1e-10;

/// Closest points between two segments.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentClosest {
    pub point_a: Vec3,
    pub point_b: Vec3,
    /// Segment parameters in [0, 1].
    pub s: f64,
    pub t: f64,
    pub distance: f64,
}

/// Signed separation between two bodies. `normal` is the unit vector from the
/// witness on the first body toward the witness on the second; `distance`
/// is negative when the bodies overlap.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairDistance {
    pub point_a: Vec3,
    pub point_b: Vec3,
    pub normal: Vec3,
    pub distance: f64,
}

pub fn closest_point_on_segment(p: &Vec3, a: &Vec3, b: &Vec3) -> (Vec3, f64) {
    let ab = b - a;
    let len2 = ab.norm_squared();
    if len2 <= f64::EPSILON * f64::EPSILON {
        return (*a, 0.0);
    }
    let t = ((p - a).dot(&ab) / len2).clamp(0.0, 1.0);
    (a + ab * t, t)
}

/// Global minimum-distance pair between segments `a0a1` and `b0b1`; either
/// segment may be a single point.
pub fn segment_segment_closest(a0: &Vec3, a1: &Vec3, b0: &Vec3, b1: &Vec3) -> SegmentClosest {
    let eps = f64::EPSILON * f64::EPSILON;
    let d1 = a1 - a0;
    let d2 = b1 - b0;
    let r = a0 - b0;
    let a = d1.norm_squared();
    let e = d2.norm_squared();
    let f = d2.dot(&r);
    let (s, t) = if a <= eps && e <= eps {
        (0.0, 0.0)
    } else if a <= eps {
        (0.0, (f / e).clamp(0.0, 1.0))
    } else {
        let c = d1.dot(&r);
        if e <= eps {
            ((-c / a).clamp(0.0, 1.0), 0.0)
        } else {
            let b = d1.dot(&d2);
            let denom = a * e - b * b;
            let mut s = if denom > eps * a * e { ((b * f - c * e) / denom).clamp(0.0, 1.0) } else { 0.0 };
            let mut t = (b * s + f) / e;
            if t < 0.0 {
                t = 0.0;
                s = (-c / a).clamp(0.0, 1.0);
            } else if t > 1.0 {
                t = 1.0;
                s = ((b - c) / a).clamp(0.0, 1.0);
            }
            (s, t)
        }
    };
    let point_a = a0 + d1 * s;
    let point_b = b0 + d2 * t;
    SegmentClosest { point_a, point_b, s, t, distance: (point_b - point_a).norm() }
}

/// Closest point on triangle `abc` to `p` (Ericson's region test).
pub(crate) fn closest_point_on_triangle(p: &Vec3, a: &Vec3, b: &Vec3, c: &Vec3) -> Vec3 {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return *a;
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return *b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        return a + ab * (d1 / (d1 - d3));
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return *c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        return a + ac * (d2 / (d2 - d6));
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        return b + (c - b) * ((d4 - d3) / ((d4 - d3) + (d5 - d6)));
    }
    let denom = 1.0 / (va + vb + vc);
    a + ab * (vb * denom) + ac * (vc * denom)
}

/// Capsule-capsule separation (surface to surface).
pub fn capsule_capsule_distance(a: &Capsule, b: &Capsule) -> PairDistance {
    let sc = segment_segment_closest(&a.endpoint_a, &a.endpoint_b, &b.endpoint_a, &b.endpoint_b);
    let normal = if sc.distance > TOUCH_TOL {
        (sc.point_b - sc.point_a) / sc.distance
    } else {
        fallback_normal(a, b)
    };
    PairDistance {
        point_a: sc.point_a + normal * a.radius,
        point_b: sc.point_b - normal * b.radius,
        normal,
        distance: sc.distance - a.radius - b.radius,
    }
}

fn fallback_normal(a: &Capsule, b: &Capsule) -> Vec3 {
    let mid = (b.endpoint_a + b.endpoint_b - a.endpoint_a - a.endpoint_b) * 0.5;
    if let Some(n) = mid.try_normalize(1e-12) {
        return n;
    }
    let cross = (a.endpoint_b - a.endpoint_a).cross(&(b.endpoint_b - b.endpoint_a));
    cross.try_normalize(1e-12).unwrap_or_else(Vec3::z)
}

/// A validated convex polytope with cached face planes and edges.
#[derive(Debug, Clone)]
pub struct ConvexPolytope {
    vertices: Vec<Vec3>,
    planes: Vec<(Vec3, f64)>,
    edge_dirs: Vec<Vec3>,
}

impl ConvexPolytope {
    /// Fails unless the mesh is watertight and every vertex is within 1e-6 m
    /// inside every face plane.
    pub fn new(mesh: &TriangleMesh) -> Result<Self, GeometryError> {
        mesh.check_watertight()?;
        mesh.check_convex(1e-6)?;
        let mut edges = BTreeSet::new();
        for t in &mesh.triangles {
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                edges.insert((a.min(b), a.max(b)));
            }
        }
        let edge_dirs = edges
            .into_iter()
            .filter_map(|(a, b)| (mesh.vertices[b] - mesh.vertices[a]).try_normalize(1e-12))
            .collect();
        let planes = mesh.face_planes().into_iter().filter(|(n, _)| n.norm() > 0.5).collect();
        Ok(Self { vertices: mesh.vertices.clone(), planes, edge_dirs })
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    fn support(&self, d: &Vec3) -> Vec3 {
        let mut best = self.vertices[0];
        let mut best_dot = best.dot(d);
        for v in &self.vertices[1..] {
            let dot = v.dot(d);
            if dot > best_dot {
                best_dot = dot;
                best = *v;
            }
        }
        best
    }

    /// Signed distance from a point: exact outside via supporting faces is not
    /// needed here, so this is the largest face-plane excess (exact inside).
    pub fn plane_excess(&self, p: &Vec3) -> f64 {
        self.planes.iter().map(|(n, d)| n.dot(p) - d).fold(f64::NEG_INFINITY, f64::max)
    }

    /// Separation between a capsule and this polytope; `point_a`/`normal`
    /// refer to the capsule side.
    pub fn capsule_distance(&self, capsule: &Capsule) -> PairDistance {
        let seg = [capsule.endpoint_a, capsule.endpoint_b];
        if let Some((pa, pb, dist)) = gjk_segment_polytope(&seg, self) {
            if dist > TOUCH_TOL {
                let normal = (pb - pa) / dist;
                return PairDistance {
                    point_a: pa + normal * capsule.radius,
                    point_b: pb,
                    normal,
                    distance: dist - capsule.radius,
                };
            }
        }
        let (sep, depth) = self.penetration(&seg);
        let deep = if sep.dot(&seg[1]) < sep.dot(&seg[0]) { seg[1] } else { seg[0] };
        PairDistance {
            point_a: deep - sep * capsule.radius,
            point_b: deep + sep * depth,
            normal: -sep,
            distance: -depth - capsule.radius,
        }
    }

    /// Minimum translation (unit direction, depth ≥ 0) that separates the
    /// segment from the polytope, over the complete separating-axis set.
    fn penetration(&self, seg: &[Vec3; 2]) -> (Vec3, f64) {
        let mut axes: Vec<Vec3> = self.planes.iter().map(|(n, _)| *n).collect();
        if let Some(dir) = (seg[1] - seg[0]).try_normalize(1e-12) {
            for e in &self.edge_dirs {
                if let Some(ax) = dir.cross(e).try_normalize(1e-9) {
                    axes.push(ax);
                }
            }
        }
        let mut best = (Vec3::z(), f64::INFINITY);
        for ax in axes {
            let (smin, smax) = {
                let (a, b) = (ax.dot(&seg[0]), ax.dot(&seg[1]));
                (a.min(b), a.max(b))
            };
            let pmax = ax.dot(&self.support(&ax));
            let pmin = -(-ax).dot(&self.support(&-ax));
            let push_pos = pmax - smin;
            let push_neg = smax - pmin;
            if push_pos <= push_neg {
                if push_pos < best.1 {
                    best = (ax, push_pos);
                }
            } else if push_neg < best.1 {
                best = (-ax, push_neg);
            }
        }
        (best.0, best.1.max(0.0))
    }
}

/// Capsule-vs-mesh separation. The mesh must be convex and watertight.
pub fn capsule_convex_distance(capsule: &Capsule, mesh: &TriangleMesh) -> Result<PairDistance, GeometryError> {
    Ok(ConvexPolytope::new(mesh)?.capsule_distance(capsule))
}

#[derive(Clone, Copy)]
struct SupportPoint {
    w: Vec3,
    a: Vec3,
    b: Vec3,
}

/// GJK distance between a segment and a polytope. Returns the witness points
/// and distance, or `None` when the shapes intersect.
fn gjk_segment_polytope(seg: &[Vec3; 2], poly: &ConvexPolytope) -> Option<(Vec3, Vec3, f64)> {
    let support = |d: &Vec3| {
        let a = if seg[1].dot(d) > seg[0].dot(d) { seg[1] } else { seg[0] };
        let b = poly.support(&-d);
        SupportPoint { w: a - b, a, b }
    };
    let first = SupportPoint { w: seg[0] - poly.vertices[0], a: seg[0], b: poly.vertices[0] };
    let mut simplex = vec![first];
    let mut lambdas = vec![1.0];
    let mut v = first.w;
    for _ in 0..GJK_MAX_ITERATIONS {
        let vv = v.norm_squared();
        if vv <= 1e-24 {
            return None;
        }
        let sp = support(&-v);
        // Duality gap: no support point gets meaningfully closer.
        if vv - v.dot(&sp.w) <= 1e-12 * vv.max(1e-12) {
            break;
        }
        if simplex.iter().any(|s| (s.w - sp.w).norm_squared() <= 1e-24) {
            break;
        }
        simplex.push(sp);
        let (closest, subset, lam) = closest_on_simplex(&simplex.iter().map(|s| s.w).collect::<Vec<_>>());
        simplex = subset.iter().map(|&i| simplex[i]).collect();
        lambdas = lam;
        if simplex.len() == 4 {
            return None;
        }
        if closest.norm_squared() >= vv {
            // No progress; accept the current estimate.
            break;
        }
        v = closest;
    }
    let pa: Vec3 = simplex.iter().zip(&lambdas).map(|(s, l)| s.a * *l).sum();
    let pb: Vec3 = simplex.iter().zip(&lambdas).map(|(s, l)| s.b * *l).sum();
    Some((pa, pb, (pa - pb).norm()))
}

/// Closest point of conv(points) to the origin by enumerating faces of the
/// simplex; returns the point, the supporting subset and its barycentrics.
fn closest_on_simplex(points: &[Vec3]) -> (Vec3, Vec<usize>, Vec<f64>) {
    let n = points.len();
    let mut best: Option<(f64, Vec3, Vec<usize>, Vec<f64>)> = None;
    for mask in 1u32..(1 << n) {
        let idx: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
        let Some(lam) = affine_projection(&idx.iter().map(|&i| points[i]).collect::<Vec<_>>()) else { continue };
        if lam.iter().any(|&l| l < -1e-12) {
            continue;
        }
        let lam: Vec<f64> = {
            let clipped: Vec<f64> = lam.iter().map(|l| l.max(0.0)).collect();
            let s: f64 = clipped.iter().sum();
            clipped.iter().map(|l| l / s).collect()
        };
        let p: Vec3 = idx.iter().zip(&lam).map(|(&i, l)| points[i] * *l).sum();
        let d = p.norm_squared();
        let better = match &best {
            None => true,
            Some((bd, _, bidx, _)) => d < *bd - 1e-30 || (d <= *bd && idx.len() < bidx.len()),
        };
        if better {
            best = Some((d, p, idx, lam));
        }
    }
    let (_, p, idx, lam) = best.expect("single vertices always project");
    (p, idx, lam)
}

/// Barycentric coordinates of the origin's projection onto aff(points), or
/// `None` when the points are affinely dependent.
fn affine_projection(points: &[Vec3]) -> Option<Vec<f64>> {
    use nalgebra::{Matrix2, Matrix3, Vector2, Vector3};
    let base = points[0];
    let e: Vec<Vec3> = points[1..].iter().map(|p| p - base).collect();
    let mu: Vec<f64> = match e.len() {
        0 => Vec::new(),
        1 => {
            let g = e[0].norm_squared();
            if !(g > 1e-24) {
                return None;
            }
            vec![-e[0].dot(&base) / g]
        }
        2 => {
            let g = Matrix2::new(e[0].dot(&e[0]), e[0].dot(&e[1]), e[1].dot(&e[0]), e[1].dot(&e[1]));
            let rhs = Vector2::new(-e[0].dot(&base), -e[1].dot(&base));
            let scale = g[(0, 0)].max(g[(1, 1)]);
            if !(g.determinant() > 1e-20 * scale * scale) {
                return None;
            }
            let x = g.try_inverse()? * rhs;
            vec![x[0], x[1]]
        }
        3 => {
            let mut g = Matrix3::zeros();
            let mut rhs = Vector3::zeros();
            for i in 0..3 {
                for j in 0..3 {
                    g[(i, j)] = e[i].dot(&e[j]);
                }
                rhs[i] = -e[i].dot(&base);
            }
            let scale = g[(0, 0)].max(g[(1, 1)]).max(g[(2, 2)]);
            if !(g.determinant() > 1e-20 * scale * scale * scale) {
                return None;
            }
            let x = g.try_inverse()? * rhs;
            vec![x[0], x[1], x[2]]
        }
        _ => unreachable!("simplices have at most four vertices"),
    };
    let mut lam = Vec::with_capacity(points.len());
    lam.push(1.0 - mu.iter().sum::<f64>());
    lam.extend(mu);
    Some(lam)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::test_shapes::{icosphere, unit_cube_mesh};
    use crate::geometry::{convex_hull, scale_about_centroid, WORLD_FRAME};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn centered_cube() -> TriangleMesh {
        let c = unit_cube_mesh();
        TriangleMesh::new(c.vertices.iter().map(|v| v - Vec3::repeat(0.5)).collect(), c.triangles, WORLD_FRAME)
    }

    /// Dense parameter grid over both segments.
    fn grid_segment_distance(a0: &Vec3, a1: &Vec3, b0: &Vec3, b1: &Vec3, steps: usize) -> f64 {
        let mut best = f64::INFINITY;
        for i in 0..=steps {
            let p = a0 + (a1 - a0) * (i as f64 / steps as f64);
            for j in 0..=steps {
                let q = b0 + (b1 - b0) * (j as f64 / steps as f64);
                best = best.min((p - q).norm());
            }
        }
        best
    }

    #[test]
    fn segment_cases() {
        let v = |x: f64, y: f64, z: f64| Vec3::new(x, y, z);
        let par = segment_segment_closest(&v(0., 0., 0.), &v(1., 0., 0.), &v(0., 1., 0.), &v(1., 1., 0.));
        assert!((par.distance - 1.0).abs() < 1e-12);
        let cross = segment_segment_closest(&v(-1., 0., 0.), &v(1., 0., 0.), &v(0., -1., 0.), &v(0., 1., 0.));
        assert!(cross.distance < 1e-12);
        let skew = segment_segment_closest(&v(0., 0., 0.), &v(1., 0., 0.), &v(0.5, 0.3, 0.4), &v(0.5, 1.3, 0.4));
        let oracle = grid_segment_distance(&v(0., 0., 0.), &v(1., 0., 0.), &v(0.5, 0.3, 0.4), &v(0.5, 1.3, 0.4), 1000);
        assert!((oracle - 0.5).abs() < 2e-3);
        assert!((skew.distance - 0.5).abs() < 1e-12);
        // Degenerate point segments.
        let pts = segment_segment_closest(&v(0., 0., 0.), &v(0., 0., 0.), &v(3., 4., 0.), &v(3., 4., 0.));
        assert!((pts.distance - 5.0).abs() < 1e-12);
        let pt_seg = segment_segment_closest(&v(0., 1., 0.), &v(0., 1., 0.), &v(-1., 0., 0.), &v(1., 0., 0.));
        assert!((pt_seg.distance - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sphere_capsule_over_cube_face() {
        let cap = Capsule::sphere(Vec3::new(0.0, 0.0, 1.0), 0.1).unwrap();
        let d = capsule_convex_distance(&cap, &centered_cube()).unwrap();
        assert!((d.distance - 0.4).abs() < 1e-9);
        assert!((d.normal - Vec3::new(0.0, 0.0, -1.0)).norm() < 1e-9);
        assert!((d.point_b.z - 0.5).abs() < 1e-9);
        assert!((d.point_a.z - 0.9).abs() < 1e-9);
    }

    #[test]
    fn capsule_inside_cube_is_negative() {
        let cap = Capsule::new(Vec3::new(-0.1, 0.0, 0.0), Vec3::new(0.1, 0.0, 0.1), 0.05).unwrap();
        let d = capsule_convex_distance(&cap, &centered_cube()).unwrap();
        assert!(d.distance < 0.0);
        // The whole axis must leave the cube: sliding 0.5 along ±y or +z does it.
        assert!((d.distance + 0.55).abs() < 1e-9, "{}", d.distance);
        assert!((d.normal.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn non_convex_mesh_rejected() {
        let mut cube = centered_cube();
        let top = cube.vertices.iter().position(|v| v.z > 0.0).unwrap();
        cube.vertices[top].z = -0.2;
        let cap = Capsule::sphere(Vec3::new(0.0, 0.0, 2.0), 0.1).unwrap();
        assert!(matches!(capsule_convex_distance(&cap, &cube), Err(GeometryError::NonConvex { .. })));
    }

    fn signed_point_distance(p: &Vec3, mesh: &TriangleMesh, poly: &ConvexPolytope) -> f64 {
        let unsigned = mesh
            .triangles
            .iter()
            .map(|t| closest_point_on_triangle(p, &mesh.vertices[t[0]], &mesh.vertices[t[1]], &mesh.vertices[t[2]]).metric_distance(p))
            .fold(f64::INFINITY, f64::min);
        if poly.plane_excess(p) < 0.0 {
            -unsigned
        } else {
            unsigned
        }
    }

    fn random_hull(rng: &mut ChaCha8Rng) -> TriangleMesh {
        let center = Vec3::new(rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3));
        let pts: Vec<Vec3> = (0..30)
            .map(|_| center + Vec3::new(rng.random_range(-0.3..0.3), rng.random_range(-0.2..0.2), rng.random_range(-0.25..0.25)))
            .collect();
        convex_hull(&pts).unwrap()
    }

    #[test]
    fn gjk_matches_sampling_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut separated = 0;
        for _ in 0..200 {
            let mesh = random_hull(&mut rng);
            let poly = ConvexPolytope::new(&mesh).unwrap();
            let a = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            let b = a + Vec3::new(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5));
            let cap = Capsule::new(a, b, rng.random_range(0.01..0.1)).unwrap();
            let d = poly.capsule_distance(&cap);
            let oracle = (0..=1000)
                .map(|i| signed_point_distance(&(a + (b - a) * (i as f64 / 1000.0)), &mesh, &poly))
                .fold(f64::INFINITY, f64::min)
                - cap.radius;
            if oracle > 0.0 {
                separated += 1;
                assert!((d.distance - oracle).abs() < 2e-3, "gjk {} oracle {}", d.distance, oracle);
                assert!(((d.point_b - d.point_a).norm() - d.distance).abs() < 1e-9);
            } else {
                assert!(d.distance <= 1e-9 + 2e-3, "gjk {} oracle {}", d.distance, oracle);
            }
        }
        assert!(separated > 100);
    }

    #[test]
    fn sphere_mesh_distance() {
        let sphere = icosphere(2, 0.5);
        let hull = convex_hull(&sphere.vertices).unwrap();
        let cap = Capsule::new(Vec3::new(1.0, -1.0, 0.0), Vec3::new(1.0, 1.0, 0.0), 0.1).unwrap();
        let d = capsule_convex_distance(&cap, &hull).unwrap();
        assert!((d.distance - 0.4).abs() < 0.02);
        // A scaled copy is farther from nothing and closer to the capsule.
        let bigger = scale_about_centroid(&hull, 1.05).unwrap();
        assert!(capsule_convex_distance(&cap, &bigger).unwrap().distance < d.distance);
    }

    proptest! {
        #[test]
        fn segment_distance_symmetric_and_minimal(
            c in prop::array::uniform12(-1.0f64..1.0),
        ) {
            let a0 = Vec3::new(c[0], c[1], c[2]);
            let a1 = Vec3::new(c[3], c[4], c[5]);
            let b0 = Vec3::new(c[6], c[7], c[8]);
            let b1 = Vec3::new(c[9], c[10], c[11]);
            let ab = segment_segment_closest(&a0, &a1, &b0, &b1);
            let ba = segment_segment_closest(&b0, &b1, &a0, &a1);
            prop_assert!((ab.distance - ba.distance).abs() < 1e-9);
            prop_assert!((ab.point_a - ba.point_b).norm() < 1e-6);
            prop_assert!((ab.point_b - ba.point_a).norm() < 1e-6);
            let grid = grid_segment_distance(&a0, &a1, &b0, &b1, 200);
            prop_assert!(ab.distance <= grid + 1e-12);
            prop_assert!(grid - ab.distance < 2e-2);
        }

        #[test]
        fn capsule_distance_symmetric(c in prop::array::uniform12(-1.0f64..1.0), r1 in 0.01f64..0.2, r2 in 0.01f64..0.2) {
            let ca = Capsule::new(Vec3::new(c[0], c[1], c[2]), Vec3::new(c[3], c[4], c[5]), r1).unwrap();
            let cb = Capsule::new(Vec3::new(c[6], c[7], c[8]), Vec3::new(c[9], c[10], c[11]), r2).unwrap();
            let ab = capsule_capsule_distance(&ca, &cb);
            let ba = capsule_capsule_distance(&cb, &ca);
            prop_assert!((ab.distance - ba.distance).abs() < 1e-9);
            if ab.distance + r1 + r2 > 1e-6 {
                prop_assert!((ab.point_a - ba.point_b).norm() < 1e-6);
                prop_assert!((ab.normal + ba.normal).norm() < 1e-6);
            }
        }
    }
}
