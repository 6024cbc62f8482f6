//! Incremental 3-D quickhull with conflict lists.
//!
//! Faces are kept as triangles; coplanar neighbors are not merged, so a cube
//! comes out as 12 triangles. A point counts as outside a face only when it is
//! more than `tol` above the face plane, which bounds how far any input point
//! can end up outside the final hull.

use std::collections::{HashMap, HashSet, VecDeque};

use super::{Degeneracy, GeometryError, TriangleMesh, Vec3, WORLD_FRAME};

/// Plane-thickness used to call an input coplanar, relative to its extent.
const COPLANAR_TOL: f64 = 1e-9;

struct Face {
    v: [usize; 3],
    normal: Vec3,
    offset: f64,
    outside: Vec<usize>,
    alive: bool,
}

impl Face {
    fn new(points: &[Vec3], v: [usize; 3]) -> Face {
        let (a, b, c) = (points[v[0]], points[v[1]], points[v[2]]);
        let normal = (b - a).cross(&(c - a)).normalize();
        Face { v, normal, offset: normal.dot(&a), outside: Vec::new(), alive: true }
    }

    fn distance(&self, p: &Vec3) -> f64 {
        self.normal.dot(p) - self.offset
    }
}

/// Convex hull of `points` as an outward-wound, watertight triangle mesh whose
/// vertex list is the subset of input points on the hull (in input order).
pub fn convex_hull(points: &[Vec3]) -> Result<TriangleMesh, GeometryError> {
    if points.len() < 4 {
        return Err(GeometryError::Degenerate(Degeneracy::TooFewPoints));
    }
    if points.iter().any(|p| !p.iter().all(|c| c.is_finite())) {
        return Err(GeometryError::Parameter("hull input contains non-finite coordinates".into()));
    }
    let scale = points.iter().map(|p| p.amax()).fold(0.0, f64::max).max(1.0);
    let tol = 1e-12 * scale * 10.0;

    let simplex = initial_simplex(points)?;
    let mut faces: Vec<Face> = Vec::new();
    let centroid = simplex.iter().map(|&i| points[i]).sum::<Vec3>() / 4.0;
    for k in 0..4 {
        let mut tri = [simplex[k], simplex[(k + 1) % 4], simplex[(k + 2) % 4]];
        let f = Face::new(points, tri);
        if f.distance(&centroid) > 0.0 {
            tri.swap(1, 2);
        }
        faces.push(Face::new(points, tri));
    }
    let mut edges: HashMap<(usize, usize), usize> = HashMap::new();
    for (fi, f) in faces.iter().enumerate() {
        register_edges(&mut edges, f.v, fi);
    }

    let in_simplex: HashSet<usize> = simplex.iter().copied().collect();
    for i in 0..points.len() {
        if in_simplex.contains(&i) {
            continue;
        }
        assign_outside(&mut faces, 0..4, i, points, tol);
    }

    let mut cursor = 0;
    loop {
        // Oldest live face with pending outside points.
        while cursor < faces.len() && !(faces[cursor].alive && !faces[cursor].outside.is_empty()) {
            cursor += 1;
        }
        if cursor == faces.len() {
            // Faces created later can still be pending; rescan once from the start.
            match faces.iter().position(|f| f.alive && !f.outside.is_empty()) {
                Some(fi) => cursor = fi,
                None => break,
            }
        }
        let start = cursor;
        let eye = *faces[start]
            .outside
            .iter()
            .max_by(|&&a, &&b| {
                faces[start].distance(&points[a]).total_cmp(&faces[start].distance(&points[b])).then(b.cmp(&a))
            })
            .expect("non-empty outside set");
        let eye_p = points[eye];

        // Flood the faces visible from the eye.
        let mut visible = vec![start];
        let mut is_visible: HashSet<usize> = HashSet::from([start]);
        let mut queue = VecDeque::from([start]);
        while let Some(fi) = queue.pop_front() {
            let v = faces[fi].v;
            for k in 0..3 {
                let nb = edges[&(v[(k + 1) % 3], v[k])];
                if !is_visible.contains(&nb) && faces[nb].distance(&eye_p) > tol {
                    is_visible.insert(nb);
                    visible.push(nb);
                    queue.push_back(nb);
                }
            }
        }

        // Horizon: directed edges of visible faces whose twin is not visible.
        let mut horizon: Vec<(usize, usize)> = Vec::new();
        for &fi in &visible {
            let v = faces[fi].v;
            for k in 0..3 {
                let (a, b) = (v[k], v[(k + 1) % 3]);
                if !is_visible.contains(&edges[&(b, a)]) {
                    horizon.push((a, b));
                }
            }
        }

        let mut orphans: Vec<usize> = Vec::new();
        for &fi in &visible {
            let f = &mut faces[fi];
            f.alive = false;
            orphans.append(&mut f.outside);
            let v = f.v;
            for k in 0..3 {
                edges.remove(&(v[k], v[(k + 1) % 3]));
            }
        }

        let first_new = faces.len();
        for (a, b) in horizon {
            let fi = faces.len();
            let f = Face::new(points, [a, b, eye]);
            register_edges(&mut edges, f.v, fi);
            faces.push(f);
        }
        orphans.sort_unstable();
        let new_faces = first_new..faces.len();
        for p in orphans {
            if p != eye {
                assign_outside(&mut faces, new_faces.clone(), p, points, tol);
            }
        }
        cursor = cursor.min(first_new);
    }

    Ok(compact(points, &faces))
}

fn register_edges(edges: &mut HashMap<(usize, usize), usize>, v: [usize; 3], fi: usize) {
    for k in 0..3 {
        edges.insert((v[k], v[(k + 1) % 3]), fi);
    }
}

fn assign_outside(faces: &mut [Face], range: std::ops::Range<usize>, p: usize, points: &[Vec3], tol: f64) {
    for fi in range {
        if faces[fi].alive && faces[fi].distance(&points[p]) > tol {
            faces[fi].outside.push(p);
            return;
        }
    }
}

fn initial_simplex(points: &[Vec3]) -> Result<[usize; 4], GeometryError> {
    // Extreme points along each axis seed the first edge.
    let mut extremes = Vec::with_capacity(6);
    for axis in 0..3 {
        let min = (0..points.len()).min_by(|&a, &b| points[a][axis].total_cmp(&points[b][axis])).unwrap();
        let max = (0..points.len()).max_by(|&a, &b| points[a][axis].total_cmp(&points[b][axis])).unwrap();
        extremes.push(min);
        extremes.push(max);
    }
    let mut best = (0.0, 0, 0);
    for &i in &extremes {
        for &j in &extremes {
            let d = (points[i] - points[j]).norm_squared();
            if d > best.0 {
                best = (d, i, j);
            }
        }
    }
    let extent = best.0.sqrt();
    if extent <= 1e-12 {
        return Err(GeometryError::Degenerate(Degeneracy::Coincident));
    }
    let (i0, i1) = (best.1, best.2);
    let dir = (points[i1] - points[i0]) / extent;

    let (mut i2, mut far) = (usize::MAX, 0.0);
    for (k, p) in points.iter().enumerate() {
        let d = p - points[i0];
        let dist = (d - dir * d.dot(&dir)).norm();
        if dist > far {
            far = dist;
            i2 = k;
        }
    }
    if far <= COPLANAR_TOL * extent {
        return Err(GeometryError::Degenerate(Degeneracy::Collinear));
    }

    let normal = (points[i1] - points[i0]).cross(&(points[i2] - points[i0])).normalize();
    let (mut i3, mut far) = (usize::MAX, 0.0);
    for (k, p) in points.iter().enumerate() {
        let dist = normal.dot(&(p - points[i0])).abs();
        if dist > far {
            far = dist;
            i3 = k;
        }
    }
    if far <= COPLANAR_TOL * extent.max(1.0) {
        return Err(GeometryError::Degenerate(Degeneracy::Coplanar));
    }
    Ok([i0, i1, i2, i3])
}

fn compact(points: &[Vec3], faces: &[Face]) -> TriangleMesh {
    let mut used: Vec<usize> = faces.iter().filter(|f| f.alive).flat_map(|f| f.v).collect();
    used.sort_unstable();
    used.dedup();
    let remap: HashMap<usize, usize> = used.iter().enumerate().map(|(new, &old)| (old, new)).collect();
    let triangles = faces
        .iter()
        .filter(|f| f.alive)
        .map(|f| [remap[&f.v[0]], remap[&f.v[1]], remap[&f.v[2]]])
        .collect();
    TriangleMesh::new(used.iter().map(|&i| points[i]).collect(), triangles, WORLD_FRAME)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::test_shapes::unit_cube_corners;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_ball(seed: u64, n: usize) -> Vec<Vec3> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut pts = Vec::with_capacity(n);
        while pts.len() < n {
            let p = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            if p.norm() <= 1.0 {
                pts.push(p);
            }
        }
        pts
    }

    #[test]
    fn tetrahedron() {
        let s = 1.0 / 2f64.sqrt();
        let pts = vec![
            Vec3::new(1.0, 0.0, -s),
            Vec3::new(-1.0, 0.0, -s),
            Vec3::new(0.0, 1.0, s),
            Vec3::new(0.0, -1.0, s),
        ];
        let hull = convex_hull(&pts).unwrap();
        assert_eq!(hull.vertices.len(), 4);
        assert_eq!(hull.triangles.len(), 4);
        hull.check_watertight().unwrap();
        hull.check_convex(1e-12).unwrap();
        assert!(hull.volume() > 0.0);
    }

    #[test]
    fn unit_cube() {
        let hull = convex_hull(&unit_cube_corners()).unwrap();
        assert_eq!(hull.triangles.len(), 12);
        assert_eq!(hull.vertices.len(), 8);
        assert!((hull.volume() - 1.0).abs() < 1e-9);
        hull.check_watertight().unwrap();
    }

    #[test]
    fn ball_points_inside_every_face() {
        let pts = random_ball(7, 500);
        let hull = convex_hull(&pts).unwrap();
        hull.check_watertight().unwrap();
        hull.check_convex(1e-6).unwrap();
        // Brute-force containment against every face plane.
        for (n, d) in hull.face_planes() {
            for p in &pts {
                assert!(n.dot(p) - d <= 1e-7);
            }
        }
    }

    #[test]
    fn degeneracies_are_typed() {
        let err = |pts: Vec<Vec3>| match convex_hull(&pts) {
            Err(GeometryError::Degenerate(d)) => d,
            other => panic!("expected degeneracy, got {other:?}"),
        };
        assert_eq!(err(vec![Vec3::zeros(); 3]), Degeneracy::TooFewPoints);
        assert_eq!(err(vec![Vec3::new(1.0, 1.0, 1.0); 6]), Degeneracy::Coincident);
        assert_eq!(err((0..6).map(|i| Vec3::new(i as f64, 2.0 * i as f64, 0.0)).collect()), Degeneracy::Collinear);
        let coplanar: Vec<Vec3> = (0..10).map(|i| Vec3::new((i as f64).cos(), (i as f64).sin(), 0.5)).collect();
        assert_eq!(err(coplanar), Degeneracy::Coplanar);
    }

    #[test]
    fn duplicated_and_grid_points() {
        // Many exactly coplanar/collinear points on the faces of a box.
        let mut pts = Vec::new();
        for i in 0..=4 {
            for j in 0..=4 {
                for k in 0..=4 {
                    pts.push(Vec3::new(i as f64 * 0.25, j as f64 * 0.25, k as f64 * 0.5));
                }
            }
        }
        pts.extend(pts.clone());
        let hull = convex_hull(&pts).unwrap();
        hull.check_watertight().unwrap();
        hull.check_convex(1e-9).unwrap();
        assert!((hull.volume() - 2.0).abs() < 1e-9);
        for (n, d) in hull.face_planes() {
            for p in &pts {
                assert!(n.dot(p) - d <= 1e-7);
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn hull_invariants(seed in any::<u64>(), n in 4usize..400) {
            let pts = random_ball(seed, n);
            let hull = convex_hull(&pts).unwrap();
            prop_assert!(hull.is_watertight());
            prop_assert!(hull.is_convex(1e-6));
            for (nrm, d) in hull.face_planes() {
                for p in &pts {
                    prop_assert!(nrm.dot(p) - d <= 1e-7);
                }
            }
            // Hull of the hull vertices has the same vertex set.
            let again = convex_hull(&hull.vertices).unwrap();
            let key = |v: &Vec3| (v.x.to_bits(), v.y.to_bits(), v.z.to_bits());
            let a: std::collections::BTreeSet<_> = hull.vertices.iter().map(key).collect();
            let b: std::collections::BTreeSet<_> = again.vertices.iter().map(key).collect();
            prop_assert_eq!(a, b);
        }
    }
}
