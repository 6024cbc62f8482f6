//! Quadric-error-metric edge collapse (Garland–Heckbert).
//!
//! Collapses are restricted to edges satisfying the link condition, which
//! keeps a closed 2-manifold closed. A collapse that would flip a surrounding
//! face is skipped while any non-flipping candidate remains.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};

use nalgebra::{Matrix3, Matrix4, Vector4};

use super::{GeometryError, TriangleMesh, Vec3};

/// Simplifies a watertight mesh to at most `max_triangles` triangles.
/// Meshes already under the cap are returned unchanged.
pub fn decimate(mesh: &TriangleMesh, max_triangles: usize) -> Result<TriangleMesh, GeometryError> {
    if max_triangles < 4 {
        return Err(GeometryError::Parameter(format!("triangle cap must be at least 4, got {max_triangles}")));
    }
    mesh.check_watertight()?;
    if mesh.triangles.len() <= max_triangles {
        return Ok(mesh.clone());
    }
    let mut state = Collapser::new(mesh);
    let mut strict = true;
    while state.live_triangles > max_triangles {
        if !state.collapse_best(strict) {
            if strict {
                strict = false;
                state.rebuild_heap();
                continue;
            }
            return Err(GeometryError::Topology(format!(
                "no admissible collapse left at {} triangles",
                state.live_triangles
            )));
        }
    }
    Ok(state.finish(&mesh.frame))
}

#[derive(PartialEq)]
struct Candidate {
    cost: f64,
    u: usize,
    v: usize,
    stamp_u: u64,
    stamp_v: u64,
    target: Vec3,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        // Min-heap on cost, then lowest vertex pair.
        other
            .cost
            .total_cmp(&self.cost)
            .then_with(|| (other.u, other.v).cmp(&(self.u, self.v)))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

struct Collapser {
    positions: Vec<Vec3>,
    quadrics: Vec<Matrix4<f64>>,
    alive_vertex: Vec<bool>,
    stamp: Vec<u64>,
    triangles: Vec<[usize; 3]>,
    alive_triangle: Vec<bool>,
    vertex_faces: Vec<Vec<usize>>,
    live_triangles: usize,
    heap: BinaryHeap<Candidate>,
}

impl Collapser {
    fn new(mesh: &TriangleMesh) -> Self {
        let n = mesh.vertices.len();
        let mut quadrics = vec![Matrix4::zeros(); n];
        let mut vertex_faces = vec![Vec::new(); n];
        for (ti, t) in mesh.triangles.iter().enumerate() {
            let (a, b, c) = (mesh.vertices[t[0]], mesh.vertices[t[1]], mesh.vertices[t[2]]);
            let cross = (b - a).cross(&(c - a));
            let area = cross.norm();
            if area > 0.0 {
                let nrm = cross / area;
                let plane = Vector4::new(nrm.x, nrm.y, nrm.z, -nrm.dot(&a));
                // Area weighting keeps sliver faces from dominating.
                let k = plane * plane.transpose() * (area * 0.5);
                for &i in t {
                    quadrics[i] += k;
                }
            }
            for &i in t {
                vertex_faces[i].push(ti);
            }
        }
        let mut s = Collapser {
            positions: mesh.vertices.clone(),
            quadrics,
            alive_vertex: vec![true; n],
            stamp: vec![0; n],
            triangles: mesh.triangles.clone(),
            alive_triangle: vec![true; mesh.triangles.len()],
            vertex_faces,
            live_triangles: mesh.triangles.len(),
            heap: BinaryHeap::new(),
        };
        s.rebuild_heap();
        s
    }

    fn rebuild_heap(&mut self) {
        self.heap.clear();
        let mut seen = HashSet::new();
        for ti in 0..self.triangles.len() {
            if !self.alive_triangle[ti] {
                continue;
            }
            let t = self.triangles[ti];
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                if seen.insert((a.min(b), a.max(b))) {
                    self.push_edge(a.min(b), a.max(b));
                }
            }
        }
    }

    fn push_edge(&mut self, u: usize, v: usize) {
        let q = self.quadrics[u] + self.quadrics[v];
        let target = self.optimal_position(&q, u, v);
        let h = Vector4::new(target.x, target.y, target.z, 1.0);
        let cost = (h.transpose() * q * h)[0].max(0.0);
        self.heap.push(Candidate { cost, u, v, stamp_u: self.stamp[u], stamp_v: self.stamp[v], target });
    }

    fn optimal_position(&self, q: &Matrix4<f64>, u: usize, v: usize) -> Vec3 {
        let a = Matrix3::new(q[(0, 0)], q[(0, 1)], q[(0, 2)], q[(1, 0)], q[(1, 1)], q[(1, 2)], q[(2, 0)], q[(2, 1)], q[(2, 2)]);
        let b = -Vec3::new(q[(0, 3)], q[(1, 3)], q[(2, 3)]);
        let (pu, pv) = (self.positions[u], self.positions[v]);
        let scale = (pu - pv).norm();
        if let Some(x) = a.try_inverse().map(|inv| inv * b) {
            // Ill-conditioned solves can fling the vertex far away; keep it near the edge.
            let mid = (pu + pv) * 0.5;
            if x.iter().all(|c| c.is_finite()) && (x - mid).norm() <= 2.0 * scale.max(1e-12) && a.determinant().abs() > 1e-18 {
                return x;
            }
        }
        let err = |p: &Vec3| {
            let h = Vector4::new(p.x, p.y, p.z, 1.0);
            (h.transpose() * q * h)[0]
        };
        let mid = (pu + pv) * 0.5;
        [pu, pv, mid].into_iter().min_by(|a, b| err(a).total_cmp(&err(b))).unwrap()
    }

    fn neighbors(&self, v: usize) -> HashSet<usize> {
        let mut out = HashSet::new();
        for &ti in &self.vertex_faces[v] {
            if self.alive_triangle[ti] {
                out.extend(self.triangles[ti].iter().copied().filter(|&w| w != v));
            }
        }
        out
    }

    fn link_condition(&self, u: usize, v: usize) -> bool {
        let nu = self.neighbors(u);
        let nv = self.neighbors(v);
        if !nu.contains(&v) {
            return false;
        }
        let shared = nu.intersection(&nv).count();
        // Collapsing a tetrahedron edge would leave a degenerate surface.
        shared == 2 && self.live_triangles > 4
    }

    fn flips(&self, u: usize, v: usize, target: &Vec3) -> bool {
        for &w in &[u, v] {
            for &ti in &self.vertex_faces[w] {
                if !self.alive_triangle[ti] {
                    continue;
                }
                let t = self.triangles[ti];
                if t.contains(&u) && t.contains(&v) {
                    continue;
                }
                let p: Vec<Vec3> = t.iter().map(|&i| self.positions[i]).collect();
                let before = (p[1] - p[0]).cross(&(p[2] - p[0]));
                let q: Vec<Vec3> = t.iter().map(|&i| if i == w { *target } else { self.positions[i] }).collect();
                let after = (q[1] - q[0]).cross(&(q[2] - q[0]));
                if before.dot(&after) <= 1e-3 * before.norm() * after.norm() {
                    return true;
                }
            }
        }
        false
    }

    fn collapse_best(&mut self, strict: bool) -> bool {
        let mut deferred = Vec::new();
        let found = loop {
            let Some(c) = self.heap.pop() else { break None };
            if !self.alive_vertex[c.u] || !self.alive_vertex[c.v] || c.stamp_u != self.stamp[c.u] || c.stamp_v != self.stamp[c.v] {
                continue;
            }
            if !self.link_condition(c.u, c.v) || (strict && self.flips(c.u, c.v, &c.target)) {
                deferred.push(c);
                continue;
            }
            break Some(c);
        };
        // Rejected candidates may become admissible after later collapses.
        self.heap.extend(deferred);
        let Some(c) = found else { return false };
        self.collapse(c.u, c.v, c.target);
        true
    }

    fn collapse(&mut self, u: usize, v: usize, target: Vec3) {
        self.positions[u] = target;
        self.quadrics[u] = self.quadrics[u] + self.quadrics[v];
        self.alive_vertex[v] = false;
        self.stamp[u] += 1;
        let faces_v = std::mem::take(&mut self.vertex_faces[v]);
        for ti in faces_v {
            if !self.alive_triangle[ti] {
                continue;
            }
            if self.triangles[ti].contains(&u) {
                self.alive_triangle[ti] = false;
                self.live_triangles -= 1;
            } else {
                for i in self.triangles[ti].iter_mut() {
                    if *i == v {
                        *i = u;
                    }
                }
                self.vertex_faces[u].push(ti);
            }
        }
        self.vertex_faces[u].retain(|&ti| self.alive_triangle[ti]);
        for w in self.neighbors(u) {
            self.stamp[w] += 1;
        }
        let nbrs: Vec<usize> = self.neighbors(u).into_iter().collect();
        for w in nbrs {
            // Every edge touching a moved neighborhood gets a fresh cost.
            let ring: Vec<usize> = self.neighbors(w).into_iter().collect();
            for x in ring {
                self.push_edge(w.min(x), w.max(x));
            }
        }
    }

    fn finish(self, frame: &str) -> TriangleMesh {
        let mut remap = vec![usize::MAX; self.positions.len()];
        let mut vertices = Vec::new();
        let mut triangles = Vec::new();
        for (ti, t) in self.triangles.iter().enumerate() {
            if !self.alive_triangle[ti] {
                continue;
            }
            let mut out = [0; 3];
            for k in 0..3 {
                if remap[t[k]] == usize::MAX {
                    remap[t[k]] = vertices.len();
                    vertices.push(self.positions[t[k]]);
                }
                out[k] = remap[t[k]];
            }
            triangles.push(out);
        }
        TriangleMesh::new(vertices, triangles, frame)
    }
}
