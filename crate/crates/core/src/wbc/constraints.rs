use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{DampingParams, LinearRow, WbcError};
use crate::geometry::{capsule_capsule_distance, Capsule, ConvexPolytope, GeometryError, PairDistance, TriangleMesh, Vec3};
use crate::kinematics::chain::{capsules_with, point_jacobian_with};
use crate::kinematics::{forward_kinematics, LinkPoses, RobotModel};

/// A registered obstacle mesh, validated once for distance queries.
#[derive(Debug, Clone)]
pub struct Obstacle {
    pub id: String,
    polytope: ConvexPolytope,
}

impl Obstacle {
    /// `mesh` must be convex, watertight and in the world frame.
    pub fn new(id: impl Into<String>, mesh: &TriangleMesh) -> Result<Self, GeometryError> {
        Ok(Obstacle { id: id.into(), polytope: ConvexPolytope::new(mesh)? })
    }

    pub fn distance(&self, capsule: &Capsule) -> PairDistance {
        self.polytope.capsule_distance(capsule)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ConstraintSource {
    SelfCollision { link_a: String, link_b: String },
    Obstacle { link: String, object: String },
}

impl ConstraintSource {
    /// Grouping key for distance reports: `"self"` or the obstacle id.
    pub fn key(&self) -> &str {
        match self {
            ConstraintSource::SelfCollision { .. } => "self",
            ConstraintSource::Obstacle { object, .. } => object,
        }
    }
}

/// Closest-point pair between a link capsule and another capsule or mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct Proximity {
    pub source: ConstraintSource,
    pub link_a: usize,
    /// Second link for self pairs.
    pub link_b: Option<usize>,
    pub pair: PairDistance,
}

/// One velocity-damping inequality with its provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct DampingRow {
    pub row: LinearRow,
    pub source: ConstraintSource,
    pub distance: f64,
    pub point_a: Vec3,
    pub point_b: Vec3,
}

/// `n·(J₁ − J₂)_lin q̇ ≤ ε(d − d_s)/Δt`; only the linear rows of the point
/// Jacobians enter. A static obstacle passes `None` for `j_cp2`.
pub fn damping_constraint_row(
    normal: &Vec3,
    j_cp1: &DMatrix<f64>,
    j_cp2: Option<&DMatrix<f64>>,
    d: f64,
    params: &DampingParams,
) -> Result<LinearRow, WbcError> {
    params.validate()?;
    if (normal.norm() - 1.0).abs() > 1e-9 {
        return Err(WbcError::Parameter(format!("closest-point normal has norm {}", normal.norm())));
    }
    if !d.is_finite() {
        return Err(WbcError::Parameter("distance is not finite".into()));
    }
    let lin = |j: &DMatrix<f64>| j.rows(0, 3).transpose() * normal;
    let mut a: DVector<f64> = lin(j_cp1);
    if let Some(j2) = j_cp2 {
        if j2.shape() != j_cp1.shape() {
            return Err(WbcError::Parameter("point Jacobians differ in shape".into()));
        }
        a -= lin(j2);
    }
    Ok(LinearRow { a, b: params.gain * (d - params.activation_distance) / params.dt })
}

/// Distances for every configured self pair and every (capsule, obstacle)
/// pair, in that order.
pub fn measure_proximity(
    model: &RobotModel,
    poses: &LinkPoses,
    obstacles: &[Obstacle],
    self_pairs: &[(String, String)],
) -> Result<Vec<Proximity>, WbcError> {
    let mut capsules: Vec<Option<Capsule>> = vec![None; model.links.len()];
    for (i, c) in capsules_with(model, poses) {
        capsules[i] = Some(c);
    }
    let capsule = |i: usize| {
        capsules[i].ok_or_else(|| WbcError::Parameter(format!("link '{}' has no capsule", model.links[i].name)))
    };
    let mut out = Vec::new();
    for (a, b) in self_pairs {
        let (ia, ib) = (model.link(a)?, model.link(b)?);
        out.push(Proximity {
            source: ConstraintSource::SelfCollision { link_a: a.clone(), link_b: b.clone() },
            link_a: ia,
            link_b: Some(ib),
            pair: capsule_capsule_distance(&capsule(ia)?, &capsule(ib)?),
        });
    }
    for obstacle in obstacles {
        for (i, c) in capsules.iter().enumerate() {
            let Some(c) = c else { continue };
            out.push(Proximity {
                source: ConstraintSource::Obstacle { link: model.links[i].name.clone(), object: obstacle.id.clone() },
                link_a: i,
                link_b: None,
                pair: obstacle.distance(c),
            });
        }
    }
    Ok(out)
}

/// Damping rows for every pair closer than `d_s + buffer`.
pub fn collect_constraints(
    model: &RobotModel,
    q: &DVector<f64>,
    obstacles: &[Obstacle],
    self_pairs: &[(String, String)],
    params: &DampingParams,
    buffer: f64,
) -> Result<Vec<DampingRow>, WbcError> {
    let poses = forward_kinematics(model, q)?;
    let proximity = measure_proximity(model, &poses, obstacles, self_pairs)?;
    rows_from_proximity(model, &poses, &proximity, params, buffer)
}

pub(crate) fn rows_from_proximity(
    model: &RobotModel,
    poses: &LinkPoses,
    proximity: &[Proximity],
    params: &DampingParams,
    buffer: f64,
) -> Result<Vec<DampingRow>, WbcError> {
    let margin = params.activation_distance + buffer;
    let mut rows = Vec::new();
    for p in proximity.iter().filter(|p| p.pair.distance < margin) {
        let j1 = point_jacobian_with(model, poses, p.link_a, &p.pair.point_a);
        let j2 = p.link_b.map(|b| point_jacobian_with(model, poses, b, &p.pair.point_b));
        rows.push(DampingRow {
            row: damping_constraint_row(&p.pair.normal, &j1, j2.as_ref(), p.pair.distance, params)?,
            source: p.source.clone(),
            distance: p.pair.distance,
            point_a: p.pair.point_a,
            point_b: p.pair.point_b,
        });
    }
    Ok(rows)
}
