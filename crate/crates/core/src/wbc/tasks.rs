use nalgebra::{DMatrix, DVector, Vector6};
use serde::{Deserialize, Serialize};

use super::{LinearRow, QpProblem, WbcError};
use crate::geometry::{pose_serde, Pose, Vec3};
use crate::kinematics::RobotModel;

/// Hessian regularization relative to the summed task weights.
const REGULARIZATION: f64 = 1e-8;

/// Pose target with feedforward twist and a diagonal gain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CartesianReference {
    #[serde(with = "pose_serde")]
    pub target: Pose,
    #[serde(with = "crate::geometry::vec3_array")]
    pub feedforward_linear: Vec3,
    #[serde(with = "crate::geometry::vec3_array")]
    pub feedforward_angular: Vec3,
    /// Diagonal of K_C: linear then angular.
    pub gain: [f64; 6],
}

impl CartesianReference {
    pub fn hold(target: Pose, gain: [f64; 6]) -> Self {
        CartesianReference { target, feedforward_linear: Vec3::zeros(), feedforward_angular: Vec3::zeros(), gain }
    }
}

/// Desired world twist (linear; angular) driving `current` toward the
/// reference. Orientation error is the shortest-arc axis·angle of
/// `q_ref·q_cur⁻¹`.
pub fn cartesian_velocity_command(current: &Pose, reference: &CartesianReference) -> Vector6<f64> {
    let k = &reference.gain;
    let dp = reference.target.translation.vector - current.translation.vector;
    let mut dq = (reference.target.rotation * current.rotation.inverse()).into_inner();
    if dq.w < 0.0 {
        dq = -dq;
    }
    let v = dq.vector();
    let s = v.norm();
    let rot = if s > 0.0 { v * (2.0 * s.atan2(dq.w) / s) } else { Vec3::zeros() };
    let lin = reference.feedforward_linear + Vec3::new(k[0] * dp.x, k[1] * dp.y, k[2] * dp.z);
    let ang = reference.feedforward_angular + Vec3::new(k[3] * rot.x, k[4] * rot.y, k[5] * rot.z);
    Vector6::new(lin.x, lin.y, lin.z, ang.x, ang.y, ang.z)
}

/// Weighted least-squares objective `w·|J q̇ − v|²`.
#[derive(Debug, Clone, PartialEq)]
pub struct Task {
    pub jacobian: DMatrix<f64>,
    pub desired: DVector<f64>,
    pub weight: f64,
}

/// `w·|q̇ − k_p(q_nom − q)|²`.
#[derive(Debug, Clone, PartialEq)]
pub struct PosturalTask {
    pub q_nominal: DVector<f64>,
    pub q: DVector<f64>,
    pub k_p: f64,
    pub weight: f64,
}

impl PosturalTask {
    pub fn target(&self) -> DVector<f64> {
        (&self.q_nominal - &self.q) * self.k_p
    }
}

/// Velocity bounds that keep `q + q̇·dt` inside the position limits and
/// respect the speed limits.
pub fn velocity_bounds(model: &RobotModel, q: &DVector<f64>, dt: f64) -> (DVector<f64>, DVector<f64>) {
    let (qlo, qhi) = model.position_limits();
    let vmax = model.velocity_limits();
    let n = q.len();
    let mut lo = DVector::zeros(n);
    let mut hi = DVector::zeros(n);
    for i in 0..n {
        lo[i] = (-vmax[i]).max((qlo[i] - q[i]) / dt);
        hi[i] = vmax[i].min((qhi[i] - q[i]) / dt);
        // A coordinate already outside its range may only move back.
        if lo[i] > hi[i] {
            let mid = if q[i] < qlo[i] { lo[i].min(vmax[i]) } else { hi[i].max(-vmax[i]) };
            lo[i] = mid;
            hi[i] = mid;
        }
    }
    (lo, hi)
}

/// Builds `½q̇ᵀHq̇ + gᵀq̇` from the tasks and posture, with `bounds` as
/// variable bounds and `rows` as inequalities.
pub fn assemble_qp(
    tasks: &[Task],
    postural: Option<&PosturalTask>,
    bounds: Option<(DVector<f64>, DVector<f64>)>,
    rows: Vec<LinearRow>,
) -> Result<QpProblem, WbcError> {
    let n = match (tasks.first(), postural) {
        (Some(t), _) => t.jacobian.ncols(),
        (None, Some(p)) => p.q.len(),
        (None, None) => return Err(WbcError::Parameter("QP needs at least one task".into())),
    };
    let mut hessian = DMatrix::zeros(n, n);
    let mut gradient = DVector::zeros(n);
    let mut total_weight = 0.0;
    for (i, t) in tasks.iter().enumerate() {
        if t.jacobian.ncols() != n || t.jacobian.nrows() != t.desired.len() || !(t.weight > 0.0) {
            return Err(WbcError::Parameter(format!("task {i} is malformed")));
        }
        let jt = t.jacobian.transpose();
        hessian += &jt * &t.jacobian * t.weight;
        gradient -= jt * &t.desired * t.weight;
        total_weight += t.weight;
    }
    if let Some(p) = postural {
        if p.q.len() != n || p.q_nominal.len() != n || !(p.weight >= 0.0) {
            return Err(WbcError::Parameter("postural task is malformed".into()));
        }
        for i in 0..n {
            hessian[(i, i)] += p.weight;
        }
        gradient -= p.target() * p.weight;
        total_weight += p.weight;
    }
    let lambda = REGULARIZATION * total_weight.max(f64::MIN_POSITIVE);
    for i in 0..n {
        hessian[(i, i)] += lambda;
    }
    // Exact symmetry for the solver's check.
    hessian = (&hessian + hessian.transpose()) * 0.5;
    let (lower, upper) = bounds.unwrap_or_else(|| {
        (DVector::from_element(n, f64::NEG_INFINITY), DVector::from_element(n, f64::INFINITY))
    });
    Ok(QpProblem { hessian, gradient, rows, lower, upper })
}
