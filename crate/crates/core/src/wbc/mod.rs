//! Velocity-level whole-body controller. Two Cartesian end-effector tasks
//! and a postural task share one weighted QP, subject to joint limits and
//! velocity-damping rows for self-collision and registered obstacle meshes.
//! The solution is integrated open loop.

mod constraints;
mod qp;
mod step;
mod tasks;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::GeometryError;
use crate::kinematics::{KinematicsError, RobotModel};

pub use constraints::{
    collect_constraints, damping_constraint_row, measure_proximity, ConstraintSource, DampingRow, Obstacle, Proximity,
};
pub use qp::{solve_qp, ConstraintRef, LinearRow, QpProblem, QpSolution};
pub use step::{control_step, RowReport, StepReport, SCALE_LADDER};
pub use tasks::{assemble_qp, cartesian_velocity_command, velocity_bounds, CartesianReference, PosturalTask, Task};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WbcError {
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("hessian is not positive definite")]
    NotPositiveDefinite,
    #[error("infeasible constraints: {0:?}")]
    Infeasible(Vec<ConstraintRef>),
    #[error("QP did not converge after {0} iterations")]
    NotConverged(usize),
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Velocity-damping law `n·(J₁ − J₂)q̇ ≤ ε(d − d_s)/Δt`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DampingParams {
    /// d_s, meters.
    pub activation_distance: f64,
    /// ε in (0, 1].
    pub gain: f64,
    /// Δt, seconds.
    pub dt: f64,
}

impl DampingParams {
    pub fn validate(&self) -> Result<(), WbcError> {
        let ok = self.activation_distance > 0.0
            && self.gain > 0.0
            && self.gain <= 1.0
            && self.dt > 0.0
            && self.activation_distance.is_finite()
            && self.dt.is_finite();
        if ok {
            Ok(())
        } else {
            Err(WbcError::Parameter(format!("damping parameters out of range: {self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskWeights {
    pub left: f64,
    pub right: f64,
    pub postural: f64,
}

fn default_cartesian_gain() -> [f64; 6] {
    [5.0; 6]
}

fn default_buffer() -> f64 {
    0.1
}

/// Controller configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerConfig {
    pub dt: f64,
    pub d_s: f64,
    pub damping_gain: f64,
    /// Rows are emitted once a pair is closer than `d_s + buffer`.
    #[serde(default = "default_buffer")]
    pub buffer: f64,
    pub weights: TaskWeights,
    pub k_p: f64,
    pub q_nominal: Vec<f64>,
    /// Diagonal of K_C: linear xyz then angular xyz, 1/s.
    #[serde(default = "default_cartesian_gain")]
    pub cartesian_gain: [f64; 6],
}

impl ControllerConfig {
    /// Bundled configuration for [`RobotModel::default_bimanual`].
    pub fn bundled() -> Self {
        Self::from_json(include_str!("../../assets/controller.json")).expect("bundled controller config is valid")
    }

    pub fn from_json(text: &str) -> Result<Self, WbcError> {
        let c: ControllerConfig = serde_json::from_str(text).map_err(|e| WbcError::Parameter(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    /// Range checks that do not need the robot model.
    pub fn validate(&self) -> Result<(), WbcError> {
        self.damping().validate()?;
        self.validate_weights()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn damping(&self) -> DampingParams {
        DampingParams { activation_distance: self.d_s, gain: self.damping_gain, dt: self.dt }
    }

    pub fn q_nominal(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.q_nominal)
    }

    fn validate_weights(&self) -> Result<(), WbcError> {
        let w = &self.weights;
        let bad = |m: String| Err(WbcError::Parameter(m));
        if !(w.left > 0.0 && w.right > 0.0 && w.postural >= 0.0) {
            return bad(format!("task weights must be positive: {w:?}"));
        }
        // Soft priority: posture only resolves what the hands leave free.
        if w.postural > 1e-2 * w.left.min(w.right) {
            return bad(format!("postural weight {} exceeds 1e-2 of the Cartesian weights", w.postural));
        }
        if !(self.k_p >= 0.0) || !(self.buffer >= 0.0) || self.cartesian_gain.iter().any(|g| !(*g >= 0.0)) {
            return bad("k_p, buffer and cartesian_gain must be non-negative".into());
        }
        Ok(())
    }

    /// Checks `q_nominal` against `model` and its limits.
    pub fn validate_for(&self, model: &RobotModel) -> Result<(), WbcError> {
        let q = self.q_nominal();
        model.check_configuration(&q)?;
        if model.clamp(&q) != q {
            return Err(WbcError::Parameter("q_nominal violates joint limits".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_config_defaults() {
        let c = ControllerConfig::bundled();
        assert_eq!((c.dt, c.d_s, c.damping_gain, c.buffer, c.k_p), (0.01, 0.05, 0.5, 0.1, 1.0));
        assert_eq!((c.weights.left, c.weights.right, c.weights.postural), (1.0, 1.0, 1e-3));
        c.validate_for(&RobotModel::default_bimanual()).unwrap();
        assert_eq!(ControllerConfig::from_json(&c.to_json()).unwrap(), c);
    }

    #[test]
    fn config_rejects_bad_values() {
        let c = ControllerConfig::bundled();
        for (k, v) in [("damping_gain", 1.5), ("dt", 0.0), ("d_s", -0.1)] {
            let mut j: serde_json::Value = serde_json::from_str(&c.to_json()).unwrap();
            j[k] = v.into();
            assert!(ControllerConfig::from_json(&j.to_string()).is_err(), "{k}");
        }
        let mut j: serde_json::Value = serde_json::from_str(&c.to_json()).unwrap();
        j["weights"]["postural"] = 0.5.into();
        assert!(ControllerConfig::from_json(&j.to_string()).is_err());
        let mut j: serde_json::Value = serde_json::from_str(&c.to_json()).unwrap();
        j["surprise"] = 1.into();
        assert!(ControllerConfig::from_json(&j.to_string()).is_err());
        let mut short = c.clone();
        short.q_nominal.pop();
        assert!(short.validate_for(&RobotModel::default_bimanual()).is_err());
    }
}
