use std::collections::BTreeMap;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::constraints::rows_from_proximity;
use super::{
    assemble_qp, cartesian_velocity_command, measure_proximity, solve_qp, velocity_bounds, CartesianReference,
    ConstraintRef, ConstraintSource, ControllerConfig, Obstacle, PosturalTask, Task, WbcError,
};
use crate::kinematics::chain::point_jacobian_with;
use crate::kinematics::{forward_kinematics, Hand, RobotModel};

/// Task-velocity scales tried in turn when a solve fails; the last rung
/// commands zero motion.
pub const SCALE_LADDER: [f64; 5] = [1.0, 0.5, 0.25, 0.1, 0.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowReport {
    pub source: ConstraintSource,
    pub distance: f64,
    pub bound: f64,
    pub active: bool,
    pub point_a: [f64; 3],
    pub point_b: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub qdot: Vec<f64>,
    pub kkt_residual: f64,
    /// Indices into `rows` of the active damping rows.
    pub active_rows: Vec<usize>,
    pub rows: Vec<RowReport>,
    /// Smallest distance per source: `"self"` or an obstacle id.
    pub min_distance: BTreeMap<String, f64>,
    /// Scale applied to task velocities by the fallback ladder.
    pub task_scale: f64,
    /// Set when every rung failed and zero motion was commanded.
    pub halted: bool,
    /// First infeasibility certificate, if any rung hit one.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub infeasible: Option<Vec<ConstraintRef>>,
}

/// One control period: tasks from both references, damping rows from the
/// self pairs and `obstacles`, one QP, then `q ← q + q̇·dt` clamped into the
/// joint limits. Solver failures degrade along [`SCALE_LADDER`] and end in
/// zero motion; only malformed input is an error.
pub fn control_step(
    model: &RobotModel,
    q: &DVector<f64>,
    left: &CartesianReference,
    right: &CartesianReference,
    obstacles: &[Obstacle],
    config: &ControllerConfig,
) -> Result<(DVector<f64>, StepReport), WbcError> {
    let poses = forward_kinematics(model, q)?;
    let params = config.damping();
    params.validate()?;
    let proximity = measure_proximity(model, &poses, obstacles, &model.self_collision_pairs)?;
    let damping = rows_from_proximity(model, &poses, &proximity, &params, config.buffer)?;

    let mut min_distance: BTreeMap<String, f64> = BTreeMap::new();
    for p in &proximity {
        let e = min_distance.entry(p.source.key().to_string()).or_insert(f64::INFINITY);
        *e = e.min(p.pair.distance);
    }

    let mut tasks = Vec::with_capacity(2);
    for (hand, reference) in [(Hand::Left, left), (Hand::Right, right)] {
        let link = model.link(model.end_effector(hand))?;
        let pose = poses.links[link];
        tasks.push((
            point_jacobian_with(model, &poses, link, &pose.translation.vector),
            cartesian_velocity_command(&pose, reference),
            match hand {
                Hand::Left => config.weights.left,
                Hand::Right => config.weights.right,
            },
        ));
    }
    let postural = PosturalTask { q_nominal: config.q_nominal(), q: q.clone(), k_p: config.k_p, weight: config.weights.postural };
    let bounds = velocity_bounds(model, q, config.dt);
    let rows: Vec<_> = damping.iter().map(|d| d.row.clone()).collect();

    let mut infeasible = None;
    let mut outcome = None;
    for scale in SCALE_LADDER {
        let scaled: Vec<Task> = tasks
            .iter()
            .map(|(j, v, w)| Task { jacobian: j.clone(), desired: DVector::from_column_slice((v * scale).as_slice()), weight: *w })
            .collect();
        let post = PosturalTask { k_p: postural.k_p * scale, ..postural.clone() };
        let problem = assemble_qp(&scaled, Some(&post), Some(bounds.clone()), rows.clone())?;
        match solve_qp(&problem) {
            Ok(sol) => {
                outcome = Some((sol, scale));
                break;
            }
            Err(WbcError::Infeasible(set)) => {
                log::debug!("infeasible at task scale {scale}: {set:?}");
                infeasible.get_or_insert(set);
            }
            Err(e @ WbcError::NotConverged(_)) => log::warn!("{e} at task scale {scale}"),
            Err(e) => return Err(e),
        }
    }

    let n = model.dof();
    let (qdot, kkt_residual, active_rows, task_scale, halted) = match outcome {
        Some((sol, scale)) => {
            let active = sol.active_rows();
            (sol.x, sol.kkt_residual, active, scale, false)
        }
        None => (DVector::zeros(n), 0.0, Vec::new(), 0.0, true),
    };
    let q_next = model.clamp(&(q + &qdot * config.dt));
    let report = StepReport {
        qdot: qdot.iter().copied().collect(),
        kkt_residual,
        rows: damping
            .iter()
            .enumerate()
            .map(|(i, d)| RowReport {
                source: d.source.clone(),
                distance: d.distance,
                bound: d.row.b,
                active: active_rows.contains(&i),
                point_a: d.point_a.into(),
                point_b: d.point_b.into(),
            })
            .collect(),
        active_rows,
        min_distance,
        task_scale,
        halted,
        infeasible,
    };
    Ok((q_next, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{convex_hull, Vec3};
    use crate::kinematics::world_capsules;

    fn setup() -> (RobotModel, ControllerConfig) {
        (RobotModel::default_bimanual(), ControllerConfig::bundled())
    }

    fn hold_current(model: &RobotModel, q: &DVector<f64>, config: &ControllerConfig) -> (CartesianReference, CartesianReference) {
        let poses = forward_kinematics(model, q).unwrap();
        let r = |h| CartesianReference::hold(*poses.link(model, model.end_effector(h)).unwrap(), config.cartesian_gain);
        (r(Hand::Left), r(Hand::Right))
    }

    #[test]
    fn equilibrium_is_stationary() {
        let (m, c) = setup();
        let q = c.q_nominal();
        let (l, r) = hold_current(&m, &q, &c);
        let (next, report) = control_step(&m, &q, &l, &r, &[], &c).unwrap();
        assert!((next - &q).amax() < 1e-12);
        assert!(report.rows.is_empty());
        assert!(!report.halted);
    }

    #[test]
    fn converges_monotonically_to_offset() {
        let (m, c) = setup();
        let mut q = c.q_nominal();
        let (mut l, r) = hold_current(&m, &q, &c);
        l.target.translation.vector += Vec3::new(0.05, 0.04, -0.03);
        let left = m.link(m.end_effector(Hand::Left)).unwrap();
        let error = |q: &DVector<f64>| {
            let p = forward_kinematics(&m, q).unwrap().links[left];
            (l.target.translation.vector - p.translation.vector).norm()
        };
        let mut last = error(&q);
        let first = last;
        for step in 0..500 {
            let (next, report) = control_step(&m, &q, &l, &r, &[], &c).unwrap();
            assert!(report.kkt_residual <= 1e-6);
            q = next;
            let e = error(&q);
            assert!(e <= last + 1e-12, "step {step}: {e} > {last}");
            last = e;
        }
        // Soft priority leaves a steady offset of order w_p·k_p·|q − q_nom| / (w·K).
        let c_bias = c.weights.postural * c.k_p / (c.weights.left * c.cartesian_gain[0]);
        assert!(last < c_bias, "{last} vs {first}");
    }

    #[test]
    fn joint_limits_hold_through_integration() {
        let (m, c) = setup();
        let mut q = c.q_nominal();
        let (mut l, mut r) = hold_current(&m, &q, &c);
        // Unreachable targets push joints onto their limits.
        l.target.translation.vector += Vec3::new(1.5, 1.0, 1.0);
        r.target.translation.vector += Vec3::new(-1.0, -1.0, -1.5);
        let (lo, hi) = m.position_limits();
        for _ in 0..300 {
            q = control_step(&m, &q, &l, &r, &[], &c).unwrap().0;
            for i in 0..m.dof() {
                assert!(q[i] >= lo[i] - 1e-9 && q[i] <= hi[i] + 1e-9);
            }
        }
    }

    #[test]
    fn driving_into_a_mesh_keeps_the_margin() {
        let (m, c) = setup();
        let mut q = c.q_nominal();
        let (l, mut r) = hold_current(&m, &q, &c);
        let start = r.target.translation.vector;
        let center = start + Vec3::new(0.0, 0.0, -0.25);
        let mut corners = Vec::new();
        for dx in [-0.08, 0.08] {
            for dy in [-0.08, 0.08] {
                for dz in [-0.08, 0.08] {
                    corners.push(center + Vec3::new(dx, dy, dz));
                }
            }
        }
        let mesh = convex_hull(&corners).unwrap();
        let obstacle = Obstacle::new("block", &mesh).unwrap();
        r.target.translation.vector = center;
        let mut worst = f64::INFINITY;
        for _ in 0..400 {
            let (next, report) = control_step(&m, &q, &l, &r, std::slice::from_ref(&obstacle), &c).unwrap();
            assert!(report.kkt_residual <= 1e-6);
            q = next;
            for (_, cap) in world_capsules(&m, &q).unwrap() {
                worst = worst.min(obstacle.distance(&cap).distance);
            }
        }
        assert!(worst >= c.d_s - 1e-3, "closest approach {worst}");
        let tool = forward_kinematics(&m, &q).unwrap().link(&m, "r_tool").unwrap().translation.vector;
        assert!(tool.z < start.z - 0.05, "hand should still have moved down");
    }
}
