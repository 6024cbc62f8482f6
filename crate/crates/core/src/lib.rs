//! Core of a safe bimanual teleoperation stack: a point-cloud to
//! collision-mesh pipeline, text-command intents, a whole-body velocity QP
//! controller with velocity-damping collision constraints, and the
//! record/replay harness used to compare live and unprotected runs.

// `!(x > 0.0)` is the NaN-rejecting form of `x <= 0.0`.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod geometry;
pub mod perception;
pub mod command;
pub mod kinematics;
pub mod wbc;
pub mod teleop;
