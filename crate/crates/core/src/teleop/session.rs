use serde::{Deserialize, Serialize};

use super::{proximity_event, DeviceEvent, TeleopError, WorkspaceBox};
use crate::geometry::Pose;
use crate::kinematics::Hand;
use crate::wbc::CartesianReference;

#[derive(Debug, Clone, PartialEq)]
struct Anchor {
    tracker: Pose,
    target: Pose,
}

#[derive(Debug, Clone, PartialEq)]
struct HandState {
    reference: CartesianReference,
    anchor: Option<Anchor>,
    gripper_closed: bool,
    last_t: Option<f64>,
    haptic: f64,
}

/// What one event changed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputEffect {
    pub hand: Hand,
    pub reference_changed: bool,
    /// New gripper state, when the event toggled it.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gripper_closed: Option<bool>,
    /// Transcript to forward to the command layer.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub transcript: Option<String>,
    pub haptic: f64,
}

/// Maps tracker events onto the two end-effector references.
///
/// While the clutch is held the reference follows the tracker's motion since
/// the press, scaled by `motion_scale`; the press itself never moves the
/// reference, and a released clutch freezes it.
#[derive(Debug, Clone, PartialEq)]
pub struct TeleopSession {
    workspace: Option<WorkspaceBox>,
    motion_scale: f64,
    hands: [HandState; 2],
}

fn slot(hand: Hand) -> usize {
    match hand {
        Hand::Left => 0,
        Hand::Right => 1,
    }
}

impl TeleopSession {
    pub fn new(left: CartesianReference, right: CartesianReference, motion_scale: f64) -> Result<Self, TeleopError> {
        if !(motion_scale > 0.0) || !motion_scale.is_finite() {
            return Err(TeleopError::Parameter(format!("motion scale must be positive, got {motion_scale}")));
        }
        let hand = |reference| HandState { reference, anchor: None, gripper_closed: false, last_t: None, haptic: 0.0 };
        Ok(TeleopSession { workspace: None, motion_scale, hands: [hand(left), hand(right)] })
    }

    pub fn calibrate(&mut self, workspace: WorkspaceBox) -> Result<(), TeleopError> {
        workspace.validate()?;
        self.workspace = Some(workspace);
        Ok(())
    }

    pub fn workspace(&self) -> Option<&WorkspaceBox> {
        self.workspace.as_ref()
    }

    pub fn reference(&self, hand: Hand) -> &CartesianReference {
        &self.hands[slot(hand)].reference
    }

    pub fn gripper_closed(&self, hand: Hand) -> bool {
        self.hands[slot(hand)].gripper_closed
    }

    pub fn clutched(&self, hand: Hand) -> bool {
        self.hands[slot(hand)].anchor.is_some()
    }

    pub fn haptic(&self, hand: Hand) -> f64 {
        self.hands[slot(hand)].haptic
    }

    pub fn map_input(&mut self, event: &DeviceEvent) -> Result<InputEffect, TeleopError> {
        let workspace = self.workspace.ok_or(TeleopError::NotCalibrated)?;
        if !event.t.is_finite() {
            return Err(TeleopError::Parameter(format!("event time {} is not finite", event.t)));
        }
        let scale = self.motion_scale;
        let state = &mut self.hands[slot(event.hand)];
        if let Some(last) = state.last_t {
            if event.t < last {
                return Err(TeleopError::OutOfOrder { hand: event.hand, t: event.t, last });
            }
        }
        state.last_t = Some(event.t);
        state.haptic = proximity_event(&workspace, &event.pose);

        // Motion beyond the calibrated volume is not trusted.
        let mut tracker = event.pose;
        tracker.translation.vector = workspace.clamp(&tracker.translation.vector);

        let before = state.reference.target;
        if event.buttons.clutch {
            let anchor = state.anchor.get_or_insert(Anchor { tracker, target: state.reference.target });
            let shift = (tracker.translation.vector - anchor.tracker.translation.vector) * scale;
            let turn = tracker.rotation * anchor.tracker.rotation.inverse();
            let mut target = anchor.target;
            target.translation.vector += shift;
            target.rotation = turn * anchor.target.rotation;
            state.reference.target = target;
        } else {
            state.anchor = None;
        }

        let gripper_closed = event.buttons.gripper_toggle.then(|| {
            state.gripper_closed = !state.gripper_closed;
            state.gripper_closed
        });
        let transcript = if event.buttons.speak { event.payload.clone().filter(|s| !s.trim().is_empty()) } else { None };
        Ok(InputEffect {
            hand: event.hand,
            reference_changed: state.reference.target != before,
            gripper_closed,
            transcript,
            haptic: state.haptic,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Vec3;
    use crate::teleop::Buttons;
    use nalgebra::{Translation3, UnitQuaternion, Vector3};

    fn pose(x: f64, y: f64, z: f64) -> Pose {
        Pose::from_parts(Translation3::new(x, y, z), UnitQuaternion::identity())
    }

    fn session() -> TeleopSession {
        let r = |y| CartesianReference::hold(pose(0.6, y, 0.9), [5.0; 6]);
        let mut s = TeleopSession::new(r(0.2), r(-0.2), 1.0).unwrap();
        s.calibrate(WorkspaceBox::new(Vec3::new(-1.0, -1.0, 0.0), Vec3::new(1.0, 1.0, 2.0), 0.1).unwrap()).unwrap();
        s
    }

    fn ev(t: f64, p: Pose, clutch: bool) -> DeviceEvent {
        DeviceEvent { t, hand: Hand::Right, pose: p, buttons: Buttons { clutch, ..Default::default() }, payload: None }
    }

    #[test]
    fn uncalibrated_rejects() {
        let r = CartesianReference::hold(pose(0.0, 0.0, 0.0), [5.0; 6]);
        let mut s = TeleopSession::new(r.clone(), r, 1.0).unwrap();
        assert!(matches!(s.map_input(&ev(0.0, pose(0.0, 0.0, 1.0), true)), Err(TeleopError::NotCalibrated)));
    }

    #[test]
    fn released_clutch_freezes_reference() {
        let mut s = session();
        let before = s.reference(Hand::Right).clone();
        for i in 0..20 {
            let e = s.map_input(&ev(i as f64 * 0.01, pose(0.01 * i as f64, 0.3, 1.0), false)).unwrap();
            assert!(!e.reference_changed);
        }
        assert_eq!(s.reference(Hand::Right), &before);
    }

    #[test]
    fn clutched_motion_is_unity_mapped() {
        let mut s = session();
        let start = s.reference(Hand::Right).target.translation.vector;
        s.map_input(&ev(0.0, pose(0.2, 0.0, 1.0), true)).unwrap();
        s.map_input(&ev(0.1, pose(0.3, 0.0, 1.0), true)).unwrap();
        let now = s.reference(Hand::Right).target.translation.vector;
        assert!((now - start - Vec3::new(0.1, 0.0, 0.0)).norm() < 1e-12);
        assert_eq!(s.reference(Hand::Left).target.translation.vector, Vec3::new(0.6, 0.2, 0.9));
    }

    #[test]
    fn clutched_rotation_is_applied_in_world_frame() {
        let mut s = session();
        let spin = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), 0.3);
        s.map_input(&ev(0.0, pose(0.0, 0.0, 1.0), true)).unwrap();
        s.map_input(&ev(0.1, Pose::from_parts(Translation3::new(0.0, 0.0, 1.0), spin), true)).unwrap();
        assert!(s.reference(Hand::Right).target.rotation.angle_to(&spin) < 1e-12);
    }

    #[test]
    fn re_engaging_clutch_does_not_jump() {
        let mut s = session();
        let mut t = 0.0;
        let mut step = |s: &mut TeleopSession, x: f64, clutch: bool| {
            t += 0.01;
            s.map_input(&ev(t, pose(x, 0.0, 1.0), clutch)).unwrap()
        };
        step(&mut s, 0.0, true);
        step(&mut s, 0.1, true);
        let held = s.reference(Hand::Right).clone();
        // Reposition with the clutch open, then press again far away.
        step(&mut s, -0.5, false);
        step(&mut s, -0.6, false);
        let press = step(&mut s, -0.6, true);
        assert!(!press.reference_changed);
        assert_eq!(s.reference(Hand::Right), &held);
        step(&mut s, -0.55, true);
        let moved = s.reference(Hand::Right).target.translation.vector - held.target.translation.vector;
        assert!((moved - Vec3::new(0.05, 0.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn tracker_is_clamped_to_workspace() {
        let mut s = session();
        let start = s.reference(Hand::Right).target.translation.vector;
        s.map_input(&ev(0.0, pose(0.9, 0.0, 1.0), true)).unwrap();
        let e = s.map_input(&ev(0.1, pose(1.5, 0.0, 1.0), true)).unwrap();
        assert_eq!(e.haptic, 1.0);
        let now = s.reference(Hand::Right).target.translation.vector;
        assert!((now - start - Vec3::new(0.1, 0.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn gripper_and_speech_edges() {
        let mut s = session();
        let mut e = ev(0.0, pose(0.0, 0.0, 1.0), false);
        e.buttons.gripper_toggle = true;
        assert_eq!(s.map_input(&e).unwrap().gripper_closed, Some(true));
        e.t = 0.1;
        assert_eq!(s.map_input(&e).unwrap().gripper_closed, Some(false));
        e.buttons = Buttons { speak: true, ..Default::default() };
        e.payload = Some("avoid the red box".into());
        assert_eq!(s.map_input(&e).unwrap().transcript.as_deref(), Some("avoid the red box"));
        e.buttons.speak = false;
        assert_eq!(s.map_input(&e).unwrap().transcript, None);
    }

    #[test]
    fn out_of_order_is_rejected() {
        let mut s = session();
        s.map_input(&ev(1.0, pose(0.0, 0.0, 1.0), false)).unwrap();
        assert!(matches!(s.map_input(&ev(0.5, pose(0.0, 0.0, 1.0), false)), Err(TeleopError::OutOfOrder { .. })));
    }

    #[test]
    fn clutch_released_intervals_integrate_to_zero() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let mut s = session();
        let mut released_motion = Vec3::zeros();
        let mut prev = s.reference(Hand::Right).target.translation.vector;
        for i in 0..500 {
            let clutch = rng.random_bool(0.5);
            let p = pose(rng.random_range(-0.9..0.9), rng.random_range(-0.9..0.9), rng.random_range(0.1..1.9));
            s.map_input(&ev(i as f64 * 0.01, p, clutch)).unwrap();
            let now = s.reference(Hand::Right).target.translation.vector;
            if !clutch {
                released_motion += now - prev;
            }
            prev = now;
        }
        assert_eq!(released_motion, Vec3::zeros());
    }
}
