//! Scripted operator: piecewise-linear hand motions, utterances and gripper
//! toggles turned into a recorded session, as a stand-in for a human with
//! trackers. The bundled trial logs are produced here.

use nalgebra::{Translation3, UnitQuaternion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{calibrate_workspace, Buttons, DeviceEvent, TeleopError, TeleopLog, TrialSetup, WorkspaceBox};
use crate::command::parse_transcript;
use crate::geometry::{Pose, Vec3};
use crate::kinematics::Hand;

/// Tracker sample period, seconds.
pub const EVENT_PERIOD: f64 = 0.02;
/// Tracker position jitter, meters.
pub const TRACKER_NOISE: f64 = 5e-4;
/// The clutch closes this long after the start.
pub const CLUTCH_AT: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct Utterance {
    pub t: f64,
    pub hand: Hand,
    pub text: String,
}

/// Hand motion as `(t, displacement)` knots relative to the pose at the
/// clutch press; both hands hold still before their first knot.
#[derive(Debug, Clone, PartialEq)]
pub struct Script {
    pub name: String,
    pub seed: u64,
    pub utterances: Vec<Utterance>,
    pub left: Vec<(f64, Vec3)>,
    pub right: Vec<(f64, Vec3)>,
    pub gripper: Vec<(f64, Hand)>,
}

impl Script {
    pub fn duration(&self) -> f64 {
        let knots = self.left.iter().chain(&self.right).map(|(t, _)| *t);
        let other = self.utterances.iter().map(|u| u.t).chain(self.gripper.iter().map(|(t, _)| *t));
        knots.chain(other).fold(0.0, f64::max)
    }
}

/// Tracker home of each hand, in the tracker frame.
pub fn tracker_home(hand: Hand) -> Vec3 {
    match hand {
        Hand::Left => Vec3::new(0.0, 0.25, 1.0),
        Hand::Right => Vec3::new(0.0, -0.25, 1.0),
    }
}

/// Calibration sweep: corners of the reachable tracker volume.
pub fn calibration_sweep() -> Vec<Pose> {
    let (lo, hi) = (Vec3::new(-0.4, -0.8, 0.5), Vec3::new(0.8, 0.8, 1.5));
    (0..8)
        .map(|i| {
            let pick = |bit: usize, k: usize| if i & bit == 0 { lo[k] } else { hi[k] };
            Pose::from_parts(Translation3::new(pick(1, 0), pick(2, 1), pick(4, 2)), UnitQuaternion::identity())
        })
        .collect()
}

fn interpolate(knots: &[(f64, Vec3)], t: f64) -> Vec3 {
    let mut prev = (0.0, Vec3::zeros());
    for &(tk, pk) in knots {
        if t <= tk {
            let span = tk - prev.0;
            let s = if span > 0.0 { (t - prev.0) / span } else { 1.0 };
            return prev.1 + (pk - prev.1) * s;
        }
        prev = (tk, pk);
    }
    prev.1
}

/// Samples both trackers every [`EVENT_PERIOD`] with seeded jitter, holding
/// the clutch from [`CLUTCH_AT`] on. Utterances are parsed against the scene
/// vocabulary and stored as resolved intents.
pub fn record(script: &Script, setup: &TrialSetup) -> Result<TeleopLog, TeleopError> {
    let workspace: WorkspaceBox = calibrate_workspace(&calibration_sweep(), setup.config.teleop.haptic_margin)?;
    let mut log = TeleopLog::new(setup.header(script.seed, workspace, Some(script.name.clone())));
    let mut rng = ChaCha8Rng::seed_from_u64(script.seed);
    let noise = Normal::new(0.0, TRACKER_NOISE).expect("positive sigma");
    let vocabulary = setup.scene.vocabulary();

    let ticks = (script.duration() / EVENT_PERIOD).ceil() as usize;
    for k in 0..=ticks {
        let t = k as f64 * EVENT_PERIOD;
        for hand in Hand::BOTH {
            let knots = match hand {
                Hand::Left => &script.left,
                Hand::Right => &script.right,
            };
            let jitter = Vec3::from_fn(|_, _| noise.sample(&mut rng));
            let p = tracker_home(hand) + interpolate(knots, t) + jitter;
            let due = |at: f64| at > t - EVENT_PERIOD / 2.0 && at <= t + EVENT_PERIOD / 2.0;
            let speech = script.utterances.iter().find(|u| u.hand == hand && due(u.t));
            let buttons = Buttons {
                clutch: t >= CLUTCH_AT,
                gripper_toggle: script.gripper.iter().any(|(at, h)| *h == hand && due(*at)),
                speak: speech.is_some(),
            };
            log.events.push(DeviceEvent {
                t,
                hand,
                pose: Pose::from_parts(Translation3::from(p), UnitQuaternion::identity()),
                buttons,
                payload: speech.map(|u| u.text.clone()),
            });
            if let Some(u) = speech {
                log.intents.push((t, parse_transcript(&u.text, &vocabulary)?));
            }
        }
    }
    Ok(log)
}

fn say(t: f64, hand: Hand, text: &str) -> Utterance {
    Utterance { t, hand, text: text.to_string() }
}

fn v(x: f64, y: f64, z: f64) -> Vec3 {
    Vec3::new(x, y, z)
}

/// The five bundled pick-and-place sessions.
pub fn bundled_scripts() -> Vec<Script> {
    vec![
        Script {
            name: "trial1".into(),
            seed: 101,
            utterances: vec![say(0.3, Hand::Left, "avoid the yellow sauce and the red box")],
            left: vec![(1.0, v(0.0, 0.0, 0.0)), (3.0, v(0.42, 0.14, -0.05)), (4.0, v(0.42, 0.14, -0.05)), (6.0, v(0.0, 0.0, 0.0))],
            right: vec![(1.5, v(0.0, 0.0, 0.0)), (3.5, v(0.25, 0.1, -0.05)), (5.0, v(0.45, 0.25, -0.05)), (6.5, v(0.0, 0.0, 0.0))],
            gripper: vec![(4.0, Hand::Left), (5.5, Hand::Left)],
        },
        Script {
            name: "trial2".into(),
            seed: 102,
            utterances: vec![say(0.3, Hand::Right, "add collision for the red sauce")],
            left: vec![],
            right: vec![(1.0, v(0.0, 0.0, 0.0)), (3.0, v(0.42, -0.16, -0.06)), (4.0, v(0.42, -0.16, -0.06)), (6.0, v(0.1, 0.0, 0.0))],
            gripper: vec![(3.5, Hand::Right), (5.5, Hand::Right)],
        },
        Script {
            name: "trial3".into(),
            seed: 103,
            utterances: vec![say(0.3, Hand::Left, "avoid the red box")],
            left: vec![(1.0, v(0.0, 0.0, 0.0)), (2.5, v(0.3, 0.0, 0.0)), (4.5, v(0.4, 0.3, -0.04)), (6.0, v(0.0, 0.0, 0.0))],
            right: vec![],
            gripper: vec![(4.5, Hand::Left)],
        },
        Script {
            name: "trial4".into(),
            seed: 104,
            utterances: vec![say(0.3, Hand::Right, "avoid the monster")],
            left: vec![],
            right: vec![(1.0, v(0.0, 0.0, 0.0)), (2.5, v(0.3, 0.0, 0.0)), (4.5, v(0.38, 0.3, -0.05)), (6.0, v(0.0, 0.0, 0.0))],
            gripper: vec![(4.5, Hand::Right)],
        },
        Script {
            name: "trial5".into(),
            seed: 105,
            utterances: vec![say(0.3, Hand::Right, "avoid the red sauce and the mustard"), say(6.0, Hand::Right, "remove ketchup")],
            left: vec![(1.0, v(0.0, 0.0, 0.0)), (3.0, v(0.15, -0.05, 0.05)), (5.0, v(0.0, 0.0, 0.0))],
            right: vec![(1.0, v(0.0, 0.0, 0.0)), (3.0, v(0.15, 0.0, 0.05)), (5.0, v(0.0, 0.0, 0.0))],
            gripper: vec![],
        },
    ]
}

/// `(name, JSON-lines text)` of the bundled trial logs.
pub fn bundled_logs() -> [(&'static str, &'static str); 5] {
    [
        ("trial1", include_str!("../../assets/trials/trial1.jsonl")),
        ("trial2", include_str!("../../assets/trials/trial2.jsonl")),
        ("trial3", include_str!("../../assets/trials/trial3.jsonl")),
        ("trial4", include_str!("../../assets/trials/trial4.jsonl")),
        ("trial5", include_str!("../../assets/trials/trial5.jsonl")),
    ]
}
