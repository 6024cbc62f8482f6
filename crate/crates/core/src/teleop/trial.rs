use serde::{Deserialize, Serialize};

use super::{detect_collision, file_hash, LogHeader, Simulator, SystemConfig, TeleopError, TeleopLog, WorkspaceBox};
use crate::kinematics::RobotModel;
use crate::perception::Scene;

/// Simulated time after the last log line, seconds.
pub const SETTLE_TIME: f64 = 0.5;

pub const BUNDLED_SCENE: &str = include_str!("../../assets/corridor.json");
pub const BUNDLED_ROBOT: &str = include_str!("../../assets/robot.json");
pub const BUNDLED_CONFIG: &str = include_str!("../../assets/config.json");

/// Parsed trial inputs together with the hashes of their exact bytes.
#[derive(Debug, Clone)]
pub struct TrialSetup {
    pub scene: Scene,
    pub model: RobotModel,
    pub config: SystemConfig,
    pub scene_hash: String,
    pub robot_hash: String,
    pub config_hash: String,
}

impl TrialSetup {
    pub fn from_texts(scene: &str, robot: &str, config: &str) -> Result<Self, TeleopError> {
        let setup = TrialSetup {
            scene: Scene::from_json(scene)?,
            model: RobotModel::from_json(robot)?,
            config: SystemConfig::from_json(config)?,
            scene_hash: file_hash(scene.as_bytes()),
            robot_hash: file_hash(robot.as_bytes()),
            config_hash: file_hash(config.as_bytes()),
        };
        setup.config.controller.validate_for(&setup.model)?;
        Ok(setup)
    }

    /// Corridor scene, default robot and bundled configuration.
    pub fn bundled() -> Self {
        Self::from_texts(BUNDLED_SCENE, BUNDLED_ROBOT, BUNDLED_CONFIG).expect("bundled trial inputs are valid")
    }

    pub fn header(&self, seed: u64, workspace: WorkspaceBox, description: Option<String>) -> LogHeader {
        LogHeader {
            scene_hash: self.scene_hash.clone(),
            robot_hash: self.robot_hash.clone(),
            config_hash: self.config_hash.clone(),
            seed,
            workspace,
            description,
        }
    }

    pub fn check(&self, header: &LogHeader) -> Result<(), TeleopError> {
        for (what, recorded, current) in [
            ("scene", &header.scene_hash, &self.scene_hash),
            ("robot", &header.robot_hash, &self.robot_hash),
            ("config", &header.config_hash, &self.config_hash),
        ] {
            if recorded != current {
                return Err(TeleopError::Integrity(format!("{what} hash {current} does not match recorded {recorded}")));
            }
        }
        Ok(())
    }

    pub fn simulator(&self, workspace: WorkspaceBox, avoidance: bool) -> Result<Simulator, TeleopError> {
        Simulator::new(self.model.clone(), self.scene.clone(), self.config.clone(), workspace, avoidance)
    }
}

/// Maximal interval of continuous ground-truth contact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollisionEpisode {
    pub start: f64,
    pub end: f64,
    pub link: String,
    pub object: String,
    pub max_depth: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialReport {
    pub avoidance: bool,
    pub steps: u64,
    pub dt: f64,
    /// Number of contact episodes.
    pub collisions: usize,
    pub first_collision_t: Option<f64>,
    pub episodes: Vec<CollisionEpisode>,
    /// Per step, smallest capsule distance to any registered mesh; null while
    /// no mesh is registered.
    pub min_distance_series: Vec<Option<f64>>,
    pub min_mesh_distance: Option<f64>,
    /// Smallest capsule distance to the true scene geometry.
    pub min_scene_distance: f64,
    pub halted_steps: usize,
    /// Worst KKT residual over every solved step.
    pub max_kkt_residual: f64,
    pub active_meshes: Vec<String>,
    /// Every event was executed and every step produced a QP solution.
    pub completion: bool,
}

impl TrialReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Re-executes `log` at the controller period. With avoidance off the
/// registered meshes contribute no constraint rows but are still measured;
/// self-collision rows always remain.
pub fn run_trial(log: &TeleopLog, setup: &TrialSetup, avoidance: bool) -> Result<TrialReport, TeleopError> {
    setup.check(&log.header)?;
    let mut sim = setup.simulator(log.header.workspace, avoidance)?;
    let dt = sim.dt();
    let steps = ((log.end_time() + SETTLE_TIME) / dt).ceil() as u64;

    let mut events = log.events.iter().peekable();
    let mut intents = log.intents.iter().peekable();
    let mut episodes: Vec<CollisionEpisode> = Vec::new();
    let mut in_contact = false;
    let mut series = Vec::with_capacity(steps as usize);
    let mut min_scene = f64::INFINITY;
    let mut halted = 0;
    let mut max_kkt: f64 = 0.0;

    for k in 0..steps {
        // Lines are due once the clock reaches them; the slack absorbs
        // times written as multiples of dt.
        let due = k as f64 * dt + 1e-9;
        while let Some(e) = events.next_if(|e| e.t <= due) {
            sim.handle_event(e)?;
        }
        while let Some((_, intent)) = intents.next_if(|(t, _)| *t <= due) {
            sim.apply_intent(intent)?;
        }
        let report = sim.step()?;
        max_kkt = max_kkt.max(report.kkt_residual);
        if report.halted {
            halted += 1;
        }
        let t = sim.t();
        series.push(sim.mesh_distance()?);
        let check = detect_collision(sim.model(), sim.q(), &sim.scene().objects)?;
        min_scene = min_scene.min(check.min_distance);
        match (check.colliding, in_contact) {
            (true, false) => {
                let (link, object) = check.pair.clone().unwrap_or_default();
                episodes.push(CollisionEpisode { start: t, end: t, link, object, max_depth: check.depth });
            }
            (true, true) => {
                let ep = episodes.last_mut().expect("open episode");
                ep.end = t;
                ep.max_depth = ep.max_depth.max(check.depth);
            }
            _ => {}
        }
        in_contact = check.colliding;
    }

    let min_mesh = series.iter().flatten().copied().reduce(f64::min);
    Ok(TrialReport {
        avoidance,
        steps,
        dt,
        collisions: episodes.len(),
        first_collision_t: episodes.first().map(|e| e.start),
        episodes,
        min_distance_series: series,
        min_mesh_distance: min_mesh,
        min_scene_distance: min_scene,
        halted_steps: halted,
        max_kkt_residual: max_kkt,
        active_meshes: sim.registry().active().keys().cloned().collect(),
        completion: events.peek().is_none() && intents.peek().is_none() && halted == 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Vec3;

    fn workspace() -> WorkspaceBox {
        WorkspaceBox::new(Vec3::new(-0.5, -0.8, 0.4), Vec3::new(1.2, 0.8, 1.6), 0.1).unwrap()
    }

    #[test]
    fn empty_log_is_motionless_and_clean() {
        let setup = TrialSetup::bundled();
        let log = TeleopLog::new(setup.header(0, workspace(), None));
        let r = run_trial(&log, &setup, true).unwrap();
        assert_eq!(r.steps, (SETTLE_TIME / r.dt).ceil() as u64);
        assert_eq!(r.collisions, 0);
        assert!(r.completion);
        assert!(r.min_distance_series.iter().all(Option::is_none));
        let sim = setup.simulator(workspace(), true).unwrap();
        let q0 = sim.q().clone();
        let mut sim = sim;
        for _ in 0..r.steps {
            sim.step().unwrap();
        }
        assert!((sim.q() - q0).amax() < 1e-12);
    }

    #[test]
    fn hash_mismatch_is_an_integrity_error() {
        let setup = TrialSetup::bundled();
        let mut header = setup.header(0, workspace(), None);
        header.robot_hash = file_hash(b"another robot");
        let err = run_trial(&TeleopLog::new(header), &setup, true).unwrap_err();
        assert!(matches!(err, TeleopError::Integrity(ref m) if m.contains("robot")), "{err}");
    }
}
