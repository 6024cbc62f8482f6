use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::{DeviceEvent, InputEffect, TeleopError, TeleopSession, WorkspaceBox};
use crate::command::{apply_intent, parse_transcript, Intent, ObstacleRegistry, PerceptionContext, ResolutionReport};
use crate::geometry::Pose;
use crate::kinematics::{forward_kinematics, world_capsules, Hand, LinkPoses, RobotModel};
use crate::perception::{DepthView, PipelineParams, Scene};
use crate::wbc::{control_step, CartesianReference, ControllerConfig, Obstacle, StepReport};

fn default_motion_scale() -> f64 {
    1.0
}

fn default_haptic_margin() -> f64 {
    0.1
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TeleopParams {
    /// Robot meters per tracker meter.
    #[serde(default = "default_motion_scale")]
    pub motion_scale: f64,
    /// Haptic ramp width inside the workspace box, meters.
    #[serde(default = "default_haptic_margin")]
    pub haptic_margin: f64,
}

impl Default for TeleopParams {
    fn default() -> Self {
        TeleopParams { motion_scale: default_motion_scale(), haptic_margin: default_haptic_margin() }
    }
}

/// The `--config` file: controller, perception pipeline and operator mapping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub controller: ControllerConfig,
    #[serde(default)]
    pub pipeline: PipelineParams,
    #[serde(default)]
    pub teleop: TeleopParams,
}

impl SystemConfig {
    pub fn bundled() -> Self {
        Self::from_json(include_str!("../../assets/config.json")).expect("bundled config is valid")
    }

    pub fn from_json(text: &str) -> Result<Self, TeleopError> {
        let c: SystemConfig = serde_json::from_str(text).map_err(|e| TeleopError::Parameter(format!("config: {e}")))?;
        c.controller.validate()?;
        c.pipeline.validate()?;
        if !(c.teleop.motion_scale > 0.0) || !(c.teleop.haptic_margin >= 0.0) {
            return Err(TeleopError::Parameter(format!("teleop parameters out of range: {:?}", c.teleop)));
        }
        Ok(c)
    }
}

/// Single-owner simulation state: configuration, operator session, obstacle
/// registry and the open-loop joint state. The clock is the step counter.
pub struct Simulator {
    model: RobotModel,
    config: SystemConfig,
    scene: Scene,
    view: DepthView,
    session: TeleopSession,
    registry: ObstacleRegistry,
    obstacles: Vec<Obstacle>,
    avoidance: bool,
    q: DVector<f64>,
    poses: LinkPoses,
    steps: u64,
    last_step: Option<StepReport>,
    last_resolution: Option<ResolutionReport>,
}

impl Simulator {
    /// Starts at the nominal posture with both references holding the
    /// current end-effector poses. The scene is rendered once, here.
    pub fn new(model: RobotModel, scene: Scene, config: SystemConfig, workspace: WorkspaceBox, avoidance: bool) -> Result<Self, TeleopError> {
        config.controller.validate_for(&model)?;
        let q = config.controller.q_nominal();
        let poses = forward_kinematics(&model, &q)?;
        let hold = |hand| -> Result<CartesianReference, TeleopError> {
            let pose = *poses.link(&model, model.end_effector(hand))?;
            Ok(CartesianReference::hold(pose, config.controller.cartesian_gain))
        };
        let mut session = TeleopSession::new(hold(Hand::Left)?, hold(Hand::Right)?, config.teleop.motion_scale)?;
        session.calibrate(WorkspaceBox { margin: config.teleop.haptic_margin, ..workspace })?;
        let view = scene.render()?;
        Ok(Simulator {
            model,
            config,
            scene,
            view,
            session,
            registry: ObstacleRegistry::new(),
            obstacles: Vec::new(),
            avoidance,
            q,
            poses,
            steps: 0,
            last_step: None,
            last_resolution: None,
        })
    }

    pub fn t(&self) -> f64 {
        self.steps as f64 * self.config.controller.dt
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn dt(&self) -> f64 {
        self.config.controller.dt
    }

    pub fn q(&self) -> &DVector<f64> {
        &self.q
    }

    pub fn poses(&self) -> &LinkPoses {
        &self.poses
    }

    pub fn model(&self) -> &RobotModel {
        &self.model
    }

    pub fn scene(&self) -> &Scene {
        &self.scene
    }

    pub fn config(&self) -> &SystemConfig {
        &self.config
    }

    pub fn session(&self) -> &TeleopSession {
        &self.session
    }

    pub fn registry(&self) -> &ObstacleRegistry {
        &self.registry
    }

    pub fn avoidance(&self) -> bool {
        self.avoidance
    }

    pub fn last_step(&self) -> Option<&StepReport> {
        self.last_step.as_ref()
    }

    pub fn last_resolution(&self) -> Option<&ResolutionReport> {
        self.last_resolution.as_ref()
    }

    pub fn end_effector_pose(&self, hand: Hand) -> Pose {
        *self.poses.link(&self.model, self.model.end_effector(hand)).expect("end effectors are validated links")
    }

    pub fn handle_event(&mut self, event: &DeviceEvent) -> Result<InputEffect, TeleopError> {
        self.session.map_input(event)
    }

    pub fn parse(&self, transcript: &str) -> Result<Intent, TeleopError> {
        Ok(parse_transcript(transcript, &self.scene.vocabulary())?)
    }

    /// Everything a perception worker needs to resolve an intent off the
    /// control thread.
    pub fn perception_inputs(&self) -> (Scene, DepthView, PipelineParams, ObstacleRegistry) {
        (self.scene.clone(), self.view.clone(), self.config.pipeline, self.registry.clone())
    }

    /// Resolves `intent` now, on this thread.
    pub fn apply_intent(&mut self, intent: &Intent) -> Result<ResolutionReport, TeleopError> {
        let ctx = PerceptionContext { scene: &self.scene, view: &self.view, params: &self.config.pipeline };
        let t_ms = (self.t() * 1000.0).round() as u64;
        let report = apply_intent(&mut self.registry, intent, &ctx, t_ms);
        self.install_registry()?;
        self.last_resolution = Some(report.clone());
        Ok(report)
    }

    /// Swaps in a registry resolved elsewhere.
    pub fn replace_registry(&mut self, registry: ObstacleRegistry, report: ResolutionReport) -> Result<(), TeleopError> {
        self.registry = registry;
        self.install_registry()?;
        self.last_resolution = Some(report);
        Ok(())
    }

    fn install_registry(&mut self) -> Result<(), TeleopError> {
        self.obstacles = self
            .registry
            .active()
            .iter()
            .map(|(id, m)| Obstacle::new(id.clone(), &m.mesh))
            .collect::<Result<_, _>>()?;
        Ok(())
    }

    /// Smallest capsule distance to any registered mesh, whether or not
    /// avoidance is on.
    pub fn mesh_distance(&self) -> Result<Option<f64>, TeleopError> {
        if self.obstacles.is_empty() {
            return Ok(None);
        }
        let capsules = world_capsules(&self.model, &self.q)?;
        let d = capsules
            .iter()
            .flat_map(|(_, c)| self.obstacles.iter().map(move |o| o.distance(c).distance))
            .fold(f64::INFINITY, f64::min);
        Ok(Some(d))
    }

    /// One control period.
    pub fn step(&mut self) -> Result<&StepReport, TeleopError> {
        let obstacles: &[Obstacle] = if self.avoidance { &self.obstacles } else { &[] };
        let (next, report) = control_step(
            &self.model,
            &self.q,
            self.session.reference(Hand::Left),
            self.session.reference(Hand::Right),
            obstacles,
            &self.config.controller,
        )?;
        self.q = next;
        self.poses = forward_kinematics(&self.model, &self.q)?;
        self.steps += 1;
        Ok(self.last_step.insert(report))
    }
}
