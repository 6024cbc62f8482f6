use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use hullguard_core::geometry::ply::read_ply;
use hullguard_core::geometry::{Pose, PoseJson, CAMERA_FRAME};
use hullguard_core::perception::{build_collision_mesh, PipelineParams};
use hullguard_core::teleop::script::calibration_sweep;
use hullguard_core::teleop::{
    calibrate_workspace, run_trial, TeleopLog, TrialSetup, BUNDLED_CONFIG, BUNDLED_ROBOT, BUNDLED_SCENE,
};
use tokio::net::TcpListener;

use crate::{start, RecordOptions, ServeOptions, ServiceError, SessionSummary};

#[derive(Debug, Parser)]
#[command(name = "hullguard", version, about = "Speech-commanded collision avoidance for bimanual teleoperation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Serve a live session over HTTP and WebSocket.
    Run(RunArgs),
    /// Serve a live session and write it to a replayable log.
    Record(RecordArgs),
    /// Re-execute a recorded log and write the trial report.
    Replay(ReplayArgs),
    /// Turn a PLY point cloud into a convex collision mesh.
    Pipeline(PipelineArgs),
}

/// Scene, robot and configuration files; each defaults to the bundled one.
#[derive(Debug, Args)]
pub struct Inputs {
    #[arg(long)]
    pub scene: Option<PathBuf>,
    #[arg(long)]
    pub robot: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub inputs: Inputs,
    /// TCP port; 0 picks a free one.
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    /// Stop after this many simulated seconds.
    #[arg(long)]
    pub duration: Option<f64>,
    /// Register meshes but leave them out of the controller.
    #[arg(long)]
    pub no_avoidance: bool,
}

#[derive(Debug, Args)]
pub struct RecordArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Output JSON-lines log.
    #[arg(long)]
    pub log: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub description: Option<String>,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    #[arg(long)]
    pub log: PathBuf,
    #[arg(long)]
    pub no_avoidance: bool,
    /// Report destination; standard output when absent.
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[command(flatten)]
    pub inputs: Inputs,
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    /// ASCII or binary PLY in the camera frame.
    #[arg(long)]
    pub cloud: PathBuf,
    /// Pipeline parameter JSON; defaults when absent.
    #[arg(long)]
    pub params: Option<PathBuf>,
    /// Camera pose in the world, `{"xyz": [..], "quat_wxyz": [..]}`; identity when absent.
    #[arg(long)]
    pub camera_pose: Option<PathBuf>,
    /// Source object name recorded in the mesh; the file stem when absent.
    #[arg(long)]
    pub id: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

fn read(path: &Path) -> Result<String, ServiceError> {
    std::fs::read_to_string(path).map_err(|source| ServiceError::Io { path: path.into(), source })
}

fn write(path: &Path, text: &str) -> Result<(), ServiceError> {
    std::fs::write(path, text).map_err(|source| ServiceError::Io { path: path.into(), source })
}

impl Inputs {
    pub fn load(&self) -> Result<TrialSetup, ServiceError> {
        let text = |path: &Option<PathBuf>, bundled: &str| path.as_deref().map_or(Ok(bundled.to_string()), read);
        Ok(TrialSetup::from_texts(
            &text(&self.scene, BUNDLED_SCENE)?,
            &text(&self.robot, BUNDLED_ROBOT)?,
            &text(&self.config, BUNDLED_CONFIG)?,
        )?)
    }
}

/// Parses `args` and runs the subcommand; returns the process exit code.
pub fn main(args: impl IntoIterator<Item = OsString>) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("HULLGUARD_LOG_LEVEL", "info")).init();
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            log::error!("{e}");
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(command: Command) -> Result<(), ServiceError> {
    match command {
        Command::Run(args) => serve(&args, None).map(|_| ()),
        Command::Record(args) => {
            let record = RecordOptions { seed: args.seed, description: args.description.clone() };
            let summary = serve(&args.run, Some(record))?;
            let log = summary.log.expect("recording sessions keep a log");
            log.write(&args.log).map_err(ServiceError::from)?;
            log::info!("wrote {} events and {} intents to {}", log.events.len(), log.intents.len(), args.log.display());
            Ok(())
        }
        Command::Replay(args) => replay(&args),
        Command::Pipeline(args) => pipeline(&args),
    }
}

fn serve(args: &RunArgs, record: Option<RecordOptions>) -> Result<SessionSummary, ServiceError> {
    let setup = args.inputs.load()?;
    let workspace = calibrate_workspace(&calibration_sweep(), setup.config.teleop.haptic_margin)?;
    let options = ServeOptions { setup, workspace, avoidance: !args.no_avoidance, duration: args.duration, record };
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|source| ServiceError::Io { path: "tokio runtime".into(), source })?;
    runtime.block_on(async {
        let addr = format!("{}:{}", args.host, args.port);
        let listener = TcpListener::bind(&addr).await.map_err(|source| ServiceError::Bind { addr, source })?;
        let server = start(listener, options).await?;
        println!("listening on {}", server.local_addr());
        let _ = std::io::stdout().flush();
        let handle = server.shutdown_handle();
        tokio::spawn(async move {
            if tokio::signal::ctrl_c().await.is_ok() {
                log::info!("interrupted, shutting down");
                handle.shutdown();
            }
        });
        server.finished().await
    })
}

fn replay(args: &ReplayArgs) -> Result<(), ServiceError> {
    let setup = args.inputs.load()?;
    let log = TeleopLog::from_jsonl(&read(&args.log)?)?;
    let report = run_trial(&log, &setup, !args.no_avoidance)?;
    let json = report.to_json();
    match &args.report {
        Some(path) => write(path, &(json + "\n"))?,
        None => println!("{json}"),
    }
    log::info!("{} collision episodes over {} steps", report.collisions, report.steps);
    Ok(())
}

fn pipeline(args: &PipelineArgs) -> Result<(), ServiceError> {
    let params = match &args.params {
        Some(path) => {
            let p: PipelineParams = serde_json::from_str(&read(path)?)
                .map_err(|e| ServiceError::Parse { path: path.clone(), message: e.to_string() })?;
            p.validate()?;
            p
        }
        None => PipelineParams::default(),
    };
    let pose = match &args.camera_pose {
        Some(path) => serde_json::from_str::<PoseJson>(&read(path)?)
            .map_err(|e| ServiceError::Parse { path: path.clone(), message: e.to_string() })?
            .to_pose()
            .map_err(|e| ServiceError::Parse { path: path.clone(), message: e.to_string() })?,
        None => Pose::identity(),
    };
    let file = std::fs::File::open(&args.cloud).map_err(|source| ServiceError::Io { path: args.cloud.clone(), source })?;
    let cloud = read_ply(std::io::BufReader::new(file), CAMERA_FRAME)?;
    let id = match &args.id {
        Some(id) => id.clone(),
        None => args.cloud.file_stem().map_or("cloud".into(), |s| s.to_string_lossy().into_owned()),
    };
    let mesh = build_collision_mesh(&cloud, &params, &pose, &id, 0)?;
    let json = serde_json::to_string_pretty(&mesh).expect("meshes serialize");
    write(&args.out, &(json + "\n"))?;
    log::info!("{} points -> {} triangles, volume {:.6} m^3", cloud.len(), mesh.mesh.triangles.len(), mesh.mesh.volume());
    Ok(())
}
