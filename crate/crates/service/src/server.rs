//! Live session: one control-loop thread that owns the simulator, one
//! perception worker that owns the obstacle registry between intents, and
//! the axum acceptor. They talk through bounded queues; the network side
//! only ever sees serialized snapshots.

use std::collections::HashSet;
use std::net::SocketAddr;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::mpsc::{self, Receiver, SyncSender, TryRecvError, TrySendError};
use std::sync::{Arc, RwLock};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::Response;
use axum::routing::get;
use axum::{Json, Router};
use hullguard_core::command::{apply_intent, Intent, ObstacleRegistry, PerceptionContext, ResolutionReport};
use hullguard_core::kinematics::Hand;
use hullguard_core::perception::{DepthView, PipelineParams, Scene};
use hullguard_core::teleop::{file_hash, DeviceEvent, Simulator, TeleopLog, TrialSetup, WorkspaceBox};
use serde_json::{json, Value};
use tokio::net::TcpListener;
use tokio::sync::{broadcast, watch};

use crate::protocol::{ClientMessage, IntentReport, MeshEntry, MeshSummary, ServerMessage, StateSnapshot, WorldDescription};
use crate::ServiceError;

/// Snapshots a slow client may fall behind by before older ones are
/// dropped. Broadcast capacities round up to a power of two, so the bound
/// of three is met with two.
pub const SNAPSHOT_QUEUE_DEPTH: usize = 2;
pub const MAX_SNAPSHOT_RATE: f64 = 30.0;
const REPORT_QUEUE_DEPTH: usize = 16;
const INPUT_QUEUE_DEPTH: usize = 256;
const PERCEPTION_QUEUE_DEPTH: usize = 4;

/// Control steps between published snapshots.
pub fn snapshot_stride(dt: f64) -> u64 {
    ((1.0 / MAX_SNAPSHOT_RATE / dt) - 1e-9).ceil().max(1.0) as u64
}

#[derive(Debug, Clone)]
pub struct RecordOptions {
    pub seed: u64,
    pub description: Option<String>,
}

#[derive(Debug, Clone)]
pub struct ServeOptions {
    pub setup: TrialSetup,
    pub workspace: WorkspaceBox,
    pub avoidance: bool,
    /// Stop after this much simulated time.
    pub duration: Option<f64>,
    pub record: Option<RecordOptions>,
}

/// Final state of a finished session.
#[derive(Debug, Clone)]
pub struct SessionSummary {
    pub steps: u64,
    pub q: Vec<f64>,
    pub log: Option<TeleopLog>,
}

enum ControlInput {
    Event(DeviceEvent),
    Transcript { text: String, hand: Option<Hand> },
}

struct Job {
    intent: Intent,
    transcript: String,
    hand: Option<Hand>,
    t_ms: u64,
}

struct Done {
    job: Job,
    registry: ObstacleRegistry,
    report: ResolutionReport,
}

struct Shared {
    dt: f64,
    steps: AtomicU64,
    stop: AtomicBool,
    /// Last published snapshot, sent to clients as they connect.
    latest: RwLock<Arc<Published>>,
    meshes: RwLock<Arc<Vec<MeshEntry>>>,
    world: WorldDescription,
    snapshots: broadcast::Sender<Arc<Published>>,
    reports: broadcast::Sender<Arc<str>>,
    inputs: SyncSender<ControlInput>,
    shutdown: watch::Sender<bool>,
}

/// Serialized snapshot with the hashes of the meshes it references.
struct Published {
    text: String,
    mesh_hashes: Vec<String>,
}

impl Shared {
    fn t(&self) -> f64 {
        self.steps.load(Ordering::Acquire) as f64 * self.dt
    }

    fn request_stop(&self) {
        self.stop.store(true, Ordering::Release);
        self.shutdown.send_replace(true);
    }
}

#[derive(Clone)]
pub struct ShutdownHandle(Arc<Shared>);

impl ShutdownHandle {
    pub fn shutdown(&self) {
        self.0.request_stop();
    }
}

/// Handle to a running session.
pub struct Server {
    addr: SocketAddr,
    shared: Arc<Shared>,
    control: JoinHandle<Result<SessionSummary, ServiceError>>,
    http: tokio::task::JoinHandle<std::io::Result<()>>,
}

impl Server {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// Asks the control loop and the acceptor to stop.
    pub fn shutdown(&self) {
        self.shared.request_stop();
    }

    pub fn shutdown_handle(&self) -> ShutdownHandle {
        ShutdownHandle(self.shared.clone())
    }

    /// Waits until the session ends by duration or by [`Server::shutdown`].
    pub async fn finished(self) -> Result<SessionSummary, ServiceError> {
        let control = self.control;
        let summary = tokio::task::spawn_blocking(move || control.join())
            .await
            .map_err(|_| ServiceError::Panicked)?
            .map_err(|_| ServiceError::Panicked)?;
        self.shared.request_stop();
        match self.http.await {
            Ok(Ok(())) => {}
            Ok(Err(e)) => log::warn!("http server ended with {e}"),
            Err(e) => log::warn!("http task failed: {e}"),
        }
        summary
    }
}

/// Starts the session on an already bound listener.
pub async fn start(listener: TcpListener, options: ServeOptions) -> Result<Server, ServiceError> {
    let addr = listener.local_addr().map_err(|source| ServiceError::Bind { addr: "listener".into(), source })?;
    let sim = options.setup.simulator(options.workspace, options.avoidance)?;
    let dt = sim.dt();
    let log = options.record.map(|r| {
        let workspace = *sim.session().workspace().expect("simulator calibrates its session");
        TeleopLog::new(options.setup.header(r.seed, workspace, r.description))
    });
    let max_steps = options.duration.map(|d| (d / dt).round() as u64);

    let (inputs_tx, inputs_rx) = mpsc::sync_channel(INPUT_QUEUE_DEPTH);
    let (snapshots, _) = broadcast::channel(SNAPSHOT_QUEUE_DEPTH);
    let (reports, _) = broadcast::channel(REPORT_QUEUE_DEPTH);
    let first = Published { text: ServerMessage::Snapshot(Box::new(StateSnapshot::capture(&sim, &[], None))).encode(), mesh_hashes: Vec::new() };
    let shared = Arc::new(Shared {
        dt,
        steps: AtomicU64::new(0),
        stop: AtomicBool::new(false),
        latest: RwLock::new(Arc::new(first)),
        meshes: RwLock::new(Arc::new(Vec::new())),
        world: WorldDescription {
            scene: options.setup.scene.clone(),
            robot: serde_json::from_str(&options.setup.model.to_json()).expect("robot model serializes"),
        },
        snapshots,
        reports,
        inputs: inputs_tx,
        shutdown: watch::channel(false).0,
    });

    let (scene, view, params, registry) = sim.perception_inputs();
    let (jobs_tx, jobs_rx) = mpsc::sync_channel(PERCEPTION_QUEUE_DEPTH);
    let (done_tx, done_rx) = mpsc::channel();
    let worker = std::thread::Builder::new()
        .name("perception".into())
        .spawn(move || perception_worker(scene, view, params, registry, jobs_rx, done_tx))
        .map_err(ServiceError::Thread)?;

    let control = ControlLoop {
        sim,
        shared: shared.clone(),
        inputs: inputs_rx,
        jobs: jobs_tx,
        done: done_rx,
        meshes: Vec::new(),
        last_intent: None,
        log,
        max_steps,
    };
    let control = std::thread::Builder::new()
        .name("control".into())
        .spawn(move || {
            let shared = control.shared.clone();
            let result = control.run();
            shared.request_stop();
            if worker.join().is_err() {
                log::error!("perception worker panicked");
            }
            result
        })
        .map_err(ServiceError::Thread)?;

    let app = router(shared.clone());
    let mut stop = shared.shutdown.subscribe();
    let http = tokio::spawn(async move {
        axum::serve(listener, app)
            .with_graceful_shutdown(async move { stopped(&mut stop).await })
            .await
    });
    log::info!("serving on {addr}, dt {dt} s, avoidance {}", options.avoidance);
    Ok(Server { addr, shared, control, http })
}

fn perception_worker(
    scene: Scene,
    view: DepthView,
    params: PipelineParams,
    mut registry: ObstacleRegistry,
    jobs: Receiver<Job>,
    done: mpsc::Sender<Done>,
) {
    let ctx = PerceptionContext { scene: &scene, view: &view, params: &params };
    for job in jobs {
        let started = Instant::now();
        let report = apply_intent(&mut registry, &job.intent, &ctx, job.t_ms);
        log::info!("resolved {:?} in {:.0} ms", job.transcript, started.elapsed().as_secs_f64() * 1e3);
        if done.send(Done { job, registry: registry.clone(), report }).is_err() {
            break;
        }
    }
}

struct ControlLoop {
    sim: Simulator,
    shared: Arc<Shared>,
    inputs: Receiver<ControlInput>,
    jobs: SyncSender<Job>,
    done: Receiver<Done>,
    meshes: Vec<MeshSummary>,
    last_intent: Option<IntentReport>,
    log: Option<TeleopLog>,
    max_steps: Option<u64>,
}

impl ControlLoop {
    fn run(mut self) -> Result<SessionSummary, ServiceError> {
        let stride = snapshot_stride(self.sim.dt());
        let period = Duration::from_secs_f64(self.sim.dt());
        let start = Instant::now();
        while !self.shared.stop.load(Ordering::Acquire) && self.max_steps.is_none_or(|m| self.sim.steps() < m) {
            while let Ok(done) = self.done.try_recv() {
                self.install(done)?;
            }
            loop {
                match self.inputs.try_recv() {
                    Ok(ControlInput::Event(e)) => self.handle_event(e),
                    Ok(ControlInput::Transcript { text, hand }) => self.submit(text, hand),
                    Err(TryRecvError::Empty | TryRecvError::Disconnected) => break,
                }
            }
            self.sim.step()?;
            let steps = self.sim.steps();
            self.shared.steps.store(steps, Ordering::Release);
            if steps.is_multiple_of(stride) {
                self.publish();
            }
            // Fixed-rate schedule; a late step is not made up by sleeping less later.
            let due = start + period * steps as u32;
            if let Some(wait) = due.checked_duration_since(Instant::now()) {
                std::thread::sleep(wait);
            }
        }
        self.publish();
        Ok(SessionSummary { steps: self.sim.steps(), q: self.sim.q().as_slice().to_vec(), log: self.log })
    }

    fn publish(&self) {
        let snapshot = StateSnapshot::capture(&self.sim, &self.meshes, self.last_intent.as_ref());
        let message = Arc::new(Published {
            text: ServerMessage::Snapshot(Box::new(snapshot)).encode(),
            mesh_hashes: self.meshes.iter().map(|m| m.hash.clone()).collect(),
        });
        *self.shared.latest.write().expect("snapshot lock") = message.clone();
        // No receivers is fine; lagging receivers lose the oldest snapshots.
        let _ = self.shared.snapshots.send(message);
    }

    fn report(&mut self, report: IntentReport) {
        let _ = self.shared.reports.send(ServerMessage::IntentReport(report.clone()).encode().into());
        self.last_intent = Some(report);
    }

    /// Events take the simulation clock so a recorded session replays
    /// exactly.
    fn handle_event(&mut self, mut event: DeviceEvent) {
        event.t = self.sim.t();
        match self.sim.handle_event(&event) {
            Ok(effect) => {
                if let Some(log) = &mut self.log {
                    log.events.push(event);
                }
                if let Some(text) = effect.transcript {
                    self.submit(text, Some(effect.hand));
                }
            }
            Err(e) => log::warn!("dropped device event: {e}"),
        }
    }

    fn submit(&mut self, transcript: String, hand: Option<Hand>) {
        let t = self.sim.t();
        let rejected = |error: String| IntentReport { t, transcript: transcript.clone(), hand, intent: None, report: None, error: Some(error) };
        let intent = match self.sim.parse(&transcript) {
            Ok(intent) => intent,
            Err(e) => return self.report(rejected(e.to_string())),
        };
        let job = Job { intent, transcript: transcript.clone(), hand, t_ms: (t * 1000.0).round() as u64 };
        match self.jobs.try_send(job) {
            Ok(()) => {}
            Err(TrySendError::Full(_)) => self.report(rejected("perception worker is busy".into())),
            Err(TrySendError::Disconnected(_)) => self.report(rejected("perception worker stopped".into())),
        }
    }

    /// Intents are logged when their meshes take effect, which is when
    /// replay applies them.
    fn install(&mut self, done: Done) -> Result<(), ServiceError> {
        let Done { job, registry, report } = done;
        let entries: Vec<MeshEntry> = registry
            .active()
            .iter()
            .map(|(id, m)| MeshEntry { id: id.clone(), hash: file_hash(m.mesh.to_json().as_bytes()), mesh: m.clone() })
            .collect();
        self.meshes = entries.iter().map(MeshSummary::from).collect();
        *self.shared.meshes.write().expect("mesh lock") = Arc::new(entries);
        self.sim.replace_registry(registry, report.clone())?;
        let t = self.sim.t();
        if let Some(log) = &mut self.log {
            log.intents.push((t, job.intent.clone()));
        }
        self.report(IntentReport {
            t,
            transcript: job.transcript,
            hand: job.hand,
            intent: Some(job.intent),
            report: Some(report),
            error: None,
        });
        Ok(())
    }
}

fn router(shared: Arc<Shared>) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/scene", get(scene))
        .route("/meshes", get(meshes))
        .route("/ws", get(ws))
        .with_state(shared)
}

async fn health(State(shared): State<Arc<Shared>>) -> Json<Value> {
    Json(json!({"status": "ok", "t": shared.t()}))
}

async fn scene(State(shared): State<Arc<Shared>>) -> Json<Value> {
    let mut doc = serde_json::to_value(&shared.world).expect("world serializes");
    doc["v"] = crate::protocol::PROTOCOL_VERSION.into();
    Json(doc)
}

async fn meshes(State(shared): State<Arc<Shared>>) -> Json<Value> {
    let meshes = shared.meshes.read().expect("mesh lock").clone();
    Json(json!({"v": crate::protocol::PROTOCOL_VERSION, "t": shared.t(), "meshes": *meshes}))
}

async fn ws(upgrade: WebSocketUpgrade, State(shared): State<Arc<Shared>>) -> Response {
    upgrade.on_upgrade(move |socket| client(socket, shared))
}

async fn stopped(stop: &mut watch::Receiver<bool>) {
    let _ = stop.wait_for(|s| *s).await;
}

fn text(message: &str) -> Message {
    Message::Text(message.into())
}

async fn client(mut socket: WebSocket, shared: Arc<Shared>) {
    let mut snapshots = shared.snapshots.subscribe();
    let mut reports = shared.reports.subscribe();
    let mut stop = shared.shutdown.subscribe();
    let mut known = HashSet::new();
    let first = shared.latest.read().expect("snapshot lock").clone();
    if socket.send(text(&decorate(&shared, &first, &mut known, true))).await.is_err() {
        return;
    }
    loop {
        let outgoing = tokio::select! {
            s = snapshots.recv() => match s {
                Ok(p) => Some(Arc::from(decorate(&shared, &p, &mut known, false))),
                Err(broadcast::error::RecvError::Lagged(n)) => {
                    log::debug!("client lagged, dropped {n} snapshots");
                    None
                }
                Err(broadcast::error::RecvError::Closed) => break,
            },
            r = reports.recv() => match r {
                Ok(m) => Some(m),
                Err(broadcast::error::RecvError::Lagged(n)) => {
                    log::warn!("client lagged, dropped {n} intent reports");
                    None
                }
                Err(broadcast::error::RecvError::Closed) => break,
            },
            incoming = socket.recv() => match incoming {
                Some(Ok(Message::Text(t))) => receive(&shared, t.as_str()).map(|e| Arc::from(e.as_str())),
                Some(Ok(Message::Binary(_))) => Some(Arc::from(error("binary frames are not supported").as_str())),
                Some(Ok(Message::Close(_))) | Some(Err(_)) | None => break,
                Some(Ok(_)) => None,
            },
            _ = stopped(&mut stop) => {
                let _ = socket.send(Message::Close(None)).await;
                break;
            }
        };
        if let Some(m) = outgoing {
            if socket.send(text(&m)).await.is_err() {
                break;
            }
        }
    }
}

/// Adds what this connection has not seen yet: the world description on
/// the first snapshot, and geometry for mesh hashes not sent before.
fn decorate(shared: &Shared, published: &Published, known: &mut HashSet<String>, with_world: bool) -> String {
    let missing: Vec<&String> = published.mesh_hashes.iter().filter(|h| !known.contains(*h)).collect();
    if missing.is_empty() && !with_world {
        return published.text.clone();
    }
    let mut value: Value = serde_json::from_str(&published.text).expect("published snapshots are JSON");
    if with_world {
        value["world"] = serde_json::to_value(&shared.world).expect("world serializes");
    }
    // A mesh removed since this snapshot was taken is no longer listed and
    // needs no geometry.
    let meshes = shared.meshes.read().expect("mesh lock").clone();
    let fresh: Vec<&MeshEntry> = meshes.iter().filter(|m| missing.contains(&&m.hash)).collect();
    if !fresh.is_empty() {
        value["mesh_geometry"] = serde_json::to_value(&fresh).expect("meshes serialize");
        known.extend(fresh.iter().map(|m| m.hash.clone()));
    }
    value.to_string()
}

fn error(message: impl Into<String>) -> String {
    ServerMessage::Error { message: message.into() }.encode()
}

/// Forwards one client message to the control loop; returns an error reply
/// when the message is refused.
fn receive(shared: &Shared, raw: &str) -> Option<String> {
    let input = match ClientMessage::decode(raw) {
        Ok(ClientMessage::Event { event }) => ControlInput::Event(event),
        Ok(ClientMessage::Transcript { text, hand }) => ControlInput::Transcript { text, hand },
        Err(e) => return Some(error(e.to_string())),
    };
    match shared.inputs.try_send(input) {
        Ok(()) => None,
        Err(TrySendError::Full(_)) => Some(error("input queue is full")),
        Err(TrySendError::Disconnected(_)) => Some(error("session has ended")),
    }
}
