//! The executor agent. One per node: it registers with the coordinator,
//! starts and signals the local workload rank on command, and reports
//! liveness and completion through a heartbeat loop.

use std::fs::{self, OpenOptions};
use std::io;
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Stdio};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex, MutexGuard};
use std::thread;
use std::time::{Duration, Instant};

use crate::coordinator::JobPhase;
use crate::fields;
use crate::signals::{send_signal, signal_number};
use crate::transport::{call_once, CallError, RpcServer};
use crate::wireproto::{Call, Fields, FieldsExt, LaunchDirective, NodeName, NodeRole, RpcError};
use crate::workloads::{ENV_JOB_DIR, ENV_RANK, ENV_WORLD_SIZE};

pub const DEFAULT_MAX_MISSES: u32 = 6;
const BACKOFF_START: Duration = Duration::from_millis(500);
const BACKOFF_CAP: Duration = Duration::from_secs(8);
const RPC_TIMEOUT: Duration = Duration::from_secs(5);

#[derive(Debug, Clone)]
pub struct AgentConfig {
    pub node_name: String,
    pub coordinator: String,
    /// Address the agent listens on for directives.
    pub listen: String,
    pub timestep: Duration,
    /// Consecutive unanswered heartbeats before the agent gives up.
    pub max_misses: u32,
}

impl AgentConfig {
    pub fn new(node_name: &str, coordinator: &str, timestep: Duration) -> AgentConfig {
        AgentConfig {
            node_name: node_name.into(),
            coordinator: coordinator.into(),
            listen: "127.0.0.1:0".into(),
            timestep,
            max_misses: DEFAULT_MAX_MISSES,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AgentOutcome {
    Complete,
    Failed,
    CoordinatorLost,
    Stopped,
}

impl AgentOutcome {
    pub fn exit_code(self) -> i32 {
        match self {
            AgentOutcome::Complete | AgentOutcome::Stopped => 0,
            AgentOutcome::Failed => 1,
            AgentOutcome::CoordinatorLost => 2,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum AgentError {
    #[error("invalid node name {0:?}")]
    InvalidNodeName(String),
    #[error("cannot listen on {addr}: {source}")]
    Bind { addr: String, source: io::Error },
    #[error("coordinator rejected {node}: {reason}")]
    Rejected { node: String, reason: String },
    #[error("coordinator at {0} unreachable")]
    Unreachable(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Everything the directive listener and the heartbeat loop share.
#[derive(Default)]
struct Supervisor {
    token: Option<String>,
    job_dir: Option<PathBuf>,
    child: Option<Child>,
    epoch: u32,
    exit_status: Option<i64>,
    checkpointing: bool,
    reported: bool,
}

impl Supervisor {
    /// Reaps the child if it exited; true while it is still running.
    fn child_alive(&mut self) -> bool {
        let Some(child) = self.child.as_mut() else { return false };
        match child.try_wait() {
            Ok(None) => true,
            Ok(Some(st)) => {
                self.exit_status = Some(exit_code(st));
                self.child = None;
                false
            }
            Err(_) => false,
        }
    }

    fn kill_child(&mut self) {
        if let Some(mut c) = self.child.take() {
            let _ = c.kill();
            if let Ok(st) = c.wait() {
                self.exit_status = Some(exit_code(st));
            }
        }
    }
}

fn exit_code(st: std::process::ExitStatus) -> i64 {
    use std::os::unix::process::ExitStatusExt;
    match (st.code(), st.signal()) {
        (Some(c), _) => c as i64,
        (None, Some(s)) => 128 + s as i64,
        _ => -1,
    }
}

fn lock(s: &Mutex<Supervisor>) -> MutexGuard<'_, Supervisor> {
    s.lock().unwrap_or_else(|p| p.into_inner())
}

/// Fills the `{rank}`, `{world}` and `{job_dir}` placeholders.
pub fn render_command(template: &[String], rank: u32, world: u32, job_dir: &str) -> Vec<String> {
    template
        .iter()
        .map(|a| a.replace("{rank}", &rank.to_string()).replace("{world}", &world.to_string()).replace("{job_dir}", job_dir))
        .collect()
}

fn spawn_rank(node: &str, d: &LaunchDirective) -> io::Result<Child> {
    let argv = render_command(&d.command, d.rank, d.world_size, &d.rendezvous_dir);
    let dir = Path::new(&d.rendezvous_dir);
    let out = OpenOptions::new().create(true).append(true).open(dir.join(format!("{node}.out")))?;
    let err = out.try_clone()?;
    Command::new(&argv[0])
        .args(&argv[1..])
        .current_dir(dir)
        .env(ENV_RANK, d.rank.to_string())
        .env(ENV_WORLD_SIZE, d.world_size.to_string())
        .env(ENV_JOB_DIR, &d.rendezvous_dir)
        .stdin(Stdio::null())
        .stdout(out)
        .stderr(err)
        .spawn()
}

/// A directive can race the reply to our own registration call; give the
/// registering thread a moment to store the token.
fn lock_registered(s: &Mutex<Supervisor>) -> MutexGuard<'_, Supervisor> {
    let deadline = Instant::now() + REGISTRATION_WAIT;
    loop {
        let guard = lock(s);
        if guard.token.is_some() || Instant::now() >= deadline {
            return guard;
        }
        drop(guard);
        thread::sleep(Duration::from_millis(2));
    }
}

const REGISTRATION_WAIT: Duration = Duration::from_secs(5);

fn on_launch(node: &str, sup: &Mutex<Supervisor>, d: LaunchDirective) -> Result<Fields, RpcError> {
    let mut s = lock_registered(sup);
    if s.token.as_deref() != Some(d.token.as_str()) {
        return Err(RpcError::new("BadToken", "launch token does not match the job key"));
    }
    if s.child_alive() {
        return Err(RpcError::new("ChildAlive", format!("{node} already runs a workload")));
    }
    if d.command.is_empty() {
        return Err(RpcError::new("EmptyCommand", "launch without a command"));
    }
    let child = spawn_rank(node, &d).map_err(|e| RpcError::new("SpawnFailed", e.to_string()))?;
    log::info!("{node}: launched rank {}/{} epoch {} pid {}", d.rank, d.world_size, d.epoch, child.id());
    s.child = Some(child);
    s.epoch = d.epoch;
    s.exit_status = None;
    s.checkpointing = false;
    s.reported = false;
    s.job_dir = Some(PathBuf::from(&d.rendezvous_dir));
    Ok(fields! { "accepted" => true, "epoch" => d.epoch as i64 })
}

fn on_checkpoint(
    cfg: &AgentConfig,
    sup: &Arc<Mutex<Supervisor>>,
    signal: String,
    grace_ms: u64,
    token: String,
) -> Result<Fields, RpcError> {
    let signo = signal_number(&signal).ok_or_else(|| RpcError::new("UnknownSignal", signal.clone()))?;
    let pid = {
        let mut s = lock_registered(sup);
        if s.token.as_deref() != Some(token.as_str()) {
            return Err(RpcError::new("BadToken", "checkpoint token does not match the job key"));
        }
        s.checkpointing = true;
        if s.child_alive() {
            s.child.as_ref().map(|c| c.id())
        } else {
            None
        }
    };
    if let Some(pid) = pid {
        send_signal(pid, signo).map_err(|e| RpcError::new("SignalFailed", e.to_string()))?;
    }
    let sup = sup.clone();
    let node = cfg.node_name.clone();
    let coord = cfg.coordinator.clone();
    let retry = cfg.timestep.min(Duration::from_secs(1));
    thread::spawn(move || {
        let deadline = Instant::now() + Duration::from_millis(grace_ms);
        let mut ok = true;
        loop {
            let mut s = lock(&sup);
            if !s.child_alive() {
                break;
            }
            if Instant::now() >= deadline {
                log::warn!("{node}: workload ignored the checkpoint signal, killing it");
                s.kill_child();
                ok = false;
                break;
            }
            drop(s);
            thread::sleep(Duration::from_millis(5));
        }
        for _ in 0..DEFAULT_MAX_MISSES {
            match call_once(&coord, Call::Checkpointing { node_name: node.clone(), ok: Some(ok) }, RPC_TIMEOUT) {
                Ok(_) => return,
                Err(e) if e.is_unreachable() => thread::sleep(retry),
                Err(e) => {
                    log::warn!("{node}: checkpoint confirmation refused: {e}");
                    return;
                }
            }
        }
    });
    Ok(fields! { "accepted" => true })
}

/// Exponential backoff between retries of an unanswered call.
fn backoff(miss: u32) -> Duration {
    BACKOFF_START.saturating_mul(1 << miss.min(5)).min(BACKOFF_CAP)
}

fn sleep_or_stop(d: Duration, stop: &AtomicBool) -> bool {
    let end = Instant::now() + d;
    while Instant::now() < end {
        if stop.load(Ordering::Acquire) {
            return true;
        }
        thread::sleep((end - Instant::now()).min(Duration::from_millis(10)));
    }
    stop.load(Ordering::Acquire)
}

/// Calls the coordinator, retrying unreachable errors with backoff.
fn call_retrying(cfg: &AgentConfig, call: &Call, stop: &AtomicBool) -> Result<Option<Fields>, CallError> {
    let mut misses = 0;
    loop {
        match call_once(&cfg.coordinator, call.clone(), RPC_TIMEOUT) {
            Ok(f) => return Ok(Some(f)),
            Err(e) if e.is_unreachable() => {
                misses += 1;
                if misses >= cfg.max_misses {
                    return Err(e);
                }
                if sleep_or_stop(backoff(misses - 1), stop) {
                    return Ok(None);
                }
            }
            Err(e) => return Err(e),
        }
    }
}

fn persist_keys(dir: &Path, node: &str, reply: &Fields) -> io::Result<()> {
    let body = serde_json::json!({
        "public_token": reply.str_field("public_token"),
        "private_token": reply.str_field("private_token"),
        "rank": reply.int_field("rank"),
    });
    fs::write(dir.join(format!("{node}.keys")), body.to_string())
}

/// Runs an agent until the job ends, the coordinator is lost or `stop` is
/// raised.
pub fn run_agent(cfg: &AgentConfig, stop: &AtomicBool) -> Result<AgentOutcome, AgentError> {
    let name = NodeName::parse(&cfg.node_name).ok_or_else(|| AgentError::InvalidNodeName(cfg.node_name.clone()))?;
    let sup: Arc<Mutex<Supervisor>> = Arc::default();
    let server = {
        let sup = sup.clone();
        let cfg2 = cfg.clone();
        let handler = move |call: Call| match call {
            Call::Launch(d) => on_launch(&cfg2.node_name, &sup, d),
            Call::Checkpoint { signal, grace_ms, token } => on_checkpoint(&cfg2, &sup, signal, grace_ms, token),
            other => Err(RpcError::new("UnsupportedMethod", format!("agents do not serve {}", other.method().as_str()))),
        };
        RpcServer::bind(&cfg.listen, Arc::new(handler)).map_err(|source| AgentError::Bind { addr: cfg.listen.clone(), source })?
    };
    let address = server.local_addr().to_string();
    let unreachable = |_| AgentError::Unreachable(cfg.coordinator.clone());

    // Registration.
    match name.role {
        NodeRole::Worker => {
            let call = Call::JobInit { node_name: cfg.node_name.clone(), address: Some(address.clone()) };
            let Some(reply) = call_retrying(cfg, &call, stop).map_err(|e| match e {
                CallError::Remote(r) => AgentError::Rejected { node: cfg.node_name.clone(), reason: r.code },
                e => unreachable(e),
            })?
            else {
                return Ok(AgentOutcome::Stopped);
            };
            if reply.bool_field("accepted") != Some(true) {
                return Err(AgentError::Rejected { node: cfg.node_name.clone(), reason: "not accepted".into() });
            }
            lock(&sup).token = reply.str_field("public_token").map(str::to_string);
        }
        NodeRole::Scale => {
            let call = Call::RetrieveKeys { node_name: cfg.node_name.clone(), address: address.clone() };
            loop {
                match call_retrying(cfg, &call, stop) {
                    Ok(None) => return Ok(AgentOutcome::Stopped),
                    Ok(Some(reply)) => {
                        if let Some(dir) = reply.str_field("job_dir") {
                            if let Err(e) = persist_keys(Path::new(dir), &cfg.node_name, &reply) {
                                log::warn!("{}: cannot persist keys: {e}", cfg.node_name);
                            }
                        }
                        lock(&sup).token = reply.str_field("public_token").map(str::to_string);
                        break;
                    }
                    Err(CallError::Remote(r)) if r.code == "NotScaling" => {
                        if sleep_or_stop(cfg.timestep, stop) {
                            return Ok(AgentOutcome::Stopped);
                        }
                    }
                    Err(CallError::Remote(r)) => {
                        return Err(AgentError::Rejected { node: cfg.node_name.clone(), reason: r.code })
                    }
                    Err(e) => return Err(unreachable(e)),
                }
            }
        }
    }
    log::info!("{} registered, directives on {address}", cfg.node_name);

    // Heartbeat loop.
    let start = Instant::now();
    let mut tick: u32 = 0;
    let mut misses = 0;
    let outcome = loop {
        tick += 1;
        let next = start + cfg.timestep * tick;
        if sleep_or_stop(next.saturating_duration_since(Instant::now()), stop) {
            break AgentOutcome::Stopped;
        }
        let reply = match call_once(&cfg.coordinator, Call::ActiveServer { node_name: Some(cfg.node_name.clone()) }, RPC_TIMEOUT) {
            Ok(r) => {
                misses = 0;
                r
            }
            Err(e) => {
                misses += 1;
                log::warn!("{}: heartbeat {misses} unanswered: {e}", cfg.node_name);
                if misses >= cfg.max_misses {
                    break AgentOutcome::CoordinatorLost;
                }
                if sleep_or_stop(backoff(misses - 1), stop) {
                    break AgentOutcome::Stopped;
                }
                continue;
            }
        };
        let phase = reply.str_field("phase").and_then(JobPhase::parse);
        let epoch = reply.int_field("epoch").unwrap_or(0) as u32;
        match phase {
            Some(JobPhase::Complete) => break AgentOutcome::Complete,
            Some(JobPhase::Failed) => break AgentOutcome::Failed,
            Some(JobPhase::Running) => {
                let status = {
                    let mut s = lock(&sup);
                    let due = s.epoch == epoch && s.epoch > 0 && !s.reported && !s.checkpointing && !s.child_alive();
                    if due {
                        s.reported = true;
                        s.exit_status
                    } else {
                        None
                    }
                };
                if let Some(status) = status {
                    let call = Call::EndExec { node_name: cfg.node_name.clone(), status: (status != 0).then_some(status) };
                    if let Err(e) = call_once(&cfg.coordinator, call, RPC_TIMEOUT) {
                        log::warn!("{}: endExec failed: {e}", cfg.node_name);
                        lock(&sup).reported = false;
                    }
                }
            }
            _ => {}
        }
    };
    lock(&sup).kill_child();
    drop(server);
    log::info!("{} exiting: {outcome:?}", cfg.node_name);
    Ok(outcome)
}
