//! The job coordinator: an RPC server in front of a [`JobCore`], plus a
//! dispatcher that delivers Launch and Checkpoint directives to executor
//! agents and a watchdog that enforces round deadlines.

pub mod events;
pub mod state;

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{self, Receiver, Sender};
use std::sync::{Arc, Mutex, MutexGuard};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

pub use events::{EventLog, RoundRecord, EVENT_LOG_NAME};
pub use state::{
    is_legal_trace, CoordError, Effect, ExecutorRecord, ExecutorState, FailureReason, JobCore, JobPhase, JobSpec,
    KeyBundle, Transition,
};

use crate::transport::{call_once, RpcServer};
use crate::wireproto::{Call, Fields, RpcError};

const DIRECTIVE_TIMEOUT: Duration = Duration::from_secs(10);
const DIRECTIVE_ATTEMPTS: u32 = 3;

/// Point-in-time summary of the job.
#[derive(Debug, Clone, PartialEq)]
pub struct JobStatus {
    pub phase: JobPhase,
    pub world: u32,
    pub epoch: u32,
    pub registered: usize,
    pub launches: u32,
    pub failure: Option<String>,
}

pub struct Coordinator {
    core: Arc<Mutex<JobCore>>,
    server: RpcServer,
    stop: Arc<AtomicBool>,
    threads: Vec<JoinHandle<()>>,
}

fn lock(core: &Mutex<JobCore>) -> MutexGuard<'_, JobCore> {
    core.lock().unwrap_or_else(|p| p.into_inner())
}

fn handle(core: &Mutex<JobCore>, tx: &Sender<Effect>, call: Call) -> Result<Fields, RpcError> {
    let now = Instant::now();
    let mut c = lock(core);
    let (reply, effects) = match call {
        Call::Scale(cmd) => c.scale(cmd, now)?,
        Call::RetrieveKeys { node_name, address } => c.retrieve_keys(&node_name, &address, now)?,
        Call::JobInit { node_name, address } => c.job_init(&node_name, address.as_deref(), now)?,
        Call::ActiveServer { node_name } => (c.active_server(node_name.as_deref(), now), vec![]),
        Call::Checkpointing { node_name, ok } => c.checkpoint_done(&node_name, ok.unwrap_or(true), now)?,
        Call::EndExec { node_name, status } => c.end_exec(&node_name, status.unwrap_or(0), now)?,
        Call::Launch(_) | Call::Checkpoint { .. } => {
            return Err(RpcError::new("UnsupportedMethod", "directives are sent by the coordinator, not to it"))
        }
    };
    drop(c);
    for e in effects {
        let _ = tx.send(e);
    }
    Ok(reply)
}

/// Sends one directive, retrying connection failures a few times.
fn deliver(node: &str, addr: Option<&str>, call: Call) -> Result<(), String> {
    let addr = addr.ok_or_else(|| format!("{node} registered without an address"))?;
    let mut last = String::new();
    for attempt in 0..DIRECTIVE_ATTEMPTS {
        match call_once(addr, call.clone(), DIRECTIVE_TIMEOUT) {
            Ok(_) => return Ok(()),
            Err(e) if e.is_unreachable() && attempt + 1 < DIRECTIVE_ATTEMPTS => {
                last = e.to_string();
                thread::sleep(Duration::from_millis(200));
            }
            Err(e) => return Err(format!("{node} at {addr}: {e}")),
        }
    }
    Err(format!("{node} at {addr}: {last}"))
}

/// Delivers every `(node, addr, call)` in parallel; returns the first failure.
fn deliver_all(targets: Vec<(String, Option<String>, Call)>) -> Result<(), String> {
    let handles: Vec<_> = targets
        .into_iter()
        .map(|(node, addr, call)| thread::spawn(move || deliver(&node, addr.as_deref(), call)))
        .collect();
    let mut first = Ok(());
    for h in handles {
        let r = h.join().unwrap_or_else(|_| Err("dispatch thread panicked".into()));
        if first.is_ok() {
            first = r;
        }
    }
    first
}

fn dispatcher(core: Arc<Mutex<JobCore>>, rx: Receiver<Effect>) {
    for effect in rx {
        match effect {
            Effect::Launch { epoch, targets } => {
                let targets = targets.into_iter().map(|(n, a, d)| (n, a, Call::Launch(d))).collect();
                let result = deliver_all(targets);
                if let Err(e) = &result {
                    log::error!("launch dispatch failed: {e}");
                }
                lock(&core).launch_result(epoch, result, Instant::now());
            }
            Effect::Checkpoint { targets, signal, grace_ms, token } => {
                let targets = targets
                    .into_iter()
                    .map(|(n, a)| (n, a, Call::Checkpoint { signal: signal.clone(), grace_ms, token: token.clone() }))
                    .collect();
                if let Err(e) = deliver_all(targets) {
                    log::error!("checkpoint dispatch failed: {e}");
                    lock(&core).dispatch_failed(e);
                }
            }
        }
    }
}

impl Coordinator {
    /// Validates `spec`, binds `listen` and starts serving. The event log is
    /// written to `working_dir/job-events.log`.
    pub fn start(spec: JobSpec, listen: &str) -> Result<Coordinator, CoordError> {
        spec.validate()?;
        let log = EventLog::create(&spec.working_dir).map_err(|e| CoordError::InvalidSpec(format!("event log: {e}")))?;
        let tick = Duration::from_secs_f64((spec.heartbeat_timestep / 10.0).clamp(0.005, 0.05));
        let core = Arc::new(Mutex::new(JobCore::new(spec, KeyBundle::generate(), log)));
        let (tx, rx) = mpsc::channel();
        let server = {
            let core = core.clone();
            let tx = Mutex::new(tx);
            let handler = move |call: Call| {
                let tx = tx.lock().unwrap().clone();
                handle(&core, &tx, call)
            };
            RpcServer::bind(listen, Arc::new(handler))
                .map_err(|e| CoordError::BindFailure { addr: listen.into(), reason: e.to_string() })?
        };
        let stop = Arc::new(AtomicBool::new(false));
        let mut threads = Vec::new();
        {
            let core = core.clone();
            threads.push(thread::Builder::new().name("coord-dispatch".into()).spawn(move || dispatcher(core, rx)).unwrap());
        }
        {
            let core = core.clone();
            let stop = stop.clone();
            threads.push(
                thread::Builder::new()
                    .name("coord-watchdog".into())
                    .spawn(move || {
                        while !stop.load(Ordering::Acquire) {
                            lock(&core).tick(Instant::now());
                            thread::sleep(tick);
                        }
                    })
                    .unwrap(),
            );
        }
        log::info!("coordinator listening on {}", server.local_addr());
        Ok(Coordinator { core, server, stop, threads })
    }

    pub fn addr(&self) -> String {
        self.server.local_addr().to_string()
    }

    pub fn phase(&self) -> JobPhase {
        lock(&self.core).phase()
    }

    pub fn status(&self) -> JobStatus {
        let c = lock(&self.core);
        JobStatus {
            phase: c.phase(),
            world: c.world(),
            epoch: c.epoch(),
            registered: c.registry().len(),
            launches: c.launch_count(),
            failure: c.failure().map(|f| f.to_string()),
        }
    }

    /// Runs `f` with the job state locked.
    pub fn with_core<T>(&self, f: impl FnOnce(&JobCore) -> T) -> T {
        f(&lock(&self.core))
    }

    /// Polls until the job is Complete or Failed, or `timeout` passes.
    pub fn wait_terminal(&self, timeout: Duration) -> Option<JobPhase> {
        self.wait_for(timeout, JobPhase::is_terminal)
    }

    pub fn wait_for(&self, timeout: Duration, pred: impl Fn(JobPhase) -> bool) -> Option<JobPhase> {
        let deadline = Instant::now() + timeout;
        loop {
            let p = self.phase();
            if pred(p) {
                return Some(p);
            }
            if Instant::now() >= deadline {
                return None;
            }
            thread::sleep(Duration::from_millis(5));
        }
    }

    pub fn shutdown(mut self) {
        self.shutdown_inner();
    }

    fn shutdown_inner(&mut self) {
        self.stop.store(true, Ordering::Release);
        self.server.shutdown();
        // The dispatcher exits once the server's handler (the last sender) is gone.
        for t in self.threads.drain(..) {
            if t.thread().name() == Some("coord-watchdog") {
                let _ = t.join();
            }
        }
    }
}

impl Drop for Coordinator {
    fn drop(&mut self) {
        self.shutdown_inner();
    }
}
