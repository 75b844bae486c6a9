#![allow(dead_code)]

pub mod gen;

use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex, Once};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use elastic_core::coordinator::{is_legal_trace, Coordinator, JobPhase, JobSpec};
use elastic_core::executor::{run_agent, AgentConfig, AgentError, AgentOutcome};
use elastic_core::transport::{call_once, RpcServer};
use elastic_core::wireproto::{Call, Fields, RpcError};
use elastic_core::workloads::AdapterSpec;

static INIT: Once = Once::new();

/// Points the binary locator at cargo's build of this crate's executables.
pub fn init() {
    INIT.call_once(|| {
        let dir = Path::new(env!("CARGO_BIN_EXE_agent")).parent().unwrap().to_path_buf();
        std::env::set_var(elastic_core::bins::BIN_DIR_ENV, dir);
        let _ = env_logger::builder().is_test(true).try_init();
    });
}

pub fn bin(name: &str) -> String {
    elastic_core::bins::bin_path(name).display().to_string()
}

pub fn strings(xs: &[&str]) -> Vec<String> {
    xs.iter().map(|s| s.to_string()).collect()
}

pub fn free_port() -> String {
    let l = TcpListener::bind("127.0.0.1:0").unwrap();
    l.local_addr().unwrap().to_string()
}

pub fn spec(dir: &Path, ranks: u32, cmd: Vec<String>, adapter: AdapterSpec, timestep: f64) -> JobSpec {
    let mut s = JobSpec::new("job", ranks, cmd, dir, adapter);
    s.heartbeat_timestep = timestep;
    s
}

pub type AgentHandle = JoinHandle<Result<AgentOutcome, AgentError>>;

/// Runs an executor agent on a thread.
pub fn spawn_agent(name: &str, coordinator: &str, timestep: f64, stop: &Arc<AtomicBool>) -> AgentHandle {
    let cfg = AgentConfig::new(name, coordinator, Duration::from_secs_f64(timestep));
    let stop = stop.clone();
    thread::spawn(move || run_agent(&cfg, &stop))
}

/// Coordinator and agents in this process.
pub struct LocalJob {
    pub coord: Coordinator,
    pub agents: Vec<(String, AgentHandle)>,
    pub stop: Arc<AtomicBool>,
    pub timestep: f64,
}

impl LocalJob {
    pub fn start(spec: JobSpec) -> LocalJob {
        init();
        let timestep = spec.heartbeat_timestep;
        let ranks = spec.initial_ranks;
        let coord = Coordinator::start(spec, "127.0.0.1:0").unwrap();
        let stop = Arc::new(AtomicBool::new(false));
        let mut job = LocalJob { coord, agents: Vec::new(), stop, timestep };
        for k in 0..ranks {
            job.add_agent(&format!("job-worker-{k}"));
        }
        job
    }

    pub fn add_agent(&mut self, name: &str) {
        let h = spawn_agent(name, &self.coord.addr(), self.timestep, &self.stop);
        self.agents.push((name.to_string(), h));
    }

    pub fn addr(&self) -> String {
        self.coord.addr()
    }

    pub fn scale(&self, to: u32) -> Result<Fields, elastic_core::transport::CallError> {
        call_once(&self.addr(), Call::Scale(elastic_core::wireproto::ScaleCommand::absolute(to)), Duration::from_secs(5))
    }

    pub fn wait_terminal(&self, timeout: Duration) -> JobPhase {
        self.coord.wait_terminal(timeout).unwrap_or_else(|| panic!("job still {} after {timeout:?}", self.coord.phase()))
    }

    /// Joins every agent and returns their outcomes.
    pub fn finish(self) -> (Vec<JobPhase>, Vec<(String, Result<AgentOutcome, AgentError>)>) {
        let deadline = Instant::now() + Duration::from_secs_f64(self.timestep * 4.0 + 10.0);
        while Instant::now() < deadline && self.agents.iter().any(|(_, h)| !h.is_finished()) {
            thread::sleep(Duration::from_millis(10));
        }
        self.stop.store(true, Ordering::Release);
        let outcomes = self.agents.into_iter().map(|(n, h)| (n, h.join().unwrap())).collect();
        let trace = self.coord.with_core(|c| c.phase_trace());
        assert!(is_legal_trace(&trace), "illegal phase trace {trace:?}");
        self.coord.shutdown();
        (trace, outcomes)
    }
}

/// A stand-in agent: answers directives, records them, never runs anything.
pub struct FakeAgent {
    pub name: String,
    pub server: RpcServer,
    pub received: Arc<Mutex<Vec<Call>>>,
}

impl FakeAgent {
    pub fn start(name: &str) -> FakeAgent {
        let received: Arc<Mutex<Vec<Call>>> = Arc::default();
        let rec = received.clone();
        let handler = move |call: Call| -> Result<Fields, RpcError> {
            rec.lock().unwrap().push(call);
            let mut f = Fields::new();
            f.insert("accepted".into(), true.into());
            Ok(f)
        };
        let server = RpcServer::bind("127.0.0.1:0", Arc::new(handler)).unwrap();
        FakeAgent { name: name.into(), server, received }
    }

    pub fn addr(&self) -> String {
        self.server.local_addr().to_string()
    }

    pub fn call(&self, coord: &str, call: Call) -> Result<Fields, elastic_core::transport::CallError> {
        call_once(coord, call, Duration::from_secs(5))
    }

    pub fn job_init(&self, coord: &str) -> Fields {
        self.call(coord, Call::JobInit { node_name: self.name.clone(), address: Some(self.addr()) }).unwrap()
    }

    pub fn retrieve_keys(&self, coord: &str) -> Result<Fields, elastic_core::transport::CallError> {
        self.call(coord, Call::RetrieveKeys { node_name: self.name.clone(), address: self.addr() })
    }

    pub fn confirm(&self, coord: &str) -> Fields {
        self.call(coord, Call::Checkpointing { node_name: self.name.clone(), ok: Some(true) }).unwrap()
    }

    pub fn end_exec(&self, coord: &str) -> Fields {
        self.call(coord, Call::EndExec { node_name: self.name.clone(), status: None }).unwrap()
    }

    pub fn count(&self, f: impl Fn(&Call) -> bool) -> usize {
        self.received.lock().unwrap().iter().filter(|c| f(c)).count()
    }

    /// Waits until at least `n` recorded directives satisfy `f`.
    pub fn wait_for(&self, n: usize, f: impl Fn(&Call) -> bool) {
        let deadline = Instant::now() + Duration::from_secs(10);
        while self.count(&f) < n {
            assert!(Instant::now() < deadline, "{} never received the expected directive", self.name);
            thread::sleep(Duration::from_millis(2));
        }
    }
}

pub fn is_launch(c: &Call) -> bool {
    matches!(c, Call::Launch(_))
}

pub fn is_checkpoint(c: &Call) -> bool {
    matches!(c, Call::Checkpoint { .. })
}

pub fn wait_phase(coord: &Coordinator, phase: JobPhase, timeout: Duration) {
    assert_eq!(coord.wait_for(timeout, |p| p == phase || p.is_terminal()), Some(phase), "{:?}", coord.status());
}

pub fn parint_cmd(array_size: u64, nloop: u32, outer_iters: u32, iter_sleep_ms: u64) -> Vec<String> {
    vec![
        bin("parint"),
        "--array-size".into(),
        array_size.to_string(),
        "--nloop".into(),
        nloop.to_string(),
        "--outer-iters".into(),
        outer_iters.to_string(),
        "--checkpoint".into(),
        "parint.ckpt".into(),
        "--output".into(),
        "parint-final.bin".into(),
        "--iter-sleep-ms".into(),
        iter_sleep_ms.to_string(),
    ]
}

pub fn tempdir() -> tempfile::TempDir {
    tempfile::tempdir().unwrap()
}

pub fn path(dir: &tempfile::TempDir, name: &str) -> PathBuf {
    dir.path().join(name)
}
