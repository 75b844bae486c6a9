//! The coordinator's job state: phase machine, executor registry, key bundle
//! and scaling rounds. Everything here is synchronous and free of network I/O;
//! the server in the parent module serializes calls through a mutex and
//! carries out the returned [`Effect`]s.

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::RngCore;
use serde::{Deserialize, Serialize};

use super::events::{EventLog, RoundRecord};
use crate::fields;
use crate::wireproto::{Fields, LaunchDirective, NodeName, NodeRole, RpcError, ScaleCommand, Value};
use crate::workloads::{transform_restart_command, AdapterSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum JobPhase {
    WaitingForExecutors,
    Running,
    Scaling,
    Checkpointing,
    Relaunching,
    Complete,
    Failed,
}

impl JobPhase {
    pub const ALL: [JobPhase; 7] = [
        JobPhase::WaitingForExecutors,
        JobPhase::Running,
        JobPhase::Scaling,
        JobPhase::Checkpointing,
        JobPhase::Relaunching,
        JobPhase::Complete,
        JobPhase::Failed,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            JobPhase::WaitingForExecutors => "WaitingForExecutors",
            JobPhase::Running => "Running",
            JobPhase::Scaling => "Scaling",
            JobPhase::Checkpointing => "Checkpointing",
            JobPhase::Relaunching => "Relaunching",
            JobPhase::Complete => "Complete",
            JobPhase::Failed => "Failed",
        }
    }

    pub fn parse(s: &str) -> Option<JobPhase> {
        JobPhase::ALL.into_iter().find(|p| p.as_str() == s)
    }

    pub fn is_terminal(self) -> bool {
        matches!(self, JobPhase::Complete | JobPhase::Failed)
    }

    /// A scaling round is in progress.
    pub fn is_scaling(self) -> bool {
        matches!(self, JobPhase::Scaling | JobPhase::Checkpointing | JobPhase::Relaunching)
    }

    /// The legal-transition relation of the job lifecycle.
    pub fn can_transition_to(self, next: JobPhase) -> bool {
        use JobPhase::*;
        match (self, next) {
            (from, Failed) => from != Failed,
            (WaitingForExecutors, Running) => true,
            (Running, Scaling | Complete) => true,
            (Scaling, Checkpointing) => true,
            (Checkpointing, Relaunching) => true,
            (Relaunching, Running) => true,
            _ => false,
        }
    }
}

impl fmt::Display for JobPhase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// True if `phases` starts at WaitingForExecutors and every consecutive pair
/// is a legal transition.
pub fn is_legal_trace(phases: &[JobPhase]) -> bool {
    phases.first().map_or(true, |p| *p == JobPhase::WaitingForExecutors)
        && phases.windows(2).all(|w| w[0].can_transition_to(w[1]))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExecutorState {
    Registered,
    Active,
    AwaitingRelaunch,
    Finished,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExecutorRecord {
    pub node_name: String,
    pub address: Option<String>,
    pub rank: u32,
    pub state: ExecutorState,
    pub last_heartbeat: Instant,
}

/// Stand-in for the job's shared key pair: two random 32-byte tokens.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeyBundle {
    pub public_token: String,
    pub private_token: String,
}

impl KeyBundle {
    pub fn generate() -> KeyBundle {
        let mut rng = rand::thread_rng();
        let mut token = || {
            let mut b = [0u8; 32];
            rng.fill_bytes(&mut b);
            hex::encode(b)
        };
        KeyBundle { public_token: token(), private_token: token() }
    }
}

fn default_timestep() -> f64 {
    10.0
}
fn default_grace() -> f64 {
    30.0
}
fn default_provision_timeout() -> f64 {
    120.0
}

/// Declarative description of a job.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobSpec {
    pub job_name: String,
    pub initial_ranks: u32,
    /// Command template. `{rank}`, `{world}` and `{job_dir}` are substituted
    /// by the executor agent.
    pub workload_command: Vec<String>,
    pub working_dir: PathBuf,
    pub adapter: AdapterSpec,
    /// Seconds between executor heartbeats.
    #[serde(default = "default_timestep")]
    pub heartbeat_timestep: f64,
    /// Seconds a workload gets to checkpoint; also the checkpoint barrier deadline.
    #[serde(default = "default_grace")]
    pub checkpoint_grace: f64,
    /// Seconds new executors get to register during a scaling round.
    #[serde(default = "default_provision_timeout")]
    pub provision_timeout: f64,
}

impl JobSpec {
    pub fn new(job_name: &str, initial_ranks: u32, workload_command: Vec<String>, working_dir: impl Into<PathBuf>, adapter: AdapterSpec) -> JobSpec {
        JobSpec {
            job_name: job_name.into(),
            initial_ranks,
            workload_command,
            working_dir: working_dir.into(),
            adapter,
            heartbeat_timestep: default_timestep(),
            checkpoint_grace: default_grace(),
            provision_timeout: default_provision_timeout(),
        }
    }

    pub fn validate(&self) -> Result<(), CoordError> {
        let bad = |m: String| Err(CoordError::InvalidSpec(m));
        if self.job_name.is_empty() || self.job_name.contains(char::is_whitespace) {
            return bad(format!("invalid job name {:?}", self.job_name));
        }
        if self.initial_ranks < 1 {
            return bad("initial_ranks must be >= 1".into());
        }
        if self.workload_command.is_empty() {
            return bad("workload_command is empty".into());
        }
        for (name, v) in [
            ("heartbeat_timestep", self.heartbeat_timestep),
            ("checkpoint_grace", self.checkpoint_grace),
            ("provision_timeout", self.provision_timeout),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("{name} must be > 0, got {v}"));
            }
        }
        self.adapter.validate().map_err(|e| CoordError::InvalidSpec(e.to_string()))?;
        check_writable(&self.working_dir).map_err(CoordError::InvalidSpec)
    }

    pub fn timestep(&self) -> Duration {
        Duration::from_secs_f64(self.heartbeat_timestep)
    }
}

fn check_writable(dir: &Path) -> Result<(), String> {
    if !dir.is_dir() {
        return Err(format!("working_dir {} is not a directory", dir.display()));
    }
    let probe = dir.join(format!(".write-probe-{}", std::process::id()));
    fs::write(&probe, b"").map_err(|e| format!("working_dir {} is not writable: {e}", dir.display()))?;
    let _ = fs::remove_file(probe);
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CoordError {
    #[error("job is already {0}")]
    UnknownJobPhase(JobPhase),
    #[error("scale requires phase Running, job is {0}")]
    NotRunning(JobPhase),
    #[error("target world {target} does not grow current world {current}")]
    NotAGrowth { current: u32, target: u32 },
    #[error("no scaling round in progress (phase {0})")]
    NotScaling(JobPhase),
    #[error("node {0} is already registered")]
    DuplicateNode(String),
    #[error("scaling round already has all {0} expected executors")]
    RoundFull(u32),
    #[error("checkpoint confirmation while job is {0}")]
    UnexpectedConfirm(JobPhase),
    #[error("node {0} is not part of this job")]
    UnknownNode(String),
    #[error("node {node} does not belong to job {job}")]
    WrongJob { node: String, job: String },
    #[error("node {0} has the wrong role for this call")]
    WrongRole(String),
    #[error("invalid job spec: {0}")]
    InvalidSpec(String),
    #[error("cannot bind {addr}: {reason}")]
    BindFailure { addr: String, reason: String },
}

impl CoordError {
    pub fn code(&self) -> &'static str {
        match self {
            CoordError::UnknownJobPhase(_) => "UnknownJobPhase",
            CoordError::NotRunning(_) => "NotRunning",
            CoordError::NotAGrowth { .. } => "NotAGrowth",
            CoordError::NotScaling(_) => "NotScaling",
            CoordError::DuplicateNode(_) => "DuplicateNode",
            CoordError::RoundFull(_) => "RoundFull",
            CoordError::UnexpectedConfirm(_) => "UnexpectedConfirm",
            CoordError::UnknownNode(_) => "UnknownNode",
            CoordError::WrongJob { .. } => "WrongJob",
            CoordError::WrongRole(_) => "WrongRole",
            CoordError::InvalidSpec(_) => "InvalidSpec",
            CoordError::BindFailure { .. } => "BindFailure",
        }
    }
}

impl From<CoordError> for RpcError {
    fn from(e: CoordError) -> RpcError {
        RpcError::new(e.code(), e.to_string())
    }
}

/// Why a job ended in Failed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FailureReason {
    CheckpointTimeout,
    ProvisionTimeout,
    LaunchDispatchFailure(String),
    CheckpointDispatchFailure(String),
    CheckpointFailed(String),
    WorkloadFailed { node: String, status: i64 },
    RestartTransform(String),
}

impl FailureReason {
    pub fn code(&self) -> &'static str {
        match self {
            FailureReason::CheckpointTimeout => "CheckpointTimeout",
            FailureReason::ProvisionTimeout => "ProvisionTimeout",
            FailureReason::LaunchDispatchFailure(_) => "LaunchDispatchFailure",
            FailureReason::CheckpointDispatchFailure(_) => "CheckpointDispatchFailure",
            FailureReason::CheckpointFailed(_) => "CheckpointFailed",
            FailureReason::WorkloadFailed { .. } => "WorkloadFailed",
            FailureReason::RestartTransform(_) => "RestartTransform",
        }
    }
}

impl fmt::Display for FailureReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FailureReason::LaunchDispatchFailure(d)
            | FailureReason::CheckpointDispatchFailure(d)
            | FailureReason::RestartTransform(d) => write!(f, "{}: {d}", self.code()),
            FailureReason::CheckpointFailed(node) => write!(f, "CheckpointFailed: {node}"),
            FailureReason::WorkloadFailed { node, status } => write!(f, "WorkloadFailed: {node} exited with {status}"),
            _ => f.write_str(self.code()),
        }
    }
}

/// Work the server must carry out after a state change. Directives go to
/// executor agents; results come back through
/// [`JobCore::launch_result`] and [`JobCore::dispatch_failed`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Effect {
    Launch { epoch: u32, targets: Vec<(String, Option<String>, LaunchDirective)> },
    Checkpoint { targets: Vec<(String, Option<String>)>, signal: String, grace_ms: u64, token: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transition {
    pub from: JobPhase,
    pub to: JobPhase,
    pub reason: String,
}

#[derive(Debug, Clone)]
struct ScalingRound {
    index: u32,
    from_world: u32,
    to_world: u32,
    started: Instant,
    checkpoint_done: Option<Instant>,
    relaunch_started: Option<Instant>,
    pre_scaling: BTreeSet<String>,
    confirmed: BTreeSet<String>,
    new_nodes: Vec<String>,
    checkpoint_deadline: Instant,
    provision_deadline: Instant,
}

impl ScalingRound {
    fn expected_new(&self) -> u32 {
        self.to_world - self.from_world
    }
    fn barrier_complete(&self) -> bool {
        self.confirmed.len() == self.pre_scaling.len()
    }
    fn all_arrived(&self) -> bool {
        self.new_nodes.len() as u32 == self.expected_new()
    }
}

pub type Reply = (Fields, Vec<Effect>);

/// The single owner of job state.
pub struct JobCore {
    spec: JobSpec,
    phase: JobPhase,
    registry: Vec<ExecutorRecord>,
    keys: KeyBundle,
    epoch: u32,
    world: u32,
    current_command: Vec<String>,
    launches: u32,
    end_exec: BTreeSet<String>,
    round: Option<ScalingRound>,
    rounds: Vec<RoundRecord>,
    transitions: Vec<Transition>,
    failure: Option<FailureReason>,
    log: EventLog,
}

impl JobCore {
    pub fn new(spec: JobSpec, keys: KeyBundle, log: EventLog) -> JobCore {
        let current_command = spec.workload_command.clone();
        JobCore {
            spec,
            phase: JobPhase::WaitingForExecutors,
            registry: Vec::new(),
            keys,
            epoch: 0,
            world: 0,
            current_command,
            launches: 0,
            end_exec: BTreeSet::new(),
            round: None,
            rounds: Vec::new(),
            transitions: Vec::new(),
            failure: None,
            log,
        }
    }

    pub fn spec(&self) -> &JobSpec {
        &self.spec
    }
    pub fn phase(&self) -> JobPhase {
        self.phase
    }
    pub fn keys(&self) -> &KeyBundle {
        &self.keys
    }
    pub fn registry(&self) -> &[ExecutorRecord] {
        &self.registry
    }
    /// World size of the current launch epoch (0 before the first launch).
    pub fn world(&self) -> u32 {
        self.world
    }
    pub fn epoch(&self) -> u32 {
        self.epoch
    }
    /// Number of launch dispatches, initial launch included.
    pub fn launch_count(&self) -> u32 {
        self.launches
    }
    pub fn expected_registrations(&self) -> u32 {
        self.spec.initial_ranks
    }
    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }
    pub fn rounds(&self) -> &[RoundRecord] {
        &self.rounds
    }
    pub fn failure(&self) -> Option<&FailureReason> {
        self.failure.as_ref()
    }
    pub fn log(&self) -> &EventLog {
        &self.log
    }
    /// Phases visited so far, starting with WaitingForExecutors.
    pub fn phase_trace(&self) -> Vec<JobPhase> {
        std::iter::once(JobPhase::WaitingForExecutors).chain(self.transitions.iter().map(|t| t.to)).collect()
    }

    fn transition(&mut self, to: JobPhase, reason: &str) {
        assert!(self.phase.can_transition_to(to), "illegal transition {} -> {to}", self.phase);
        self.log.transition(self.phase, to, reason);
        self.transitions.push(Transition { from: self.phase, to, reason: reason.to_string() });
        self.phase = to;
    }

    /// Moves the job to Failed unless it already ended.
    pub fn fail(&mut self, reason: FailureReason) {
        if self.phase.is_terminal() {
            return;
        }
        self.transition(JobPhase::Failed, &reason.to_string());
        self.failure = Some(reason);
        self.round = None;
    }

    fn base_reply(&self) -> Fields {
        fields! { "phase" => self.phase.as_str(), "world" => self.world as i64, "epoch" => self.epoch as i64 }
    }

    fn find(&self, node: &str) -> Option<usize> {
        self.registry.iter().position(|r| r.node_name == node)
    }

    fn check_node(&self, node: &str, role: NodeRole) -> Result<(), CoordError> {
        let parsed = NodeName::parse(node).ok_or_else(|| CoordError::UnknownNode(node.into()))?;
        if parsed.job != self.spec.job_name {
            return Err(CoordError::WrongJob { node: node.into(), job: self.spec.job_name.clone() });
        }
        if parsed.role != role {
            return Err(CoordError::WrongRole(node.into()));
        }
        Ok(())
    }

    /// An initial executor reports that it is alive and ready.
    pub fn job_init(&mut self, node: &str, address: Option<&str>, now: Instant) -> Result<Reply, CoordError> {
        if self.phase.is_terminal() {
            return Err(CoordError::UnknownJobPhase(self.phase));
        }
        self.check_node(node, NodeRole::Worker)?;
        let mut effects = Vec::new();
        let accepted = match self.find(node) {
            Some(i) => {
                let rec = &mut self.registry[i];
                rec.last_heartbeat = now;
                if let Some(a) = address {
                    rec.address = Some(a.to_string());
                }
                true
            }
            None if self.phase == JobPhase::WaitingForExecutors
                && (self.registry.len() as u32) < self.spec.initial_ranks =>
            {
                self.registry.push(ExecutorRecord {
                    node_name: node.to_string(),
                    address: address.map(str::to_string),
                    rank: 0,
                    state: ExecutorState::Registered,
                    last_heartbeat: now,
                });
                self.log.rpc("JobInit", node);
                true
            }
            None => false,
        };
        if self.phase == JobPhase::WaitingForExecutors && self.registry.len() as u32 == self.spec.initial_ranks {
            // Root rank goes to worker-0; the rest follow the worker index.
            self.registry.sort_by_key(|r| NodeName::parse(&r.node_name).map(|n| n.index).unwrap_or(u32::MAX));
            for (rank, rec) in self.registry.iter_mut().enumerate() {
                rec.rank = rank as u32;
            }
            self.transition(JobPhase::Running, "all initial executors registered");
            effects.push(self.launch(false));
        }
        let mut reply = self.base_reply();
        reply.insert("accepted".into(), Value::Bool(accepted));
        reply.insert("public_token".into(), self.keys.public_token.as_str().into());
        reply.insert("job_dir".into(), self.spec.working_dir.display().to_string().into());
        Ok((reply, effects))
    }

    /// Liveness probe; always answers.
    pub fn active_server(&mut self, node: Option<&str>, now: Instant) -> Fields {
        if let Some(i) = node.and_then(|n| self.find(n)) {
            self.registry[i].last_heartbeat = now;
        }
        self.base_reply()
    }

    pub fn scale(&mut self, cmd: ScaleCommand, now: Instant) -> Result<Reply, CoordError> {
        if self.phase != JobPhase::Running {
            return Err(CoordError::NotRunning(self.phase));
        }
        let current = self.world;
        let target = cmd.target_world(current);
        if target <= current {
            return Err(CoordError::NotAGrowth { current, target });
        }
        self.log.rpc("Scale", &format!("{} {}", cmd.mode.as_str(), cmd.nodes));
        let pre_scaling: BTreeSet<String> = self.registry.iter().map(|r| r.node_name.clone()).collect();
        self.round = Some(ScalingRound {
            index: self.rounds.len() as u32 + 1,
            from_world: current,
            to_world: target,
            started: now,
            checkpoint_done: None,
            relaunch_started: None,
            pre_scaling,
            confirmed: BTreeSet::new(),
            new_nodes: Vec::new(),
            checkpoint_deadline: now + Duration::from_secs_f64(self.spec.checkpoint_grace),
            provision_deadline: now + Duration::from_secs_f64(self.spec.provision_timeout),
        });
        self.end_exec.clear();
        self.transition(JobPhase::Scaling, &format!("scale {current} -> {target}"));
        let effect = Effect::Checkpoint {
            targets: self.registry.iter().map(|r| (r.node_name.clone(), r.address.clone())).collect(),
            signal: self.spec.adapter.checkpoint_signal.clone(),
            grace_ms: (self.spec.checkpoint_grace * 1000.0) as u64,
            token: self.keys.public_token.clone(),
        };
        let mut reply = self.base_reply();
        reply.insert("accepted".into(), Value::Bool(true));
        reply.insert("target_world".into(), Value::Int(target as i64));
        Ok((reply, vec![effect]))
    }

    /// A scale pod asks for the key bundle and joins the host list.
    pub fn retrieve_keys(&mut self, node: &str, address: &str, now: Instant) -> Result<Reply, CoordError> {
        if !self.phase.is_scaling() {
            return Err(CoordError::NotScaling(self.phase));
        }
        self.check_node(node, NodeRole::Scale)?;
        if self.find(node).is_some() {
            return Err(CoordError::DuplicateNode(node.into()));
        }
        let round = self.round.as_mut().expect("scaling phase without a round");
        if round.all_arrived() {
            return Err(CoordError::RoundFull(round.expected_new()));
        }
        round.new_nodes.push(node.to_string());
        let rank = self.registry.len() as u32;
        self.registry.push(ExecutorRecord {
            node_name: node.to_string(),
            address: Some(address.to_string()),
            rank,
            state: ExecutorState::Registered,
            last_heartbeat: now,
        });
        self.log.rpc("RetrieveKeys", node);
        let effects = self.maybe_relaunch(now);
        let mut reply = self.base_reply();
        reply.insert("public_token".into(), self.keys.public_token.as_str().into());
        reply.insert("private_token".into(), self.keys.private_token.as_str().into());
        reply.insert("rank".into(), Value::Int(rank as i64));
        reply.insert("job_dir".into(), self.spec.working_dir.display().to_string().into());
        Ok((reply, effects))
    }

    /// A pre-scaling executor confirms its workload checkpointed and exited.
    pub fn checkpoint_done(&mut self, node: &str, ok: bool, now: Instant) -> Result<Reply, CoordError> {
        if !matches!(self.phase, JobPhase::Scaling | JobPhase::Checkpointing) {
            return Err(CoordError::UnexpectedConfirm(self.phase));
        }
        let round = self.round.as_mut().expect("scaling phase without a round");
        if !round.pre_scaling.contains(node) {
            return Err(CoordError::UnknownNode(node.into()));
        }
        if !ok {
            self.fail(FailureReason::CheckpointFailed(node.into()));
            let mut reply = self.base_reply();
            reply.insert("accepted".into(), Value::Bool(false));
            return Ok((reply, vec![]));
        }
        round.confirmed.insert(node.to_string());
        let complete = round.barrier_complete();
        if let Some(i) = self.find(node) {
            self.registry[i].state = ExecutorState::AwaitingRelaunch;
        }
        self.log.rpc("checkpointing", node);
        let mut effects = Vec::new();
        if complete && self.phase == JobPhase::Scaling {
            if let Some(r) = self.round.as_mut() {
                r.checkpoint_done = Some(now);
            }
            self.transition(JobPhase::Checkpointing, "checkpoint barrier complete");
            effects = self.maybe_relaunch(now);
        }
        let mut reply = self.base_reply();
        reply.insert("accepted".into(), Value::Bool(true));
        Ok((reply, effects))
    }

    /// An executor reports that its workload finished. Completion only
    /// counts while Running; during a round the report is acknowledged and
    /// dropped.
    pub fn end_exec(&mut self, node: &str, status: i64, _now: Instant) -> Result<Reply, CoordError> {
        let idx = self.find(node).ok_or_else(|| CoordError::UnknownNode(node.into()))?;
        let mut accepted = !self.phase.is_terminal() || self.phase == JobPhase::Complete;
        if status != 0 && !self.phase.is_terminal() {
            self.fail(FailureReason::WorkloadFailed { node: node.into(), status });
            accepted = false;
        } else if self.phase == JobPhase::Running {
            self.log.rpc("endExec", node);
            self.registry[idx].state = ExecutorState::Finished;
            self.end_exec.insert(node.to_string());
            if self.end_exec.len() == self.registry.len() {
                self.transition(JobPhase::Complete, "all executors reported endExec");
            }
        } else if self.phase.is_scaling() {
            self.log.rpc("endExec-suppressed", node);
        }
        let mut reply = self.base_reply();
        reply.insert("accepted".into(), Value::Bool(accepted));
        Ok((reply, vec![]))
    }

    fn maybe_relaunch(&mut self, now: Instant) -> Vec<Effect> {
        let ready = self.phase == JobPhase::Checkpointing && self.round.as_ref().is_some_and(|r| r.all_arrived() && r.barrier_complete());
        if !ready {
            return Vec::new();
        }
        match transform_restart_command(&self.current_command, &self.spec.adapter, &self.spec.working_dir) {
            Ok(cmd) => self.current_command = cmd,
            Err(e) => {
                self.fail(FailureReason::RestartTransform(e.to_string()));
                return Vec::new();
            }
        }
        if let Some(r) = self.round.as_mut() {
            r.relaunch_started = Some(now);
        }
        self.transition(JobPhase::Relaunching, "all new executors registered");
        vec![self.launch(true)]
    }

    fn launch(&mut self, restart: bool) -> Effect {
        self.epoch += 1;
        self.launches += 1;
        self.world = self.registry.len() as u32;
        self.end_exec.clear();
        let targets = self
            .registry
            .iter()
            .map(|r| {
                let d = LaunchDirective {
                    rank: r.rank,
                    world_size: self.world,
                    command: self.current_command.clone(),
                    restart,
                    rendezvous_dir: self.spec.working_dir.display().to_string(),
                    token: self.keys.public_token.clone(),
                    epoch: self.epoch,
                };
                (r.node_name.clone(), r.address.clone(), d)
            })
            .collect();
        self.log.launch(self.epoch, self.world, restart);
        Effect::Launch { epoch: self.epoch, targets }
    }

    /// Result of dispatching the Launch directives of `epoch`.
    pub fn launch_result(&mut self, epoch: u32, result: Result<(), String>, now: Instant) {
        if epoch != self.epoch || self.launches == 0 || self.phase.is_terminal() {
            return;
        }
        if let Err(e) = result {
            self.fail(FailureReason::LaunchDispatchFailure(e));
            return;
        }
        for r in &mut self.registry {
            r.state = ExecutorState::Active;
        }
        self.log.registry(&self.registry);
        if self.phase == JobPhase::Relaunching {
            let round = self.round.take().expect("relaunch without a round");
            let record = RoundRecord {
                index: round.index,
                from_world: round.from_world,
                to_world: round.to_world,
                checkpoint_s: round.checkpoint_done.map(|t| (t - round.started).as_secs_f64()).unwrap_or(0.0),
                provision_wait_s: round
                    .relaunch_started
                    .zip(round.checkpoint_done)
                    .map(|(r, c)| r.saturating_duration_since(c).as_secs_f64())
                    .unwrap_or(0.0),
                relaunch_s: round.relaunch_started.map(|t| (now - t).as_secs_f64()).unwrap_or(0.0),
                total_s: (now - round.started).as_secs_f64(),
            };
            self.log.round(&record);
            self.rounds.push(record);
            self.transition(JobPhase::Running, "relaunched on the enlarged host list");
        }
    }

    /// A directive could not be delivered to an executor.
    pub fn dispatch_failed(&mut self, detail: String) {
        self.fail(FailureReason::CheckpointDispatchFailure(detail));
    }

    /// Enforces the checkpoint and provisioning deadlines.
    pub fn tick(&mut self, now: Instant) {
        let Some(round) = self.round.as_ref() else { return };
        if self.phase == JobPhase::Scaling && !round.barrier_complete() && now >= round.checkpoint_deadline {
            self.fail(FailureReason::CheckpointTimeout);
        } else if matches!(self.phase, JobPhase::Scaling | JobPhase::Checkpointing)
            && !round.all_arrived()
            && now >= round.provision_deadline
        {
            self.fail(FailureReason::ProvisionTimeout);
        }
    }
}
