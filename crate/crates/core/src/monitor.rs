//! The monitor: a time-based scaling policy, a provisioner that creates new
//! executor agents, and the control loop that drives the coordinator.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Stdio};
use std::thread;
use std::time::{Duration, Instant};

use crate::bins;
use crate::coordinator::JobPhase;
use crate::transport::{call_once, CallError};
use crate::wireproto::{Call, FieldsExt, NodeName, ScaleCommand};
use crate::workloads::stubs::{read_sim_value, write_sim_value, SimFiles};

#[derive(Debug, thiserror::Error)]
pub enum MonitorError {
    #[error("invalid policy: {0}")]
    InvalidPolicy(String),
    #[error("coordinator call failed: {0}")]
    Coordinator(#[from] CallError),
    #[error("provisioning failed: {0}")]
    ProvisionFailure(String),
    #[error("simulated clock: {0}")]
    Clock(String),
    #[error("job did not end within {0:?}")]
    Timeout(Duration),
}

/// Grow to `to_ranks` once `point * baseline` seconds have elapsed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduleEntry {
    pub point: f64,
    pub to_ranks: u32,
}

impl ScheduleEntry {
    /// Parses `"0.3:6"`.
    pub fn parse(s: &str) -> Result<ScheduleEntry, MonitorError> {
        let bad = || MonitorError::InvalidPolicy(format!("schedule entry {s:?}, expected POINT:RANKS"));
        let (p, r) = s.split_once(':').ok_or_else(bad)?;
        Ok(ScheduleEntry { point: p.trim().parse().map_err(|_| bad())?, to_ranks: r.trim().parse().map_err(|_| bad())? })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingPolicy {
    /// Seconds of an unscaled run.
    pub baseline: f64,
    pub from_ranks: u32,
    pub schedule: Vec<ScheduleEntry>,
    fired: Vec<bool>,
}

impl ScalingPolicy {
    pub fn new(baseline: f64, from_ranks: u32, schedule: Vec<ScheduleEntry>) -> Result<ScalingPolicy, MonitorError> {
        let bad = |m: String| Err(MonitorError::InvalidPolicy(m));
        if !(baseline.is_finite() && baseline > 0.0) {
            return bad(format!("baseline must be > 0, got {baseline}"));
        }
        let mut world = from_ranks;
        let mut last = 0.0;
        for e in &schedule {
            if !(e.point > 0.0 && e.point < 1.0) {
                return bad(format!("scaling point {} outside (0,1)", e.point));
            }
            if e.point <= last {
                return bad("scaling points must be strictly increasing".into());
            }
            if e.to_ranks <= world {
                return bad(format!("to_ranks {} does not grow world {world}", e.to_ranks));
            }
            last = e.point;
            world = e.to_ranks;
        }
        let fired = vec![false; schedule.len()];
        Ok(ScalingPolicy { baseline, from_ranks, schedule, fired })
    }

    /// Elapsed time at which entry `i` fires.
    pub fn trigger_time(&self, i: usize) -> f64 {
        self.schedule[i].point * self.baseline
    }

    pub fn next_unfired(&self) -> Option<usize> {
        self.fired.iter().position(|f| !f)
    }

    /// Returns the command for the first unfired entry that is due and marks
    /// it fired.
    pub fn evaluate(&mut self, elapsed: f64, _current_world: u32) -> Option<ScaleCommand> {
        let i = self.next_unfired()?;
        if self.trigger_time(i) <= elapsed {
            self.fired[i] = true;
            Some(ScaleCommand::absolute(self.schedule[i].to_ranks))
        } else {
            None
        }
    }
}

pub fn evaluate_policy(elapsed: f64, policy: &mut ScalingPolicy, current_world: u32) -> Option<ScaleCommand> {
    policy.evaluate(elapsed, current_world)
}

#[derive(Debug, Clone)]
pub struct ProvisionContext {
    pub job: String,
    pub coordinator: String,
    pub timestep: Duration,
    pub round: u32,
}

/// Creates new executor agents. Returns the node names it started.
pub trait Provisioner: Send {
    fn provision(&mut self, count: u32, ctx: &ProvisionContext) -> Result<Vec<String>, MonitorError>;
}

/// Spawns `agent` processes on this machine, named `<job>-scale-<k>`.
pub struct LocalProcessProvisioner {
    agent_bin: PathBuf,
    log_dir: Option<PathBuf>,
    next_index: u32,
    children: Vec<Child>,
}

impl LocalProcessProvisioner {
    pub fn new(agent_bin: impl Into<PathBuf>) -> Self {
        LocalProcessProvisioner { agent_bin: agent_bin.into(), log_dir: None, next_index: 0, children: Vec::new() }
    }

    /// Uses the `agent` binary next to the running executable.
    pub fn locate() -> Self {
        Self::new(bins::bin_path("agent"))
    }

    /// Redirects each agent's stderr to `<dir>/<node>.agent.log`.
    pub fn with_log_dir(mut self, dir: &Path) -> Self {
        self.log_dir = Some(dir.to_path_buf());
        self
    }

    /// Waits up to `timeout` for spawned agents to exit, then kills the rest.
    pub fn reap(&mut self, timeout: Duration) {
        let deadline = Instant::now() + timeout;
        for c in &mut self.children {
            while Instant::now() < deadline {
                if !matches!(c.try_wait(), Ok(None)) {
                    break;
                }
                thread::sleep(Duration::from_millis(10));
            }
            let _ = c.kill();
            let _ = c.wait();
        }
        self.children.clear();
    }
}

impl Provisioner for LocalProcessProvisioner {
    fn provision(&mut self, count: u32, ctx: &ProvisionContext) -> Result<Vec<String>, MonitorError> {
        let mut names = Vec::new();
        for _ in 0..count {
            let name = NodeName::scale(&ctx.job, self.next_index);
            self.next_index += 1;
            let stderr = match &self.log_dir {
                Some(d) => fs::File::create(d.join(format!("{name}.agent.log")))
                    .map(Stdio::from)
                    .map_err(|e| MonitorError::ProvisionFailure(e.to_string()))?,
                None => Stdio::null(),
            };
            let child = Command::new(&self.agent_bin)
                .args(["--name", &name, "--coordinator", &ctx.coordinator])
                .args(["--timestep", &ctx.timestep.as_secs_f64().to_string()])
                .stdin(Stdio::null())
                .stdout(Stdio::null())
                .stderr(stderr)
                .spawn()
                .map_err(|e| MonitorError::ProvisionFailure(format!("{}: {e}", self.agent_bin.display())))?;
            self.children.push(child);
            names.push(name);
        }
        Ok(names)
    }
}

impl Drop for LocalProcessProvisioner {
    fn drop(&mut self) {
        self.reap(Duration::from_secs(5));
    }
}

/// Hands out agents that were started beforehand. It returns at most what it
/// holds, so a short list leaves a round under-provisioned.
pub struct NullProvisioner {
    available: Vec<String>,
}

impl NullProvisioner {
    pub fn new(available: Vec<String>) -> Self {
        NullProvisioner { available }
    }
}

impl Provisioner for NullProvisioner {
    fn provision(&mut self, count: u32, _ctx: &ProvisionContext) -> Result<Vec<String>, MonitorError> {
        let n = (count as usize).min(self.available.len());
        Ok(self.available.drain(..n).collect())
    }
}

/// Where elapsed job time comes from.
#[derive(Debug, Clone)]
pub enum Clock {
    /// Wall time since the monitor first saw the job Running.
    Wall,
    /// The simulated-work stub's progress file in `job_dir`. The monitor holds
    /// the stub at each trigger time through the limit file.
    Sim { job_dir: PathBuf },
}

/// Writes the simulated-clock limit for the first entry of `policy`. Call
/// before the workload starts.
pub fn prepare_sim_clock(job_dir: &Path, policy: &ScalingPolicy) -> Result<(), MonitorError> {
    set_sim_limit(job_dir, policy.next_unfired().map(|i| policy.trigger_time(i)))
}

fn set_sim_limit(job_dir: &Path, limit: Option<f64>) -> Result<(), MonitorError> {
    let path = job_dir.join(SimFiles::LIMIT);
    match limit {
        Some(l) => write_sim_value(&path, l).map_err(|e| MonitorError::Clock(e.to_string())),
        None => match fs::remove_file(&path) {
            Err(e) if e.kind() != std::io::ErrorKind::NotFound => Err(MonitorError::Clock(e.to_string())),
            _ => Ok(()),
        },
    }
}

#[derive(Debug, Clone)]
pub struct MonitorConfig {
    pub job: String,
    pub coordinator: String,
    pub poll: Duration,
    /// Heartbeat timestep handed to provisioned agents.
    pub agent_timestep: Duration,
    pub clock: Clock,
    /// Consecutive unanswered polls before giving up.
    pub max_misses: u32,
    pub timeout: Option<Duration>,
}

impl MonitorConfig {
    pub fn new(job: &str, coordinator: &str, agent_timestep: Duration) -> MonitorConfig {
        MonitorConfig {
            job: job.into(),
            coordinator: coordinator.into(),
            poll: Duration::from_millis(10),
            agent_timestep,
            clock: Clock::Wall,
            max_misses: 50,
            timeout: None,
        }
    }
}

/// Timings of one schedule entry, in seconds since the monitor started.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundTiming {
    pub entry: usize,
    pub from_world: u32,
    pub to_world: u32,
    /// Job time at which the entry fired.
    pub elapsed: f64,
    pub scale_sent_at: f64,
    pub provisioned_at: f64,
    pub provisioned: Vec<String>,
    pub completed_at: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonitorReport {
    pub final_phase: JobPhase,
    pub final_world: u32,
    pub scale_calls: u32,
    pub rounds: Vec<RoundTiming>,
}

/// Polls the coordinator, fires the policy and provisions agents until the
/// job ends.
pub fn run_monitor(
    policy: &mut ScalingPolicy,
    provisioner: &mut dyn Provisioner,
    cfg: &MonitorConfig,
) -> Result<MonitorReport, MonitorError> {
    let t0 = Instant::now();
    let since = |t: Instant| (t - t0).as_secs_f64();
    if let Clock::Sim { job_dir } = &cfg.clock {
        prepare_sim_clock(job_dir, policy)?;
    }
    let mut running_since: Option<Instant> = None;
    let mut pending: Option<usize> = None;
    let mut rounds: Vec<RoundTiming> = Vec::new();
    let mut scale_calls = 0;
    let mut misses = 0;
    loop {
        if let Some(limit) = cfg.timeout.filter(|l| t0.elapsed() > *l) {
            return Err(MonitorError::Timeout(limit));
        }
        let reply = match call_once(&cfg.coordinator, Call::ActiveServer { node_name: None }, Duration::from_secs(5)) {
            Ok(r) => {
                misses = 0;
                r
            }
            Err(e) if e.is_unreachable() && misses + 1 < cfg.max_misses => {
                misses += 1;
                thread::sleep(cfg.poll);
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        let phase = reply.str_field("phase").and_then(JobPhase::parse).unwrap_or(JobPhase::Failed);
        let world = reply.int_field("world").unwrap_or(0) as u32;
        if phase.is_terminal() {
            return Ok(MonitorReport { final_phase: phase, final_world: world, scale_calls, rounds });
        }
        if phase == JobPhase::Running {
            let started = *running_since.get_or_insert_with(Instant::now);
            if let Some(i) = pending {
                if world == rounds[i].to_world {
                    rounds[i].completed_at = Some(since(Instant::now()));
                    pending = None;
                    if let Clock::Sim { job_dir } = &cfg.clock {
                        set_sim_limit(job_dir, policy.next_unfired().map(|k| policy.trigger_time(k)))?;
                    }
                }
            }
            if pending.is_none() {
                let elapsed = match &cfg.clock {
                    Clock::Wall => started.elapsed().as_secs_f64(),
                    Clock::Sim { job_dir } => read_sim_value(&job_dir.join(SimFiles::PROGRESS))
                        .map_err(|e| MonitorError::Clock(e.to_string()))?
                        .unwrap_or(0.0),
                };
                let entry = policy.next_unfired();
                if let (Some(entry), Some(cmd)) = (entry, policy.evaluate(elapsed, world)) {
                    let target = cmd.target_world(world);
                    call_once(&cfg.coordinator, Call::Scale(cmd), Duration::from_secs(5))?;
                    scale_calls += 1;
                    let scale_sent_at = since(Instant::now());
                    log::info!("monitor: scale {world} -> {target} at elapsed {elapsed:.3}");
                    let ctx = ProvisionContext {
                        job: cfg.job.clone(),
                        coordinator: cfg.coordinator.clone(),
                        timestep: cfg.agent_timestep,
                        round: rounds.len() as u32 + 1,
                    };
                    let provisioned = provisioner.provision(target - world, &ctx)?;
                    rounds.push(RoundTiming {
                        entry,
                        from_world: world,
                        to_world: target,
                        elapsed,
                        scale_sent_at,
                        provisioned_at: since(Instant::now()),
                        provisioned,
                        completed_at: None,
                    });
                    pending = Some(rounds.len() - 1);
                }
            }
        }
        thread::sleep(cfg.poll);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn policy(entries: &[(f64, u32)]) -> ScalingPolicy {
        let s = entries.iter().map(|&(point, to_ranks)| ScheduleEntry { point, to_ranks }).collect();
        ScalingPolicy::new(100.0, 2, s).unwrap()
    }

    #[test]
    fn fires_once_at_point() {
        let mut p = policy(&[(0.3, 6)]);
        assert_eq!(evaluate_policy(29.0, &mut p, 2), None);
        assert_eq!(evaluate_policy(30.0, &mut p, 2), Some(ScaleCommand::absolute(6)));
        assert_eq!(evaluate_policy(31.0, &mut p, 6), None);
    }

    #[test]
    fn empty_schedule_never_fires() {
        let mut p = policy(&[]);
        assert_eq!(p.evaluate(1e9, 2), None);
    }

    #[test]
    fn multi_entry_in_order() {
        let mut p = policy(&[(0.3, 4), (0.6, 6)]);
        assert_eq!(p.evaluate(100.0, 2), Some(ScaleCommand::absolute(4)));
        assert_eq!(p.evaluate(100.0, 4), Some(ScaleCommand::absolute(6)));
        assert_eq!(p.evaluate(100.0, 6), None);
    }

    #[test]
    fn invalid_policies() {
        let e = |p, r| ScheduleEntry { point: p, to_ranks: r };
        assert!(ScalingPolicy::new(100.0, 2, vec![e(0.5, 4), e(0.3, 6)]).is_err());
        assert!(ScalingPolicy::new(100.0, 2, vec![e(0.3, 4), e(0.5, 4)]).is_err());
        assert!(ScalingPolicy::new(100.0, 2, vec![e(1.0, 4)]).is_err());
        assert!(ScalingPolicy::new(100.0, 4, vec![e(0.3, 4)]).is_err());
        assert!(ScalingPolicy::new(0.0, 2, vec![]).is_err());
    }

    #[test]
    fn parse_entry() {
        assert_eq!(ScheduleEntry::parse("0.3:6").unwrap(), ScheduleEntry { point: 0.3, to_ranks: 6 });
        assert!(ScheduleEntry::parse("0.3").is_err());
        assert!(ScheduleEntry::parse("x:6").is_err());
    }

    #[test]
    fn null_provisioner_is_partial() {
        let mut p = NullProvisioner::new(vec!["j-scale-0".into()]);
        let ctx = ProvisionContext { job: "j".into(), coordinator: String::new(), timestep: Duration::ZERO, round: 1 };
        assert_eq!(p.provision(2, &ctx).unwrap(), ["j-scale-0"]);
        assert!(p.provision(1, &ctx).unwrap().is_empty());
    }
}
