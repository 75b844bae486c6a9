//! Runs one job on the full stack: a coordinator process, one agent process
//! per initial rank, and the monitor in this process. Also runs a workload
//! directly, without any control plane, for overhead comparisons.

use std::fs::{self, File};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Stdio};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::Value as Json;

use super::HarnessError;
use crate::bins;
use crate::coordinator::events::{first_entry, read_events, event_log_path};
use crate::coordinator::{JobPhase, JobSpec, RoundRecord};
use crate::monitor::{
    run_monitor, Clock, LocalProcessProvisioner, MonitorConfig, MonitorReport, NullProvisioner, Provisioner,
    ScalingPolicy, ScheduleEntry,
};
use crate::signals::send_signal;
use crate::wireproto::NodeName;
use crate::workloads::stubs::{read_sim_value, SimFiles};
use crate::workloads::{AdapterKind, AdapterSpec, RestartTransform, ENV_JOB_DIR, ENV_RANK, ENV_WORLD_SIZE};

/// The workload a job runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum WorkloadSpec {
    Parint {
        array_size: u64,
        nloop: u32,
        outer_iters: u32,
        #[serde(default)]
        iter_sleep_ms: u64,
        #[serde(default)]
        restart_delay_ms: u64,
    },
    /// Simulated-clock stub; elapsed times come from its result file.
    Simwork {
        work: f64,
        #[serde(default = "one")]
        tick: f64,
        #[serde(default)]
        tick_real_ms: u64,
        #[serde(default)]
        restart_cost: f64,
    },
}

fn one() -> f64 {
    1.0
}

impl WorkloadSpec {
    pub fn is_simulated(&self) -> bool {
        matches!(self, WorkloadSpec::Simwork { .. })
    }

    /// The same workload with `seconds` of cost charged on every restart.
    pub fn with_restart_cost(&self, seconds: f64) -> WorkloadSpec {
        let mut w = self.clone();
        match &mut w {
            WorkloadSpec::Parint { restart_delay_ms, .. } => *restart_delay_ms = (seconds * 1000.0).round() as u64,
            WorkloadSpec::Simwork { restart_cost, .. } => *restart_cost = seconds,
        }
        w
    }

    pub fn command(&self) -> Vec<String> {
        match self {
            WorkloadSpec::Parint { array_size, nloop, outer_iters, iter_sleep_ms, restart_delay_ms } => {
                vec![
                    bins::bin_path("parint").display().to_string(),
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
                    "--restart-delay-ms".into(),
                    restart_delay_ms.to_string(),
                ]
            }
            WorkloadSpec::Simwork { work, tick, tick_real_ms, restart_cost } => vec![
                bins::bin_path("simwork").display().to_string(),
                "--work".into(),
                work.to_string(),
                "--tick".into(),
                tick.to_string(),
                "--tick-real-ms".into(),
                tick_real_ms.to_string(),
                "--restart-cost".into(),
                restart_cost.to_string(),
            ],
        }
    }

    pub fn adapter(&self) -> AdapterSpec {
        match self {
            WorkloadSpec::Parint { .. } => AdapterSpec::parint(),
            WorkloadSpec::Simwork { .. } => AdapterSpec {
                id: "simwork".into(),
                kind: AdapterKind::SignalExit,
                checkpoint_signal: "SIGUSR1".into(),
                restart_transform: RestartTransform::None,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProvisionerKind {
    #[default]
    Local,
    Null,
}

#[derive(Debug, Clone)]
pub struct JobRun {
    pub job: String,
    pub dir: PathBuf,
    pub workload: WorkloadSpec,
    pub ranks: u32,
    pub schedule: Vec<ScheduleEntry>,
    /// Required when `schedule` is not empty.
    pub baseline: Option<f64>,
    pub timestep: Duration,
    pub checkpoint_grace: f64,
    pub provision_timeout: f64,
    pub provisioner: ProvisionerKind,
    pub timeout: Duration,
}

impl JobRun {
    pub fn new(dir: impl Into<PathBuf>, workload: WorkloadSpec, ranks: u32, timestep: Duration) -> JobRun {
        JobRun {
            job: "job".into(),
            dir: dir.into(),
            workload,
            ranks,
            schedule: Vec::new(),
            baseline: None,
            timestep,
            checkpoint_grace: 30.0,
            provision_timeout: 120.0,
            provisioner: ProvisionerKind::Local,
            timeout: Duration::from_secs(600),
        }
    }
}

#[derive(Debug, Clone)]
pub struct JobResult {
    pub phase: JobPhase,
    /// Coordinator Running (first) to Complete, in seconds.
    pub wall_s: Option<f64>,
    /// Simulated completion time of the simulated-clock stub.
    pub sim_s: Option<f64>,
    pub rounds: Vec<RoundRecord>,
    pub monitor: MonitorReport,
    pub events: Vec<Json>,
}

impl JobResult {
    /// The job's duration on the clock that matters for its workload.
    pub fn duration(&self) -> Option<f64> {
        self.sim_s.or(self.wall_s)
    }
}

/// Kills the wrapped processes when dropped.
struct Procs(Vec<(String, Child)>);

impl Procs {
    fn wait_all(&mut self, timeout: Duration) {
        let deadline = Instant::now() + timeout;
        for (_, c) in &mut self.0 {
            while Instant::now() < deadline && matches!(c.try_wait(), Ok(None)) {
                thread::sleep(Duration::from_millis(10));
            }
        }
    }
}

impl Drop for Procs {
    fn drop(&mut self) {
        for (_, c) in &mut self.0 {
            let _ = c.kill();
            let _ = c.wait();
        }
    }
}

fn spawn_logged(bin: &Path, args: &[String], log: &Path) -> Result<Child, HarnessError> {
    let err = File::create(log)?;
    Command::new(bin)
        .args(args)
        .stdin(Stdio::null())
        .stdout(Stdio::null())
        .stderr(err)
        .spawn()
        .map_err(|e| HarnessError::Spawn(format!("{}: {e}", bin.display())))
}

fn spawn_agent(name: &str, coordinator: &str, timestep: Duration, dir: &Path) -> Result<Child, HarnessError> {
    let args = vec![
        "--name".into(),
        name.into(),
        "--coordinator".into(),
        coordinator.into(),
        "--timestep".into(),
        timestep.as_secs_f64().to_string(),
    ];
    spawn_logged(&bins::bin_path("agent"), &args, &dir.join(format!("{name}.agent.log")))
}

/// Empties (or creates) a run directory.
pub fn fresh_dir(dir: &Path) -> Result<(), HarnessError> {
    if dir.exists() {
        fs::remove_dir_all(dir)?;
    }
    fs::create_dir_all(dir)?;
    Ok(())
}

/// Runs `run` to completion on the full stack. A job that ends in Failed is
/// returned as a result, not an error.
pub fn run_stack_job(run: &JobRun) -> Result<JobResult, HarnessError> {
    fresh_dir(&run.dir)?;
    let dir = fs::canonicalize(&run.dir)?;
    let mut spec = JobSpec::new(&run.job, run.ranks, run.workload.command(), &dir, run.workload.adapter());
    spec.heartbeat_timestep = run.timestep.as_secs_f64();
    spec.checkpoint_grace = run.checkpoint_grace;
    spec.provision_timeout = run.provision_timeout;
    spec.validate().map_err(|e| HarnessError::InvalidConfig(e.to_string()))?;
    let spec_path = dir.join("job.json");
    fs::write(&spec_path, serde_json::to_string_pretty(&spec).expect("spec serializes"))?;

    let growth = run.schedule.last().map_or(0, |e| e.to_ranks.saturating_sub(run.ranks));
    let policy = ScalingPolicy::new(run.baseline.unwrap_or(1.0), run.ranks, run.schedule.clone())
        .map_err(|e| HarnessError::InvalidConfig(e.to_string()))?;
    let mut policy = policy;
    let clock = if run.workload.is_simulated() { Clock::Sim { job_dir: dir.clone() } } else { Clock::Wall };
    if let Clock::Sim { job_dir } = &clock {
        crate::monitor::prepare_sim_clock(job_dir, &policy).map_err(HarnessError::Monitor)?;
    }

    // Coordinator.
    let addr_file = dir.join("coordinator.addr");
    let linger = 2.0 * run.timestep.as_secs_f64() + 1.0;
    let coord_args: Vec<String> = vec![
        "--spec".into(),
        spec_path.display().to_string(),
        "--listen".into(),
        "127.0.0.1:0".into(),
        "--addr-file".into(),
        addr_file.display().to_string(),
        "--linger".into(),
        linger.to_string(),
    ];
    let coordinator = spawn_logged(&bins::bin_path("coordinator"), &coord_args, &dir.join("coordinator.log"))?;
    let mut coord = Procs(vec![("coordinator".into(), coordinator)]);
    let deadline = Instant::now() + Duration::from_secs(20);
    let addr = loop {
        if let Ok(a) = fs::read_to_string(&addr_file) {
            break a.trim().to_string();
        }
        if Instant::now() > deadline || !matches!(coord.0[0].1.try_wait(), Ok(None)) {
            return Err(HarnessError::Coordinator(format!("no address; see {}", dir.join("coordinator.log").display())));
        }
        thread::sleep(Duration::from_millis(5));
    };

    // Agents.
    let mut agents = Procs(Vec::new());
    for k in 0..run.ranks {
        let name = NodeName::worker(&run.job, k);
        agents.0.push((name.clone(), spawn_agent(&name, &addr, run.timestep, &dir)?));
    }
    let mut provisioner: Box<dyn Provisioner> = match run.provisioner {
        ProvisionerKind::Local => Box::new(LocalProcessProvisioner::locate().with_log_dir(&dir)),
        ProvisionerKind::Null => {
            let names: Vec<String> = (0..growth).map(|k| NodeName::scale(&run.job, k)).collect();
            for n in &names {
                agents.0.push((n.clone(), spawn_agent(n, &addr, run.timestep, &dir)?));
            }
            Box::new(NullProvisioner::new(names))
        }
    };

    let mut mcfg = MonitorConfig::new(&run.job, &addr, run.timestep);
    mcfg.clock = clock;
    mcfg.timeout = Some(run.timeout);
    let report = run_monitor(&mut policy, provisioner.as_mut(), &mcfg).map_err(HarnessError::Monitor)?;

    // Agents notice the end at their next heartbeat.
    agents.wait_all(run.timestep * 2 + Duration::from_secs(5));
    drop(provisioner);
    if let Ok(None) = coord.0[0].1.try_wait() {
        let _ = send_signal(coord.0[0].1.id(), libc::SIGTERM);
    }
    coord.wait_all(Duration::from_secs(5));
    drop(agents);
    drop(coord);

    let events = read_events(&event_log_path(&dir))?;
    let wall_s = match (first_entry(&events, JobPhase::Running), first_entry(&events, JobPhase::Complete)) {
        (Some(a), Some(b)) => Some((b - a) as f64 / 1e6),
        _ => None,
    };
    let rounds = events
        .iter()
        .filter(|e| e["kind"] == "round")
        .filter_map(|e| serde_json::from_value::<RoundRecord>(e.clone()).ok())
        .collect();
    let sim_s = if run.workload.is_simulated() {
        read_sim_value(&dir.join(SimFiles::RESULT)).map_err(|e| HarnessError::Io(std::io::Error::other(e.to_string())))?
    } else {
        None
    };
    Ok(JobResult { phase: report.final_phase, wall_s, sim_s, rounds, monitor: report, events })
}

/// Runs `ranks` copies of the workload directly in `dir` and returns the
/// wall time until all have exited.
pub fn run_direct(workload: &WorkloadSpec, ranks: u32, dir: &Path) -> Result<f64, HarnessError> {
    fresh_dir(dir)?;
    let dir = fs::canonicalize(dir)?;
    let argv = workload.command();
    let start = Instant::now();
    let mut procs = Procs(Vec::new());
    for r in 0..ranks {
        let log = File::create(dir.join(format!("rank-{r}.out")))?;
        let child = Command::new(&argv[0])
            .args(&argv[1..])
            .current_dir(&dir)
            .env(ENV_RANK, r.to_string())
            .env(ENV_WORLD_SIZE, ranks.to_string())
            .env(ENV_JOB_DIR, &dir)
            .stdin(Stdio::null())
            .stdout(log.try_clone()?)
            .stderr(log)
            .spawn()
            .map_err(|e| HarnessError::Spawn(format!("{}: {e}", argv[0])))?;
        procs.0.push((format!("rank-{r}"), child));
    }
    for (name, c) in &mut procs.0 {
        let st = c.wait()?;
        if !st.success() {
            return Err(HarnessError::JobFailed(format!("direct {name} exited with {st}")));
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    procs.0.clear();
    Ok(elapsed)
}
