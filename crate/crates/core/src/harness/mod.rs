//! Experiment driver: baselines, the overhead measurement, the scaling
//! matrix and the arithmetic-intensity sweep. Experiments run one job at a
//! time and write `results.csv`.

pub mod stack;

use std::fs;
use std::io;
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};

pub use stack::{fresh_dir, run_direct, run_stack_job, JobResult, JobRun, ProvisionerKind, WorkloadSpec};

use crate::coordinator::JobPhase;
use crate::monitor::{MonitorError, ScheduleEntry};

pub const CSV_HEADER: &str =
    "experiment,scenario_from,scenario_to,scaling_point,rep,baseline_s,scaled_s,speedup,checkpoint_cost_s,relaunch_cost_s,status";

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("cannot start {0}")]
    Spawn(String),
    #[error("coordinator: {0}")]
    Coordinator(String),
    #[error(transparent)]
    Monitor(MonitorError),
    #[error("job failed: {0}")]
    JobFailed(String),
    #[error("workload ran {direct_s:.3}s, shorter than {min_timesteps} timesteps of {timestep_s}s")]
    WorkloadTooShort { direct_s: f64, timestep_s: f64, min_timesteps: f64 },
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("outside the model's domain: {0}")]
    Domain(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

/// Model speedup of a perfectly parallel job grown from `r0` to `r1` ranks
/// after a fraction `p` of its baseline, paying `c` baselines for the round.
pub fn ideal_speedup(p: f64, r0: u32, r1: u32, c: f64) -> Result<f64, HarnessError> {
    if !(p > 0.0 && p < 1.0) {
        return Err(HarnessError::Domain(format!("p={p} outside (0,1)")));
    }
    if r0 < 1 || r1 <= r0 {
        return Err(HarnessError::Domain(format!("ranks {r0} -> {r1} is not a growth")));
    }
    if !(c >= 0.0 && c.is_finite()) {
        return Err(HarnessError::Domain(format!("c={c} is negative")));
    }
    Ok(1.0 / (p + c + (1.0 - p) * r0 as f64 / r1 as f64))
}

fn default_scenarios() -> Vec<(u32, u32)> {
    vec![(2, 4), (2, 6), (4, 6)]
}
fn default_points() -> Vec<f64> {
    vec![0.3, 0.5, 0.7]
}
fn default_reps() -> u32 {
    3
}
fn default_timestep() -> f64 {
    1.0
}
fn default_timesteps() -> Vec<f64> {
    vec![0.1, 1.0, 10.0]
}
fn default_ranks() -> u32 {
    2
}
fn default_nloops() -> Vec<u32> {
    vec![16, 32, 64]
}
fn default_grace() -> f64 {
    30.0
}
fn default_provision() -> f64 {
    120.0
}
fn default_min_timesteps() -> f64 {
    10.0
}

fn default_job_timeout() -> f64 {
    900.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub workload: WorkloadSpec,
    #[serde(default = "default_scenarios")]
    pub scenarios: Vec<(u32, u32)>,
    #[serde(default = "default_points")]
    pub scaling_points: Vec<f64>,
    #[serde(default = "default_reps")]
    pub repetitions: u32,
    /// Heartbeat timestep in seconds.
    #[serde(default = "default_timestep")]
    pub timestep: f64,
    /// Timesteps swept by the overhead experiment.
    #[serde(default = "default_timesteps")]
    pub timesteps: Vec<f64>,
    /// Rank count for the overhead experiment.
    #[serde(default = "default_ranks")]
    pub overhead_ranks: u32,
    /// PARINT nloop values swept by the sensitivity experiment.
    #[serde(default = "default_nloops")]
    pub nloops: Vec<u32>,
    /// When set, PARINT's outer_iters is calibrated so the unscaled run at the
    /// smallest rank count takes about this long.
    #[serde(default)]
    pub target_seconds: Option<f64>,
    /// Cost charged to every restart, as a fraction of the baseline.
    #[serde(default)]
    pub injected_cost: f64,
    #[serde(default)]
    pub provisioner: ProvisionerKind,
    #[serde(default = "default_grace")]
    pub checkpoint_grace: f64,
    #[serde(default = "default_provision")]
    pub provision_timeout: f64,
    /// Overhead runs shorter than this many timesteps are rejected.
    #[serde(default = "default_min_timesteps")]
    pub min_timesteps: f64,
    /// Upper bound on one job, in seconds.
    #[serde(default = "default_job_timeout")]
    pub job_timeout: f64,
}

impl ExperimentConfig {
    pub fn new(workload: WorkloadSpec) -> ExperimentConfig {
        serde_json::from_value(serde_json::json!({ "workload": workload })).expect("defaults deserialize")
    }

    pub fn load(path: &Path) -> Result<ExperimentConfig, HarnessError> {
        let text = fs::read_to_string(path)?;
        let cfg: ExperimentConfig =
            serde_json::from_str(&text).map_err(|e| HarnessError::InvalidConfig(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::InvalidConfig(m));
        if self.repetitions < 1 {
            return bad("repetitions must be >= 1".into());
        }
        if let Some(p) = self.scaling_points.iter().find(|p| !(**p > 0.0 && **p < 1.0)) {
            return bad(format!("scaling point {p} outside (0,1)"));
        }
        if let Some((a, b)) = self.scenarios.iter().find(|(a, b)| *a < 1 || b <= a) {
            return bad(format!("scenario {a} -> {b} is not a growth"));
        }
        if !(self.timestep > 0.0) || self.timesteps.iter().any(|t| !(*t > 0.0)) {
            return bad("timesteps must be > 0".into());
        }
        if !(self.injected_cost >= 0.0) {
            return bad("injected_cost must be >= 0".into());
        }
        if !(self.min_timesteps >= 1.0) {
            return bad("min_timesteps must be >= 1".into());
        }
        Ok(())
    }

    fn timestep(&self) -> Duration {
        Duration::from_secs_f64(self.timestep)
    }

    fn job(&self, dir: &Path, workload: WorkloadSpec, ranks: u32, timestep: Duration) -> JobRun {
        let mut run = JobRun::new(dir, workload, ranks, timestep);
        run.checkpoint_grace = self.checkpoint_grace;
        run.provision_timeout = self.provision_timeout;
        run.provisioner = self.provisioner;
        run.timeout = Duration::from_secs_f64(self.job_timeout);
        run
    }
}

/// One row of `results.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub experiment: String,
    pub scenario_from: u32,
    pub scenario_to: u32,
    pub scaling_point: f64,
    pub rep: u32,
    pub baseline_s: f64,
    pub scaled_s: f64,
    pub speedup: f64,
    pub checkpoint_cost_s: f64,
    pub relaunch_cost_s: f64,
    pub status: String,
    /// Round cost as a fraction of the baseline, as fed to the model.
    #[serde(skip)]
    pub model_c: f64,
}

impl ExperimentResult {
    pub fn ok(&self) -> bool {
        self.status == "ok"
    }

    /// [`ideal_speedup`] for this row's scenario, point and measured cost.
    pub fn model_speedup(&self) -> Option<f64> {
        ideal_speedup(self.scaling_point, self.scenario_from, self.scenario_to, self.model_c).ok()
    }
}

pub fn write_results_csv(path: &Path, rows: &[ExperimentResult]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path)?;
    if rows.is_empty() {
        w.write_record(CSV_HEADER.split(','))?;
    }
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_results_csv(path: &Path) -> Result<Vec<ExperimentResult>, HarnessError> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<Result<_, _>>()?)
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(|a, b| a.total_cmp(b));
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        (xs[n / 2 - 1] + xs[n / 2]) / 2.0
    }
}

/// Chooses PARINT's outer iteration count so that a direct run at `ranks`
/// ranks takes about `target_s`. Probes with the real executable, doubling the
/// iteration count until a probe lasts a second, so process start-up and core
/// sharing are measured rather than guessed.
pub fn calibrate_parint(template: &WorkloadSpec, ranks: u32, target_s: f64, scratch: &Path) -> Result<u32, HarnessError> {
    let WorkloadSpec::Parint { array_size, nloop, iter_sleep_ms, restart_delay_ms, .. } = template else {
        return Err(HarnessError::InvalidConfig("calibration needs a PARINT workload".into()));
    };
    let mut iters = 1u32;
    let per_iter = loop {
        let probe = WorkloadSpec::Parint {
            array_size: *array_size,
            nloop: *nloop,
            outer_iters: iters,
            iter_sleep_ms: *iter_sleep_ms,
            restart_delay_ms: *restart_delay_ms,
        };
        let el = run_direct(&probe, ranks, &scratch.join(format!("probe-{iters}")))?;
        if el >= 1.0 || iters >= 1 << 20 {
            break el / iters as f64;
        }
        iters = if el < 0.05 { iters * 8 } else { iters * 2 };
    };
    let _ = fs::remove_dir_all(scratch);
    Ok(((target_s / per_iter).ceil() as u32).max(1))
}

/// Resolves `target_seconds` into a concrete workload.
pub fn sized_workload(cfg: &ExperimentConfig, ranks: u32, scratch: &Path) -> Result<WorkloadSpec, HarnessError> {
    match (&cfg.workload, cfg.target_seconds) {
        (WorkloadSpec::Parint { array_size, nloop, iter_sleep_ms, restart_delay_ms, .. }, Some(target)) => {
            let outer_iters = calibrate_parint(&cfg.workload, ranks, target, scratch)?;
            log::info!("calibrated PARINT nloop={nloop} to {outer_iters} outer iterations");
            Ok(WorkloadSpec::Parint {
                array_size: *array_size,
                nloop: *nloop,
                outer_iters,
                iter_sleep_ms: *iter_sleep_ms,
                restart_delay_ms: *restart_delay_ms,
            })
        }
        (w, _) => Ok(w.clone()),
    }
}

/// Median duration of `repetitions` unscaled runs, plus every run's result.
pub fn run_baseline(
    cfg: &ExperimentConfig,
    workload: &WorkloadSpec,
    ranks: u32,
    out: &Path,
) -> Result<(f64, Vec<JobResult>), HarnessError> {
    let mut times = Vec::new();
    let mut results = Vec::new();
    for rep in 0..cfg.repetitions {
        let dir = out.join("runs").join(format!("baseline-w{ranks}-rep{rep}"));
        let r = run_stack_job(&cfg.job(&dir, workload.clone(), ranks, cfg.timestep()))?;
        if r.phase != JobPhase::Complete {
            return Err(HarnessError::JobFailed(format!("baseline at {ranks} ranks ended {}", r.phase)));
        }
        times.push(r.duration().ok_or_else(|| HarnessError::JobFailed("baseline without timing".into()))?);
        results.push(r);
    }
    Ok((median(times), results))
}

fn scaled_row(
    experiment: &str,
    (from, to): (u32, u32),
    point: f64,
    rep: u32,
    baseline: f64,
    injected_s: f64,
    simulated: bool,
    outcome: Result<JobResult, HarnessError>,
) -> ExperimentResult {
    let mut row = ExperimentResult {
        experiment: experiment.into(),
        scenario_from: from,
        scenario_to: to,
        scaling_point: point,
        rep,
        baseline_s: baseline,
        scaled_s: 0.0,
        speedup: 0.0,
        checkpoint_cost_s: 0.0,
        relaunch_cost_s: 0.0,
        status: "Failed".into(),
        model_c: 0.0,
    };
    match outcome {
        Ok(r) if r.phase == JobPhase::Complete && r.duration().is_some() => {
            let scaled = r.duration().unwrap();
            row.scaled_s = scaled;
            row.speedup = baseline / scaled;
            row.checkpoint_cost_s = r.rounds.iter().map(|x| x.checkpoint_s).sum();
            row.relaunch_cost_s = r.rounds.iter().map(|x| x.provision_wait_s + x.relaunch_s).sum();
            row.model_c = if simulated {
                injected_s / baseline
            } else {
                (row.checkpoint_cost_s + row.relaunch_cost_s + injected_s) / baseline
            };
            row.status = "ok".into();
        }
        Ok(r) => log::warn!("{experiment} {from}->{to}@{point} rep {rep}: job ended {}", r.phase),
        Err(e) => log::warn!("{experiment} {from}->{to}@{point} rep {rep}: {e}"),
    }
    row
}

/// Runs every scenario at every scaling point, `repetitions` times each,
/// after measuring one baseline per starting rank count. Failed cells become
/// Failed rows. Writes `out/results.csv`.
pub fn run_scaling_matrix(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<ExperimentResult>, HarnessError> {
    let rows = scaling_matrix(cfg, &cfg.workload, "matrix", out)?;
    write_results_csv(&out.join("results.csv"), &rows)?;
    Ok(rows)
}

fn scaling_matrix(
    cfg: &ExperimentConfig,
    workload: &WorkloadSpec,
    experiment: &str,
    out: &Path,
) -> Result<Vec<ExperimentResult>, HarnessError> {
    cfg.validate()?;
    fs::create_dir_all(out)?;
    let mut starts: Vec<u32> = cfg.scenarios.iter().map(|s| s.0).collect();
    starts.sort();
    starts.dedup();
    let mut baselines = Vec::new();
    for &r0 in &starts {
        let (b, _) = run_baseline(cfg, workload, r0, &out.join(experiment))?;
        log::info!("{experiment}: baseline at {r0} ranks {b:.3}s");
        baselines.push((r0, b));
    }
    let mut rows = Vec::new();
    for &(from, to) in &cfg.scenarios {
        let baseline = baselines.iter().find(|b| b.0 == from).map(|b| b.1).unwrap();
        let injected_s = cfg.injected_cost * baseline;
        let w = if injected_s > 0.0 { workload.with_restart_cost(injected_s) } else { workload.clone() };
        for &point in &cfg.scaling_points {
            for rep in 0..cfg.repetitions {
                let dir = out.join(experiment).join("runs").join(format!("w{from}-{to}-p{point}-rep{rep}"));
                let mut run = cfg.job(&dir, w.clone(), from, cfg.timestep());
                run.schedule = vec![ScheduleEntry { point, to_ranks: to }];
                run.baseline = Some(baseline);
                let outcome = run_stack_job(&run);
                let row = scaled_row(experiment, (from, to), point, rep, baseline, injected_s, w.is_simulated(), outcome);
                log::info!("{experiment} {from}->{to}@{point} rep {rep}: speedup {:.4} ({})", row.speedup, row.status);
                rows.push(row);
            }
        }
    }
    Ok(rows)
}

/// Sweeps PARINT's nloop over a 2 -> 6 scenario at the configured points.
pub fn run_sensitivity(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<ExperimentResult>, HarnessError> {
    let WorkloadSpec::Parint { .. } = cfg.workload else {
        return Err(HarnessError::InvalidConfig("the sensitivity sweep needs a PARINT workload".into()));
    };
    let mut rows = Vec::new();
    for &n in &cfg.nloops {
        let mut c = cfg.clone();
        c.scenarios = vec![(2, 6)];
        if let WorkloadSpec::Parint { nloop, .. } = &mut c.workload {
            *nloop = n;
        }
        let w = sized_workload(&c, 2, &out.join("calibration"))?;
        rows.extend(scaling_matrix(&c, &w, &format!("sensitivity-nloop{n}"), out)?);
    }
    write_results_csv(&out.join("results.csv"), &rows)?;
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct OverheadResult {
    pub timestep: f64,
    pub direct_s: f64,
    pub stack_s: f64,
}

impl OverheadResult {
    pub fn overhead(&self) -> f64 {
        self.stack_s / self.direct_s - 1.0
    }
}

/// Runs the workload directly and under the stack with no scaling, once per
/// configured timestep. Workloads shorter than `min_timesteps` timesteps are rejected.
pub fn run_overhead_experiment(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<OverheadResult>, HarnessError> {
    cfg.validate()?;
    fs::create_dir_all(out)?;
    let ranks = cfg.overhead_ranks;
    let w = sized_workload(cfg, ranks, &out.join("calibration"))?;
    let mut results = Vec::new();
    let mut rows = Vec::new();
    for &ts in &cfg.timesteps {
        let direct_s = run_direct(&w, ranks, &out.join("runs").join(format!("direct-ts{ts}")))?;
        if direct_s < cfg.min_timesteps * ts {
            return Err(HarnessError::WorkloadTooShort { direct_s, timestep_s: ts, min_timesteps: cfg.min_timesteps });
        }
        let dir = out.join("runs").join(format!("stack-ts{ts}"));
        let r = run_stack_job(&cfg.job(&dir, w.clone(), ranks, Duration::from_secs_f64(ts)))?;
        let stack_s = match (r.phase, r.wall_s) {
            (JobPhase::Complete, Some(s)) => s,
            (p, _) => return Err(HarnessError::JobFailed(format!("overhead run at timestep {ts} ended {p}"))),
        };
        let res = OverheadResult { timestep: ts, direct_s, stack_s };
        log::info!("overhead at timestep {ts}s: direct {direct_s:.3}s stack {stack_s:.3}s -> {:.4}", res.overhead());
        rows.push(ExperimentResult {
            experiment: format!("overhead-ts{ts}"),
            scenario_from: ranks,
            scenario_to: ranks,
            scaling_point: 0.0,
            rep: 0,
            baseline_s: direct_s,
            scaled_s: stack_s,
            speedup: direct_s / stack_s,
            checkpoint_cost_s: 0.0,
            relaunch_cost_s: 0.0,
            status: "ok".into(),
            model_c: 0.0,
        });
        results.push(res);
    }
    write_results_csv(&out.join("results.csv"), &rows)?;
    Ok(results)
}
