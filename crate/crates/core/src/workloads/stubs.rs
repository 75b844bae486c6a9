//! Stub workloads standing in for real simulation codes.
//!
//! * [`run_sleeper`] writes numbered restart files every step, like a code
//!   that checkpoints on an interval and restarts from an input parameter.
//! * [`run_counter`] keeps a counter and saves it when signalled, like a code
//!   that checkpoints on SIGTERM and restarts from a command-line flag.
//! * [`run_simwork`] performs a fixed amount of simulated work on a simulated
//!   clock, so elapsed times are exact and independent of the machine.
//!
//! In all three only rank 0 keeps state; other ranks idle until the job ends
//! or they are signalled.

use std::fs::{self, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::thread;
use std::time::Duration;

use super::{write_atomic, RankEnv};

#[derive(Debug, thiserror::Error)]
pub enum StubError {
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("bad state in {path}: {reason}")]
    BadState { path: PathBuf, reason: String },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> StubError + '_ {
    move |source| StubError::Io { path: path.to_path_buf(), source }
}

fn append_line(path: &Path, line: &str) -> Result<(), StubError> {
    let mut f = OpenOptions::new().create(true).append(true).open(path).map_err(io_err(path))?;
    writeln!(f, "{line}").map_err(io_err(path))
}

fn read_parsed<T: std::str::FromStr>(path: &Path) -> Result<T, StubError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    text.trim()
        .parse()
        .map_err(|_| StubError::BadState { path: path.to_path_buf(), reason: format!("cannot parse {:?}", text.trim()) })
}

/// How a stub run ended.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StubOutcome {
    Finished,
    Stopped,
}

fn idle_until(stop: &AtomicBool, done_marker: &Path, poll: Duration) -> StubOutcome {
    loop {
        if stop.load(Ordering::Acquire) {
            return StubOutcome::Stopped;
        }
        if done_marker.exists() {
            return StubOutcome::Finished;
        }
        thread::sleep(poll);
    }
}

#[derive(Debug, Clone)]
pub struct SleeperConfig {
    pub total_steps: u64,
    pub interval: Duration,
    pub prefix: String,
    /// Input file holding `key = <restart ordinal>`; 0 or absent means a cold start.
    pub namelist: PathBuf,
    pub key: String,
}

/// Reads the integer assigned to `key` in a namelist-style file.
pub fn read_parameter(file: &Path, key: &str) -> Result<Option<u64>, StubError> {
    let text = match fs::read_to_string(file) {
        Ok(t) => t,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(None),
        Err(e) => return Err(io_err(file)(e)),
    };
    for line in text.lines() {
        let t = line.trim();
        if let Some(rest) = t.strip_prefix(key) {
            if let Some(v) = rest.trim_start().strip_prefix('=') {
                let v = v.trim().trim_end_matches(',').trim();
                return v
                    .parse()
                    .map(Some)
                    .map_err(|_| StubError::BadState { path: file.to_path_buf(), reason: format!("{key} = {v:?}") });
            }
        }
    }
    Ok(None)
}

/// Restart-file stub. Rank 0 writes `<prefix>NNNNNN` after every step and
/// `sleeper.done` at the end; it logs each start to `sleeper.log`.
pub fn run_sleeper(cfg: &SleeperConfig, env: &RankEnv, stop: &AtomicBool) -> Result<StubOutcome, StubError> {
    let done = env.job_dir.join("sleeper.done");
    if env.rank != 0 {
        return Ok(idle_until(stop, &done, Duration::from_millis(5)));
    }
    let start = read_parameter(&cfg.namelist, &cfg.key)?.unwrap_or(0);
    append_line(&env.job_dir.join("sleeper.log"), &format!("start world={} from={start}", env.world))?;
    for step in start + 1..=cfg.total_steps {
        if stop.load(Ordering::Acquire) {
            return Ok(StubOutcome::Stopped);
        }
        thread::sleep(cfg.interval);
        let f = env.job_dir.join(format!("{}{step:06}", cfg.prefix));
        write_atomic(&f, step.to_string().as_bytes()).map_err(io_err(&f))?;
    }
    write_atomic(&done, cfg.total_steps.to_string().as_bytes()).map_err(io_err(&done))?;
    Ok(StubOutcome::Finished)
}

#[derive(Debug, Clone)]
pub struct CounterConfig {
    pub steps: u64,
    pub interval: Duration,
    pub state_path: PathBuf,
    pub resume: bool,
}

impl CounterConfig {
    pub fn done_path(&self) -> PathBuf {
        with_suffix(&self.state_path, ".done")
    }

    pub fn log_path(&self) -> PathBuf {
        with_suffix(&self.state_path, ".log")
    }
}

fn with_suffix(p: &Path, suffix: &str) -> PathBuf {
    let mut s = p.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

/// Signal-checkpoint stub. Rank 0 counts to `steps`; when stopped it saves
/// the counter to `state_path`. With `resume` it starts from the saved value.
pub fn run_counter(cfg: &CounterConfig, env: &RankEnv, stop: &AtomicBool) -> Result<(StubOutcome, u64), StubError> {
    let done = cfg.done_path();
    if env.rank != 0 {
        return Ok((idle_until(stop, &done, Duration::from_millis(5)), 0));
    }
    let mut counter = if cfg.resume { read_parsed::<u64>(&cfg.state_path)? } else { 0 };
    append_line(&cfg.log_path(), &format!("start world={} from={counter}", env.world))?;
    while counter < cfg.steps {
        if stop.load(Ordering::Acquire) {
            write_atomic(&cfg.state_path, counter.to_string().as_bytes()).map_err(io_err(&cfg.state_path))?;
            return Ok((StubOutcome::Stopped, counter));
        }
        thread::sleep(cfg.interval);
        counter += 1;
    }
    write_atomic(&done, counter.to_string().as_bytes()).map_err(io_err(&done))?;
    Ok((StubOutcome::Finished, counter))
}

#[derive(Debug, Clone)]
pub struct SimWorkConfig {
    /// Total work in rank-seconds: one rank finishes it in `work` simulated seconds.
    pub work: f64,
    /// Simulated seconds per tick.
    pub tick: f64,
    /// Real time spent per tick.
    pub tick_real: Duration,
    /// Simulated seconds added when resuming from a checkpoint.
    pub restart_cost: f64,
}

/// File names used by [`run_simwork`] inside the job directory.
pub struct SimFiles;

impl SimFiles {
    pub const STATE: &'static str = "simwork.state";
    /// Simulated time the workload may not pass; written by the monitor.
    pub const LIMIT: &'static str = "simwork.limit";
    pub const PROGRESS: &'static str = "simwork.progress";
    pub const RESULT: &'static str = "simwork.result";
}

pub fn read_sim_value(path: &Path) -> Result<Option<f64>, StubError> {
    match fs::read_to_string(path) {
        Ok(text) => text
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| StubError::BadState { path: path.to_path_buf(), reason: format!("{:?}", text.trim()) }),
        Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(io_err(path)(e)),
    }
}

/// Writes an `f64` as its shortest round-trip decimal text.
pub fn write_sim_value(path: &Path, v: f64) -> Result<(), StubError> {
    write_atomic(path, format!("{v:?}").as_bytes()).map_err(io_err(path))
}

/// Simulated-clock stub. Rank 0 advances simulated time in ticks, doing
/// `tick * world` rank-seconds of work per tick, never past the limit file.
/// Stopping saves `(time, work done)`; finishing writes the final simulated
/// time to `simwork.result`.
pub fn run_simwork(cfg: &SimWorkConfig, env: &RankEnv, stop: &AtomicBool) -> Result<(StubOutcome, f64), StubError> {
    let dir = &env.job_dir;
    let result = dir.join(SimFiles::RESULT);
    if env.rank != 0 {
        return Ok((idle_until(stop, &result, Duration::from_millis(2)), 0.0));
    }
    let state = dir.join(SimFiles::STATE);
    let (mut t, mut done) = match fs::read_to_string(&state) {
        Ok(text) => {
            let mut it = text.split_whitespace().map(str::parse::<f64>);
            match (it.next(), it.next()) {
                (Some(Ok(t)), Some(Ok(d))) => (t + cfg.restart_cost, d),
                _ => return Err(StubError::BadState { path: state, reason: text }),
            }
        }
        Err(e) if e.kind() == io::ErrorKind::NotFound => (0.0, 0.0),
        Err(e) => return Err(io_err(&state)(e)),
    };
    let world = env.world as f64;
    let progress = dir.join(SimFiles::PROGRESS);
    let limit_path = dir.join(SimFiles::LIMIT);
    write_sim_value(&progress, t)?;
    loop {
        if done >= cfg.work {
            write_sim_value(&result, t)?;
            return Ok((StubOutcome::Finished, t));
        }
        if stop.load(Ordering::Acquire) {
            write_atomic(&state, format!("{t:?} {done:?}").as_bytes()).map_err(io_err(&state))?;
            return Ok((StubOutcome::Stopped, t));
        }
        let remaining = (cfg.work - done) / world;
        let mut step = cfg.tick.min(remaining);
        let limit = read_sim_value(&limit_path)?;
        match limit {
            Some(l) if t >= l => {
                thread::sleep(Duration::from_millis(1));
                continue;
            }
            Some(l) if l - t <= step => {
                step = l - t;
                done += step * world;
                t = l;
            }
            _ if step == remaining => {
                done = cfg.work;
                t += step;
            }
            _ => {
                done += step * world;
                t += step;
            }
        }
        write_sim_value(&progress, t)?;
        if !cfg.tick_real.is_zero() {
            thread::sleep(cfg.tick_real);
        }
    }
}
