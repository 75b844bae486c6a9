//! PARINT: a parallel benchmark with a tunable arithmetic intensity.
//!
//! The array is split into contiguous blocks, one per rank. Each outer
//! iteration applies `nloop` update steps to every element of the block.
//! Elements never interact, so the final array does not depend on the number
//! of ranks or on where the run was checkpointed.
//!
//! Checkpointing is cooperative. When the stop flag is raised (SIGUSR1 in the
//! binary) every rank finishes its current outer iteration and writes its block
//! to a file in the shared job directory. Rank 0 waits for all blocks, brings
//! any block that stopped earlier up to the furthest iteration, and writes
//! either a [`ParintCheckpoint`] or the final result file.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::thread;
use std::time::{Duration, Instant};

use super::write_atomic;

/// Multiplier of the update step.
pub const STEP_MUL: f64 = 0.999999;
/// Addend of the update step.
pub const STEP_ADD: f64 = 1.0e-6;

pub const CHECKPOINT_MAGIC: [u8; 8] = *b"PARINTCK";
pub const CHECKPOINT_VERSION: u32 = 1;
const CHECKPOINT_HEADER: usize = 8 + 4 + 4 + 8 + 4;

const BLOCK_MAGIC: [u8; 8] = *b"PARINTBK";
const BLOCK_HEADER: usize = 8 + 4 * 4 + 8 * 2;

/// Applies `nloop` update steps `x <- x * A + B` to one element.
#[inline]
pub fn parint_step(mut x: f64, nloop: u32) -> f64 {
    for _ in 0..nloop {
        x = x * STEP_MUL + STEP_ADD;
    }
    x
}

/// Half-open index range `[floor(rN/W), floor((r+1)N/W))` owned by `rank`.
pub fn block_range(array_size: u64, rank: u32, world: u32) -> (u64, u64) {
    assert!(world >= 1 && rank < world, "rank {rank} outside world {world}");
    let n = array_size as u128;
    let lo = (rank as u128 * n / world as u128) as u64;
    let hi = ((rank as u128 + 1) * n / world as u128) as u64;
    (lo, hi)
}

/// Initial value of element `i`.
pub fn initial_value(i: u64) -> f64 {
    (i % 1000) as f64 / 1000.0
}

#[derive(Debug, thiserror::Error)]
pub enum ParintError {
    #[error("corrupt checkpoint {path}: {reason}")]
    CorruptCheckpoint { path: PathBuf, reason: String },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("timed out after {0:?} waiting for rank blocks")]
    GatherTimeout(Duration),
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> ParintError + '_ {
    move |source| ParintError::Io { path: path.to_path_buf(), source }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParintConfig {
    pub array_size: u64,
    pub nloop: u32,
    pub outer_iters: u32,
    pub checkpoint_path: PathBuf,
    /// Where rank 0 writes the final array; same layout as a checkpoint.
    pub output_path: PathBuf,
    /// Pause after every outer iteration.
    pub iter_sleep: Duration,
    /// Pause before computing when resuming from a checkpoint.
    pub restart_delay: Duration,
    pub gather_timeout: Duration,
}

impl ParintConfig {
    pub fn new(array_size: u64, nloop: u32, outer_iters: u32, checkpoint_path: impl Into<PathBuf>) -> Self {
        let checkpoint_path = checkpoint_path.into();
        let output_path = default_output_path(&checkpoint_path);
        ParintConfig {
            array_size,
            nloop,
            outer_iters,
            checkpoint_path,
            output_path,
            iter_sleep: Duration::ZERO,
            restart_delay: Duration::ZERO,
            gather_timeout: Duration::from_secs(120),
        }
    }

    pub fn validate(&self) -> Result<(), ParintError> {
        if self.array_size < 1 {
            return Err(ParintError::InvalidConfig("array_size must be >= 1".into()));
        }
        if self.outer_iters < 1 {
            return Err(ParintError::InvalidConfig("outer_iters must be >= 1".into()));
        }
        Ok(())
    }
}

/// `parint-final.bin` next to the checkpoint file.
pub fn default_output_path(checkpoint: &Path) -> PathBuf {
    checkpoint.parent().unwrap_or(Path::new(".")).join("parint-final.bin")
}

/// Checkpoint (and final result) file contents.
#[derive(Debug, Clone, PartialEq)]
pub struct ParintCheckpoint {
    pub version: u32,
    pub completed_iters: u32,
    pub world_at_checkpoint: u32,
    pub payload: Vec<f64>,
}

impl ParintCheckpoint {
    pub fn array_size(&self) -> u64 {
        self.payload.len() as u64
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(CHECKPOINT_HEADER + 8 * self.payload.len());
        out.extend_from_slice(&CHECKPOINT_MAGIC);
        out.extend_from_slice(&self.version.to_le_bytes());
        out.extend_from_slice(&self.completed_iters.to_le_bytes());
        out.extend_from_slice(&(self.payload.len() as u64).to_le_bytes());
        out.extend_from_slice(&self.world_at_checkpoint.to_le_bytes());
        for x in &self.payload {
            out.extend_from_slice(&x.to_le_bytes());
        }
        out
    }

    /// Parses a checkpoint. `path` is only used in error messages.
    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<ParintCheckpoint, ParintError> {
        let corrupt = |reason: String| ParintError::CorruptCheckpoint { path: path.to_path_buf(), reason };
        if bytes.len() < CHECKPOINT_HEADER {
            return Err(corrupt(format!("{} bytes is shorter than the header", bytes.len())));
        }
        if bytes[..8] != CHECKPOINT_MAGIC {
            return Err(corrupt("bad magic".into()));
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let version = u32_at(8);
        if version != CHECKPOINT_VERSION {
            return Err(corrupt(format!("unsupported version {version}")));
        }
        let completed_iters = u32_at(12);
        let array_size = u64::from_le_bytes(bytes[16..24].try_into().unwrap());
        let world_at_checkpoint = u32_at(24);
        if world_at_checkpoint == 0 {
            return Err(corrupt("world_at_checkpoint is 0".into()));
        }
        let body = &bytes[CHECKPOINT_HEADER..];
        if array_size.checked_mul(8) != Some(body.len() as u64) {
            return Err(corrupt(format!("array_size {array_size} does not match {} payload bytes", body.len())));
        }
        let payload = body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        Ok(ParintCheckpoint { version, completed_iters, world_at_checkpoint, payload })
    }

    pub fn write(&self, path: &Path) -> Result<(), ParintError> {
        write_atomic(path, &self.to_bytes()).map_err(io_err(path))
    }

    pub fn read(path: &Path) -> Result<ParintCheckpoint, ParintError> {
        let bytes = fs::read(path).map_err(io_err(path))?;
        ParintCheckpoint::from_bytes(&bytes, path)
    }
}

/// One rank's block, exchanged through the job directory.
#[derive(Debug, Clone, PartialEq)]
struct BlockFile {
    rank: u32,
    world: u32,
    completed: u32,
    start_iter: u32,
    lo: u64,
    values: Vec<f64>,
}

impl BlockFile {
    fn path(dir: &Path, start_iter: u32, world: u32, rank: u32) -> PathBuf {
        dir.join(format!("parint-block-s{start_iter}-w{world}-r{rank}.bin"))
    }

    fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(BLOCK_HEADER + 8 * self.values.len());
        out.extend_from_slice(&BLOCK_MAGIC);
        for v in [self.rank, self.world, self.completed, self.start_iter] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&self.lo.to_le_bytes());
        out.extend_from_slice(&(self.values.len() as u64).to_le_bytes());
        for x in &self.values {
            out.extend_from_slice(&x.to_le_bytes());
        }
        out
    }

    fn from_bytes(bytes: &[u8], path: &Path) -> Result<BlockFile, ParintError> {
        let corrupt = |reason: &str| ParintError::CorruptCheckpoint { path: path.to_path_buf(), reason: reason.into() };
        if bytes.len() < BLOCK_HEADER || bytes[..8] != BLOCK_MAGIC {
            return Err(corrupt("bad block header"));
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let u64_at = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
        let len = u64_at(32);
        let body = &bytes[BLOCK_HEADER..];
        if len.checked_mul(8) != Some(body.len() as u64) {
            return Err(corrupt("block length mismatch"));
        }
        Ok(BlockFile {
            rank: u32_at(8),
            world: u32_at(12),
            completed: u32_at(16),
            start_iter: u32_at(20),
            lo: u64_at(24),
            values: body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect(),
        })
    }
}

/// Rank identity of a PARINT process, normally read from the environment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankEnv {
    pub rank: u32,
    pub world: u32,
    pub job_dir: PathBuf,
}

impl RankEnv {
    /// Reads `KUB_RANK`, `KUB_WORLD_SIZE` and `KUB_JOB_DIR`. Missing rank and
    /// world default to a single-process run; the job directory defaults to
    /// `fallback_dir`.
    pub fn from_env(fallback_dir: &Path) -> Result<RankEnv, ParintError> {
        let num = |key: &str, default: u32| -> Result<u32, ParintError> {
            match std::env::var(key) {
                Ok(v) => v.parse().map_err(|_| ParintError::InvalidConfig(format!("{key}={v:?} is not an integer"))),
                Err(_) => Ok(default),
            }
        };
        let rank = num(super::ENV_RANK, 0)?;
        let world = num(super::ENV_WORLD_SIZE, 1)?;
        if world == 0 || rank >= world {
            return Err(ParintError::InvalidConfig(format!("rank {rank} outside world {world}")));
        }
        let job_dir = std::env::var_os(super::ENV_JOB_DIR).map(PathBuf::from).unwrap_or_else(|| fallback_dir.to_path_buf());
        Ok(RankEnv { rank, world, job_dir })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParintStatus {
    /// The final result file already existed; nothing was computed.
    AlreadyComplete,
    /// All outer iterations finished.
    Completed,
    /// Stopped on request after `completed_iters` outer iterations.
    Checkpointed { completed_iters: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParintOutcome {
    pub status: ParintStatus,
    pub start_iter: u32,
    /// Iterations this rank completed before writing its block.
    pub rank_completed: u32,
    /// `parint_step` applications on this rank's own block.
    pub element_updates: u64,
    /// Extra element updates rank 0 spent advancing lagging blocks.
    pub catch_up_updates: u64,
}

/// Runs one PARINT rank. `stop` is polled once per outer iteration.
pub fn parint_run(cfg: &ParintConfig, env: &RankEnv, stop: &AtomicBool) -> Result<ParintOutcome, ParintError> {
    cfg.validate()?;
    let RankEnv { rank, world, ref job_dir } = *env;
    if world == 0 || rank >= world {
        return Err(ParintError::InvalidConfig(format!("rank {rank} outside world {world}")));
    }

    if cfg.output_path.exists() {
        let done = ParintCheckpoint::read(&cfg.output_path)?;
        if done.completed_iters == cfg.outer_iters && done.array_size() == cfg.array_size {
            return Ok(ParintOutcome {
                status: ParintStatus::AlreadyComplete,
                start_iter: cfg.outer_iters,
                rank_completed: cfg.outer_iters,
                element_updates: 0,
                catch_up_updates: 0,
            });
        }
    }

    let (lo, hi) = block_range(cfg.array_size, rank, world);
    let (mut block, start_iter) = if cfg.checkpoint_path.exists() {
        let ck = ParintCheckpoint::read(&cfg.checkpoint_path)?;
        if ck.array_size() != cfg.array_size {
            return Err(ParintError::CorruptCheckpoint {
                path: cfg.checkpoint_path.clone(),
                reason: format!("array_size {} does not match configured {}", ck.array_size(), cfg.array_size),
            });
        }
        if ck.completed_iters >= cfg.outer_iters {
            return Err(ParintError::CorruptCheckpoint {
                path: cfg.checkpoint_path.clone(),
                reason: format!("completed_iters {} is not below outer_iters {}", ck.completed_iters, cfg.outer_iters),
            });
        }
        if !cfg.restart_delay.is_zero() {
            thread::sleep(cfg.restart_delay);
        }
        (ck.payload[lo as usize..hi as usize].to_vec(), ck.completed_iters)
    } else {
        ((lo..hi).map(initial_value).collect::<Vec<_>>(), 0)
    };

    let mut completed = start_iter;
    let mut updates = 0u64;
    while completed < cfg.outer_iters {
        if stop.load(Ordering::Acquire) {
            break;
        }
        for x in block.iter_mut() {
            *x = parint_step(*x, cfg.nloop);
        }
        updates += block.len() as u64;
        completed += 1;
        if !cfg.iter_sleep.is_zero() {
            thread::sleep(cfg.iter_sleep);
        }
    }

    let mine = BlockFile { rank, world, completed, start_iter, lo, values: block };
    let path = BlockFile::path(job_dir, start_iter, world, rank);
    write_atomic(&path, &mine.to_bytes()).map_err(io_err(&path))?;

    let mut outcome = ParintOutcome {
        status: if completed == cfg.outer_iters {
            ParintStatus::Completed
        } else {
            ParintStatus::Checkpointed { completed_iters: completed }
        },
        start_iter,
        rank_completed: completed,
        element_updates: updates,
        catch_up_updates: 0,
    };
    if rank == 0 {
        let (status, catch_up) = gather(cfg, job_dir, start_iter, world)?;
        outcome.status = status;
        outcome.catch_up_updates = catch_up;
    }
    Ok(outcome)
}

fn gather(cfg: &ParintConfig, job_dir: &Path, start_iter: u32, world: u32) -> Result<(ParintStatus, u64), ParintError> {
    let deadline = Instant::now() + cfg.gather_timeout;
    let paths: Vec<PathBuf> = (0..world).map(|r| BlockFile::path(job_dir, start_iter, world, r)).collect();
    while !paths.iter().all(|p| p.exists()) {
        if Instant::now() >= deadline {
            return Err(ParintError::GatherTimeout(cfg.gather_timeout));
        }
        thread::sleep(Duration::from_millis(5));
    }
    let mut blocks = Vec::with_capacity(paths.len());
    for p in &paths {
        let bytes = fs::read(p).map_err(io_err(p))?;
        blocks.push(BlockFile::from_bytes(&bytes, p)?);
    }
    let target = blocks.iter().map(|b| b.completed).max().unwrap_or(start_iter);
    let mut payload = vec![0.0f64; cfg.array_size as usize];
    let mut catch_up = 0u64;
    for b in &blocks {
        let lag = target - b.completed;
        let dst = &mut payload[b.lo as usize..b.lo as usize + b.values.len()];
        for (d, &x) in dst.iter_mut().zip(&b.values) {
            let mut v = x;
            for _ in 0..lag {
                v = parint_step(v, cfg.nloop);
            }
            *d = v;
        }
        catch_up += lag as u64 * b.values.len() as u64;
    }
    let ck = ParintCheckpoint { version: CHECKPOINT_VERSION, completed_iters: target, world_at_checkpoint: world, payload };
    let status = if target == cfg.outer_iters {
        ck.write(&cfg.output_path)?;
        if cfg.checkpoint_path.exists() {
            fs::remove_file(&cfg.checkpoint_path).map_err(io_err(&cfg.checkpoint_path))?;
        }
        ParintStatus::Completed
    } else {
        ck.write(&cfg.checkpoint_path)?;
        ParintStatus::Checkpointed { completed_iters: target }
    };
    for p in &paths {
        let _ = fs::remove_file(p);
    }
    Ok((status, catch_up))
}
