//! Workloads driven by the control plane: the PARINT benchmark, the
//! application adapters that know how to checkpoint and restart a program,
//! and small stub programs standing in for real simulation codes.

pub mod adapters;
pub mod parint;
pub mod stubs;

use std::fs;
use std::io::{self, Write};
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};

pub use adapters::{
    find_latest_restart, rewrite_restart_parameter, transform_restart_command, AdapterError, AdapterKind, AdapterSpec,
    RestartTransform,
};
pub use parint::{
    block_range, parint_run, parint_step, ParintCheckpoint, ParintConfig, ParintError, ParintOutcome, ParintStatus, RankEnv,
};

/// Environment variable carrying the rank of a workload process.
pub const ENV_RANK: &str = "KUB_RANK";
/// Environment variable carrying the world size of the current launch.
pub const ENV_WORLD_SIZE: &str = "KUB_WORLD_SIZE";
/// Environment variable naming the shared job directory.
pub const ENV_JOB_DIR: &str = "KUB_JOB_DIR";

/// Writes `bytes` to `path` through a temporary file and a rename, so readers
/// never observe a partial file.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    static SEQ: AtomicU64 = AtomicU64::new(0);
    let tmp = dir.join(format!(".{name}.tmp-{}-{}", std::process::id(), SEQ.fetch_add(1, Ordering::Relaxed)));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)
}
