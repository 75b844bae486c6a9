//! Locates the crate's executables (`agent`, `coordinator`, `parint`, ...).

use std::env;
use std::path::PathBuf;

/// Overrides the directory searched for executables.
pub const BIN_DIR_ENV: &str = "ELASTIC_BIN_DIR";

/// Directory holding the executables: `$ELASTIC_BIN_DIR`, else the directory
/// of the running executable, else its parent (test binaries live in `deps/`).
pub fn bin_dir() -> PathBuf {
    if let Some(d) = env::var_os(BIN_DIR_ENV) {
        return PathBuf::from(d);
    }
    let exe = env::current_exe().unwrap_or_default();
    let dir = exe.parent().map(PathBuf::from).unwrap_or_default();
    if dir.join(exe_name("agent")).exists() {
        return dir;
    }
    match dir.parent() {
        Some(p) if p.join(exe_name("agent")).exists() => p.to_path_buf(),
        _ => dir,
    }
}

fn exe_name(name: &str) -> String {
    format!("{name}{}", env::consts::EXE_SUFFIX)
}

pub fn bin_path(name: &str) -> PathBuf {
    bin_dir().join(exe_name(name))
}
