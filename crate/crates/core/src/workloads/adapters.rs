//! Application adapters: how a workload is asked to checkpoint and how its
//! command or input files change when it restarts.
//!
//! Two restart styles are covered. Programs that take a restart flag on the
//! command line get it appended (`AppendFlag`). Programs driven by an input
//! file get a parameter rewritten to point at the newest restart file found in
//! the working directory (`EditParameter`).

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::write_atomic;
use crate::signals::signal_number;

#[derive(Debug, thiserror::Error)]
pub enum AdapterError {
    #[error("no file starting with {prefix:?} followed by digits in {dir}")]
    NoCheckpointFound { dir: PathBuf, prefix: String },
    #[error("key {key:?} not found in {file}")]
    KeyNotFound { file: PathBuf, key: String },
    #[error("key {key:?} assigned {count} times in {file}")]
    AmbiguousKey { file: PathBuf, key: String, count: usize },
    #[error("unknown adapter {0:?}")]
    UnknownAdapter(String),
    #[error("unknown checkpoint signal {0:?}")]
    UnknownSignal(String),
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AdapterKind {
    /// The program checkpoints and exits when signalled.
    SignalExit,
    /// The program writes restart files on its own; a restart edits its input.
    RestartFileEdit,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum RestartTransform {
    /// Restart with the same command (the program finds its own checkpoint).
    None,
    /// Append these tokens to the command once.
    AppendFlag { tokens: Vec<String> },
    /// Set `key = <latest ordinal>` in `file`, where the ordinal comes from
    /// the newest `<prefix><digits>` file in the working directory.
    EditParameter { file: PathBuf, key: String, prefix: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdapterSpec {
    pub id: String,
    pub kind: AdapterKind,
    pub checkpoint_signal: String,
    pub restart_transform: RestartTransform,
}

impl AdapterSpec {
    /// PARINT: SIGUSR1, the program reloads its own checkpoint file.
    pub fn parint() -> AdapterSpec {
        AdapterSpec {
            id: "parint".into(),
            kind: AdapterKind::SignalExit,
            checkpoint_signal: "SIGUSR1".into(),
            restart_transform: RestartTransform::None,
        }
    }

    /// SIGTERM makes the program write its state; restart appends `tokens`.
    pub fn sigterm_flag(tokens: Vec<String>) -> AdapterSpec {
        AdapterSpec {
            id: "sigterm-flag".into(),
            kind: AdapterKind::SignalExit,
            checkpoint_signal: "SIGTERM".into(),
            restart_transform: RestartTransform::AppendFlag { tokens },
        }
    }

    /// Periodic restart files; SIGTERM stops the program, restart rewrites
    /// `key` in `file` to the newest `<prefix>NNNN` ordinal.
    pub fn restart_file_edit(file: impl Into<PathBuf>, key: &str, prefix: &str) -> AdapterSpec {
        AdapterSpec {
            id: "restart-file-edit".into(),
            kind: AdapterKind::RestartFileEdit,
            checkpoint_signal: "SIGTERM".into(),
            restart_transform: RestartTransform::EditParameter {
                file: file.into(),
                key: key.into(),
                prefix: prefix.into(),
            },
        }
    }

    /// The built-in adapter named `id`, with its default parameters.
    pub fn preset(id: &str) -> Result<AdapterSpec, AdapterError> {
        match id {
            "parint" => Ok(AdapterSpec::parint()),
            "sigterm-flag" => Ok(AdapterSpec::sigterm_flag(vec!["--resume".into()])),
            "restart-file-edit" => Ok(AdapterSpec::restart_file_edit("namelist.input", "irst", "cm1rst_")),
            other => Err(AdapterError::UnknownAdapter(other.into())),
        }
    }

    pub fn validate(&self) -> Result<(), AdapterError> {
        if signal_number(&self.checkpoint_signal).is_none() {
            return Err(AdapterError::UnknownSignal(self.checkpoint_signal.clone()));
        }
        Ok(())
    }
}

fn leading_ordinal(name: &str, prefix: &str) -> Option<u64> {
    let rest = name.strip_prefix(prefix)?;
    let digits: &str = &rest[..rest.bytes().take_while(u8::is_ascii_digit).count()];
    if digits.is_empty() {
        return None;
    }
    digits.parse().ok()
}

/// Largest ordinal among files named `<prefix><digits>...` in `dir`.
pub fn find_latest_restart(dir: &Path, prefix: &str) -> Result<u64, AdapterError> {
    let entries = fs::read_dir(dir).map_err(|source| AdapterError::Io { path: dir.to_path_buf(), source })?;
    entries
        .filter_map(|e| e.ok())
        .filter_map(|e| leading_ordinal(&e.file_name().to_string_lossy(), prefix))
        .max()
        .ok_or_else(|| AdapterError::NoCheckpointFound { dir: dir.to_path_buf(), prefix: prefix.into() })
}

/// Splits an assignment line `  key = value,` into indentation, value and a
/// trailing comma if `key` is exactly the assigned name.
fn match_assignment<'a>(line: &'a str, key: &str) -> Option<(&'a str, bool)> {
    let body = line.trim_end_matches(['\r']);
    let trimmed = body.trim_start();
    let indent = &body[..body.len() - trimmed.len()];
    let rest = trimmed.strip_prefix(key)?;
    let rest = rest.trim_start();
    let value = rest.strip_prefix('=')?;
    Some((indent, value.trim_end().ends_with(',')))
}

/// Rewrites the single `key = ...` line of `file` to `key = value`, keeping
/// its indentation, a trailing namelist comma, and every other byte.
pub fn rewrite_restart_parameter(file: &Path, key: &str, value: &str) -> Result<(), AdapterError> {
    let io_err = |source| AdapterError::Io { path: file.to_path_buf(), source };
    let text = fs::read_to_string(file).map_err(io_err)?;
    let lines: Vec<&str> = text.split_inclusive('\n').collect();
    let hits: Vec<usize> = lines
        .iter()
        .enumerate()
        .filter(|(_, l)| match_assignment(l.trim_end_matches('\n'), key).is_some())
        .map(|(i, _)| i)
        .collect();
    match hits.len() {
        0 => return Err(AdapterError::KeyNotFound { file: file.to_path_buf(), key: key.into() }),
        1 => {}
        count => return Err(AdapterError::AmbiguousKey { file: file.to_path_buf(), key: key.into(), count }),
    }
    let idx = hits[0];
    let line = lines[idx];
    let newline = &line[line.trim_end_matches(['\n', '\r']).len()..];
    let (indent, comma) = match_assignment(line.trim_end_matches('\n'), key).expect("matched above");
    let replaced = format!("{indent}{key} = {value}{}{newline}", if comma { "," } else { "" });
    let mut out = String::with_capacity(text.len() + value.len());
    for (i, l) in lines.iter().enumerate() {
        out.push_str(if i == idx { &replaced } else { l });
    }
    write_atomic(file, out.as_bytes()).map_err(io_err)
}

/// Produces the restart command for `adapter`. `EditParameter` edits its file
/// under `working_dir` and leaves the command alone.
pub fn transform_restart_command(
    cmd: &[String],
    adapter: &AdapterSpec,
    working_dir: &Path,
) -> Result<Vec<String>, AdapterError> {
    match &adapter.restart_transform {
        RestartTransform::None => Ok(cmd.to_vec()),
        RestartTransform::AppendFlag { tokens } => {
            if !tokens.is_empty() && cmd.ends_with(tokens) {
                return Ok(cmd.to_vec());
            }
            Ok(cmd.iter().chain(tokens).cloned().collect())
        }
        RestartTransform::EditParameter { file, key, prefix } => {
            let ordinal = find_latest_restart(working_dir, prefix)?;
            rewrite_restart_parameter(&working_dir.join(file), key, &ordinal.to_string())?;
            Ok(cmd.to_vec())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn touch(dir: &Path, names: &[&str]) {
        for n in names {
            fs::write(dir.join(n), b"").unwrap();
        }
    }

    #[test]
    fn latest_restart() {
        let d = tempfile::tempdir().unwrap();
        touch(d.path(), &["cm1rst_000001", "cm1rst_000003"]);
        assert_eq!(find_latest_restart(d.path(), "cm1rst_").unwrap(), 3);

        let d = tempfile::tempdir().unwrap();
        touch(d.path(), &["cm1rst_000002", "other.txt", "cm1rst_.nc", "xcm1rst_000009"]);
        assert_eq!(find_latest_restart(d.path(), "cm1rst_").unwrap(), 2);

        let d = tempfile::tempdir().unwrap();
        touch(d.path(), &["cm1rst_000010_w.dat", "cm1rst_000009"]);
        assert_eq!(find_latest_restart(d.path(), "cm1rst_").unwrap(), 10);

        let d = tempfile::tempdir().unwrap();
        assert!(matches!(find_latest_restart(d.path(), "cm1rst_"), Err(AdapterError::NoCheckpointFound { .. })));
    }

    #[test]
    fn rewrite_plain_line() {
        let d = tempfile::tempdir().unwrap();
        let f = d.path().join("namelist.input");
        fs::write(&f, "&param1\nirst = 0\n/\n").unwrap();
        rewrite_restart_parameter(&f, "irst", "1").unwrap();
        assert_eq!(fs::read_to_string(&f).unwrap(), "&param1\nirst = 1\n/\n");
    }

    #[test]
    fn rewrite_keeps_indent_comma_and_neighbours() {
        let d = tempfile::tempdir().unwrap();
        let f = d.path().join("namelist.input");
        let before = " &param2\r\n irst      =  0,\r\n irst2 = 7,\r\n rstnum = 1,\r\n /";
        fs::write(&f, before).unwrap();
        rewrite_restart_parameter(&f, "irst", "5").unwrap();
        assert_eq!(fs::read_to_string(&f).unwrap(), " &param2\r\n irst = 5,\r\n irst2 = 7,\r\n rstnum = 1,\r\n /");
    }

    #[test]
    fn rewrite_errors() {
        let d = tempfile::tempdir().unwrap();
        let f = d.path().join("n");
        fs::write(&f, "a = 1\n").unwrap();
        assert!(matches!(rewrite_restart_parameter(&f, "irst", "1"), Err(AdapterError::KeyNotFound { .. })));
        fs::write(&f, "irst = 1\nirst=2\n").unwrap();
        assert!(matches!(
            rewrite_restart_parameter(&f, "irst", "1"),
            Err(AdapterError::AmbiguousKey { count: 2, .. })
        ));
        // untouched on error
        assert_eq!(fs::read_to_string(&f).unwrap(), "irst = 1\nirst=2\n");
    }

    #[test]
    fn append_flag_is_idempotent() {
        let adapter = AdapterSpec::sigterm_flag(vec!["--resume".into(), "state.ckpt".into()]);
        let cmd: Vec<String> = vec!["app".into(), "run".into()];
        let once = transform_restart_command(&cmd, &adapter, Path::new(".")).unwrap();
        assert_eq!(once, ["app", "run", "--resume", "state.ckpt"]);
        let twice = transform_restart_command(&once, &adapter, Path::new(".")).unwrap();
        assert_eq!(twice, once);
    }

    #[test]
    fn edit_parameter_transform() {
        let d = tempfile::tempdir().unwrap();
        touch(d.path(), &["cm1rst_000002", "cm1rst_000005"]);
        fs::write(d.path().join("namelist.input"), " irst = 0,\n").unwrap();
        let adapter = AdapterSpec::preset("restart-file-edit").unwrap();
        let cmd: Vec<String> = vec!["cm1.exe".into()];
        assert_eq!(transform_restart_command(&cmd, &adapter, d.path()).unwrap(), cmd);
        assert_eq!(fs::read_to_string(d.path().join("namelist.input")).unwrap(), " irst = 5,\n");
    }

    #[test]
    fn presets() {
        for id in ["parint", "sigterm-flag", "restart-file-edit"] {
            let a = AdapterSpec::preset(id).unwrap();
            assert_eq!(a.id, id);
            a.validate().unwrap();
        }
        assert_eq!(AdapterSpec::parint().checkpoint_signal, "SIGUSR1");
        assert!(AdapterSpec::preset("gromacs").is_err());
        let json = serde_json::to_string(&AdapterSpec::preset("sigterm-flag").unwrap()).unwrap();
        let back: AdapterSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(back, AdapterSpec::preset("sigterm-flag").unwrap());
    }
}
