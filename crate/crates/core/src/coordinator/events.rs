//! Append-only JSON-lines log of coordinator events. One object per line,
//! each with `ts` (microseconds since the Unix epoch) and `kind`.

use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value as Json};

use super::state::{ExecutorRecord, JobPhase};

pub const EVENT_LOG_NAME: &str = "job-events.log";

/// Timings of one completed scaling round, in seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub index: u32,
    pub from_world: u32,
    pub to_world: u32,
    /// Scaling until Checkpointing.
    pub checkpoint_s: f64,
    /// Checkpointing until Relaunching (waiting for new executors).
    pub provision_wait_s: f64,
    /// Relaunching until Running.
    pub relaunch_s: f64,
    pub total_s: f64,
}

pub fn now_micros() -> i64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_micros() as i64).unwrap_or(0)
}

pub struct EventLog {
    file: Option<File>,
    entries: Vec<Json>,
}

impl EventLog {
    /// In-memory only.
    pub fn memory() -> EventLog {
        EventLog { file: None, entries: Vec::new() }
    }

    /// Truncates `dir/job-events.log` and mirrors every event into it.
    pub fn create(dir: &Path) -> io::Result<EventLog> {
        let file = OpenOptions::new().create(true).write(true).truncate(true).open(dir.join(EVENT_LOG_NAME))?;
        Ok(EventLog { file: Some(file), entries: Vec::new() })
    }

    pub fn entries(&self) -> &[Json] {
        &self.entries
    }

    fn push(&mut self, kind: &str, mut body: Json) {
        body["ts"] = json!(now_micros());
        body["kind"] = json!(kind);
        if let Some(f) = self.file.as_mut() {
            let line = serde_json::to_string(&body).expect("event serializes");
            if let Err(e) = writeln!(f, "{line}") {
                log::warn!("event log write failed: {e}");
            }
        }
        self.entries.push(body);
    }

    pub fn transition(&mut self, from: JobPhase, to: JobPhase, reason: &str) {
        log::info!("phase {from} -> {to} ({reason})");
        self.push("transition", json!({"phase_from": from.as_str(), "phase_to": to.as_str(), "reason": reason}));
    }

    pub fn rpc(&mut self, method: &str, detail: &str) {
        self.push("rpc", json!({"method": method, "detail": detail}));
    }

    pub fn launch(&mut self, epoch: u32, world: u32, restart: bool) {
        self.push("launch", json!({"epoch": epoch, "world": world, "restart": restart}));
    }

    pub fn registry(&mut self, registry: &[ExecutorRecord]) {
        let hosts: Vec<Json> = registry
            .iter()
            .map(|r| json!({"node_name": r.node_name, "rank": r.rank, "address": r.address}))
            .collect();
        self.push("registry", json!({"hosts": hosts}));
    }

    pub fn round(&mut self, r: &RoundRecord) {
        self.push("round", serde_json::to_value(r).expect("round serializes"));
    }
}

/// Reads a log written by [`EventLog::create`]. Unparsable lines are skipped.
pub fn read_events(path: &Path) -> io::Result<Vec<Json>> {
    let f = File::open(path)?;
    Ok(BufReader::new(f).lines().map_while(Result::ok).filter_map(|l| serde_json::from_str(&l).ok()).collect())
}

pub fn event_log_path(dir: &Path) -> PathBuf {
    dir.join(EVENT_LOG_NAME)
}

/// `(ts, from, to)` for every transition in `events`.
pub fn transitions_of(events: &[Json]) -> Vec<(i64, JobPhase, JobPhase)> {
    events
        .iter()
        .filter(|e| e["kind"] == "transition")
        .filter_map(|e| {
            let from = JobPhase::parse(e["phase_from"].as_str()?)?;
            let to = JobPhase::parse(e["phase_to"].as_str()?)?;
            Some((e["ts"].as_i64()?, from, to))
        })
        .collect()
}

/// Timestamp of the first transition into `to`.
pub fn first_entry(events: &[Json], to: JobPhase) -> Option<i64> {
    transitions_of(events).into_iter().find(|t| t.2 == to).map(|t| t.0)
}

/// Removes a stale log, if any.
pub fn clear(dir: &Path) {
    let _ = fs::remove_file(event_log_path(dir));
}
