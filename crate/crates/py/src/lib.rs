//! Python bindings: the speedup model, wire framing, PARINT helpers, restart
//! adapters and the experiment harness.

use std::path::PathBuf;

use elastic_core::coordinator::{is_legal_trace, JobPhase};
use elastic_core::harness::{self, ExperimentConfig, ExperimentResult};
use elastic_core::wireproto;
use elastic_core::workloads::{self, ParintCheckpoint};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyBytes;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn runtime_err(e: impl std::fmt::Display) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

/// 1 / (p + c + (1 - p) * r0 / r1)
#[pyfunction]
#[pyo3(signature = (p, r0, r1, c = 0.0))]
fn ideal_speedup(p: f64, r0: u32, r1: u32, c: f64) -> PyResult<f64> {
    harness::ideal_speedup(p, r0, r1, c).map_err(value_err)
}

/// Frames a JSON message body: 4-byte big-endian length plus canonical JSON.
#[pyfunction]
fn encode_frame<'py>(py: Python<'py>, body: &str) -> PyResult<Bound<'py, PyBytes>> {
    let msg = wireproto::decode_body(body.as_bytes()).map_err(value_err)?;
    let frame = wireproto::encode_frame(&msg).map_err(value_err)?;
    Ok(PyBytes::new(py, &frame))
}

/// Decodes one frame from the front of `data`; returns (canonical body, bytes used).
#[pyfunction]
fn decode_frame(data: &[u8]) -> PyResult<(String, usize)> {
    let (msg, used) = wireproto::decode_frame(data).map_err(value_err)?;
    Ok((wireproto::encode_body(&msg), used))
}

#[pyfunction]
fn parint_step(x: f64, nloop: u32) -> f64 {
    workloads::parint_step(x, nloop)
}

#[pyfunction]
fn block_range(array_size: u64, rank: u32, world: u32) -> PyResult<(u64, u64)> {
    if world == 0 || rank >= world {
        return Err(PyValueError::new_err(format!("rank {rank} outside world {world}")));
    }
    Ok(workloads::block_range(array_size, rank, world))
}

/// Reads a PARINT checkpoint or final file: (completed_iters, world, values).
#[pyfunction]
fn read_parint_file(path: PathBuf) -> PyResult<(u32, u32, Vec<f64>)> {
    let ck = ParintCheckpoint::read(&path).map_err(value_err)?;
    Ok((ck.completed_iters, ck.world_at_checkpoint, ck.payload))
}

#[pyfunction]
fn find_latest_restart(dir: PathBuf, prefix: &str) -> PyResult<u64> {
    workloads::find_latest_restart(&dir, prefix).map_err(value_err)
}

#[pyfunction]
fn rewrite_restart_parameter(file: PathBuf, key: &str, value: &str) -> PyResult<()> {
    workloads::rewrite_restart_parameter(&file, key, value).map_err(value_err)
}

/// True when the phase names form a legal job history.
#[pyfunction]
fn legal_trace(phases: Vec<String>) -> PyResult<bool> {
    let parsed = phases
        .iter()
        .map(|p| JobPhase::parse(p).ok_or_else(|| PyValueError::new_err(format!("unknown phase {p:?}"))))
        .collect::<PyResult<Vec<_>>>()?;
    Ok(is_legal_trace(&parsed))
}

fn rows_to_json(rows: &[ExperimentResult]) -> String {
    serde_json::to_string(rows).expect("rows serialize")
}

/// Runs the scaling matrix described by a JSON config; returns the rows as JSON.
/// Needs the agent, coordinator and workload executables (see ELASTIC_BIN_DIR).
#[pyfunction]
fn run_scaling_matrix(py: Python<'_>, config_json: &str, out: PathBuf) -> PyResult<String> {
    let cfg: ExperimentConfig = serde_json::from_str(config_json).map_err(value_err)?;
    let rows = py.detach(|| harness::run_scaling_matrix(&cfg, &out)).map_err(runtime_err)?;
    Ok(rows_to_json(&rows))
}

#[pymodule]
fn elastic(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(ideal_speedup, m)?)?;
    m.add_function(wrap_pyfunction!(encode_frame, m)?)?;
    m.add_function(wrap_pyfunction!(decode_frame, m)?)?;
    m.add_function(wrap_pyfunction!(parint_step, m)?)?;
    m.add_function(wrap_pyfunction!(block_range, m)?)?;
    m.add_function(wrap_pyfunction!(read_parint_file, m)?)?;
    m.add_function(wrap_pyfunction!(find_latest_restart, m)?)?;
    m.add_function(wrap_pyfunction!(rewrite_restart_parameter, m)?)?;
    m.add_function(wrap_pyfunction!(legal_trace, m)?)?;
    m.add_function(wrap_pyfunction!(run_scaling_matrix, m)?)?;
    m.add("CSV_HEADER", harness::CSV_HEADER)?;
    Ok(())
}
