//! Python bindings. Results come back as plain dicts, lists and numbers.

use std::path::PathBuf;

use mcam_core::acquisition::{self, DataPath};
use mcam_core::array_model::{classify_axis, design_report, StepMode};
use mcam_core::pipeline::{self, Mode, Overrides};
use mcam_core::presets::Preset;
use mcam_core::{Length, McamError};
use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};
use pyo3::IntoPyObjectExt;
use serde_json::Value;

fn py_err(e: McamError) -> PyErr {
    match e {
        McamError::Io { .. } | McamError::Image { .. } => PyOSError::new_err(e.to_string()),
        McamError::Disconnected(_) | McamError::Degenerate(_) | McamError::Render(_) => {
            PyRuntimeError::new_err(e.to_string())
        }
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn to_py<'py>(py: Python<'py>, v: &Value) -> PyResult<Bound<'py, PyAny>> {
    Ok(match v {
        Value::Null => py.None().into_bound(py),
        Value::Bool(b) => b.into_bound_py_any(py)?,
        Value::Number(n) => match (n.as_u64(), n.as_i64()) {
            (Some(u), _) => u.into_bound_py_any(py)?,
            (_, Some(i)) => i.into_bound_py_any(py)?,
            _ => n.as_f64().unwrap_or(f64::NAN).into_bound_py_any(py)?,
        },
        Value::String(s) => s.into_bound_py_any(py)?,
        Value::Array(items) => {
            let list = PyList::empty(py);
            for item in items {
                list.append(to_py(py, item)?)?;
            }
            list.into_any()
        }
        Value::Object(map) => {
            let dict = PyDict::new(py);
            for (k, item) in map {
                dict.set_item(k, to_py(py, item)?)?;
            }
            dict.into_any()
        }
    })
}

fn preset(name: &str) -> PyResult<Preset> {
    Preset::from_name(name).map_err(py_err)
}

/// Design table of a preset, optionally at another magnification.
#[pyfunction]
#[pyo3(signature = (preset_name = "multi_view", magnification = None))]
fn design<'py>(py: Python<'py>, preset_name: &str, magnification: Option<f64>) -> PyResult<Bound<'py, PyAny>> {
    let mut cfg = preset(preset_name)?.config();
    if let Some(m) = magnification {
        cfg = cfg.with_magnification(m).map_err(py_err)?;
    }
    let report = serde_json::to_value(design_report(&cfg)).map_err(|e| py_err(e.into()))?;
    to_py(py, &report)
}

/// Regime name of one axis (`tiled`, `continuous` or `multi_view`).
#[pyfunction]
fn regime(sensor_width_um: f64, pitch_um: f64, magnification: f64) -> PyResult<&'static str> {
    let cov = classify_axis(Length::um(sensor_width_um), Length::um(pitch_um), magnification).map_err(py_err)?;
    Ok(cov.regime.name())
}

/// Bytes of one synchronous frame of all cameras.
#[pyfunction]
#[pyo3(signature = (preset_name = "multi_view", n_cameras = None, binning = 1, crop = None))]
fn frame_bytes(preset_name: &str, n_cameras: Option<usize>, binning: usize, crop: Option<(usize, usize)>) -> PyResult<u64> {
    let cfg = preset(preset_name)?.config();
    let n = n_cameras.unwrap_or(cfg.layout.camera_count());
    acquisition::frame_bytes(&cfg.sensor, n, binning, crop).map_err(py_err)
}

/// Frame size, frame rate and buffer duration.
#[pyfunction]
#[pyo3(signature = (preset_name = "multi_view", binning = 1, crop = None, efficiency = 1.0, bandwidth_gb_per_s = 5.0, buffer_gb = 128.0))]
fn throughput<'py>(
    py: Python<'py>,
    preset_name: &str,
    binning: usize,
    crop: Option<(usize, usize)>,
    efficiency: f64,
    bandwidth_gb_per_s: f64,
    buffer_gb: f64,
) -> PyResult<Bound<'py, PyAny>> {
    let cfg = preset(preset_name)?.config();
    let path = DataPath {
        bandwidth_bytes_per_s: bandwidth_gb_per_s * 1e9,
        buffer_bytes: buffer_gb * 1e9,
        efficiency,
    };
    let r = acquisition::throughput_report(&cfg.sensor, cfg.layout.camera_count(), binning, crop, path).map_err(py_err)?;
    to_py(py, &serde_json::to_value(r).map_err(|e| py_err(e.into()))?)
}

/// Stage positions `(dx_um, dy_um)` of a tiled scan in visiting order.
#[pyfunction]
#[pyo3(signature = (preset_name = "tiled", overlap = 0.1, per_axis = false, serpentine = true))]
fn scan_plan(preset_name: &str, overlap: f64, per_axis: bool, serpentine: bool) -> PyResult<Vec<(f64, f64)>> {
    let cfg = preset(preset_name)?.config();
    let mode = if per_axis { StepMode::PerAxis } else { StepMode::UniformShortAxis };
    let plan = acquisition::plan_tiled_scan(&cfg, overlap, mode, serpentine).map_err(py_err)?;
    Ok(plan.lateral_offsets.iter().map(|(x, y)| (x.as_um(), y.as_um())).collect())
}

/// Run one mode from a JSON configuration string. Keyword arguments take
/// precedence over the document, as on the command line.
#[pyfunction]
#[pyo3(signature = (config = "{}", mode = None, out = None, seed = None, preset_name = None, threads = None))]
fn run<'py>(
    py: Python<'py>,
    config: &str,
    mode: Option<&str>,
    out: Option<PathBuf>,
    seed: Option<u64>,
    preset_name: Option<String>,
    threads: Option<usize>,
) -> PyResult<Bound<'py, PyAny>> {
    let mode = match mode {
        Some(m) => Some(Mode::from_name(m).ok_or_else(|| PyValueError::new_err(format!("unknown mode {m:?}")))?),
        None => None,
    };
    let overrides = Overrides {
        mode,
        preset: preset_name,
        output_dir: out,
        seed,
        threads,
        ..Default::default()
    };
    let cfg = pipeline::validate_config(Some(config), &overrides).map_err(py_err)?;
    let summary = py.detach(|| pipeline::run(&cfg)).map_err(py_err)?;
    to_py(py, &serde_json::to_value(summary).map_err(|e| py_err(e.into()))?)
}

#[pymodule]
pub fn mcam(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(design, m)?)?;
    m.add_function(wrap_pyfunction!(regime, m)?)?;
    m.add_function(wrap_pyfunction!(frame_bytes, m)?)?;
    m.add_function(wrap_pyfunction!(throughput, m)?)?;
    m.add_function(wrap_pyfunction!(scan_plan, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
