//! Python bindings. Structured results cross the boundary as plain dicts.

use std::path::PathBuf;

use pyo3::exceptions::{PyConnectionError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyBytes;
use serde::Serialize;

use aquasem::backends::{BackendEndpoint, MockEmbedder, Providers};
use aquasem::experiment::{self, BackendsConfig, SweepConfig};
use aquasem::imagecore::{self, ImageBuffer};
use aquasem::linkmath;
use aquasem::metrics;
use aquasem::pipeline::{self, TrialCache, TrialInput, TrialStatus};
use aquasem::report;
use aquasem::text_channel::{self, ErrorSpec, ErrorType};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Serializes through JSON so Python sees the same shape as the CLI output.
fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(value_err)?;
    py.import("json")?.call_method1("loads", (text,))
}

fn error_type(code: u8) -> PyResult<ErrorType> {
    ErrorType::try_from(code).map_err(value_err)
}

/// An 8-bit gray (1 channel) or RGB (3 channel) image.
#[pyclass(name = "Image", module = "aquasem_py", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct PyImage {
    inner: ImageBuffer,
}

#[pymethods]
impl PyImage {
    #[new]
    fn new(width: usize, height: usize, channels: usize, data: &[u8]) -> PyResult<Self> {
        let inner = ImageBuffer::new(width, height, channels, data.to_vec()).map_err(value_err)?;
        Ok(Self { inner })
    }

    /// Reads a PPM/PGM (or PNG) file.
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let inner = imagecore::load_image(&path).map_err(value_err)?;
        Ok(Self { inner })
    }

    /// The deterministic synthetic test image with the given index.
    #[staticmethod]
    fn synthetic(index: usize, width: usize, height: usize) -> Self {
        Self {
            inner: experiment::synthetic_image(index, width, height),
        }
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        imagecore::save_image(&path, &self.inner).map_err(value_err)
    }

    fn to_ppm<'py>(&self, py: Python<'py>) -> Bound<'py, PyBytes> {
        PyBytes::new(py, &imagecore::write_ppm(&self.inner))
    }

    #[staticmethod]
    fn from_ppm(data: &[u8]) -> PyResult<Self> {
        let inner = imagecore::read_ppm(data).map_err(value_err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn width(&self) -> usize {
        self.inner.width()
    }

    #[getter]
    fn height(&self) -> usize {
        self.inner.height()
    }

    #[getter]
    fn channels(&self) -> usize {
        self.inner.channels()
    }

    /// Row-major interleaved samples.
    #[getter]
    fn data<'py>(&self, py: Python<'py>) -> Bound<'py, PyBytes> {
        PyBytes::new(py, self.inner.samples())
    }

    fn __eq__(&self, other: &Self) -> bool {
        self.inner == other.inner
    }

    fn __repr__(&self) -> String {
        format!("Image({}x{}, channels={})", self.inner.width(), self.inner.height(), self.inner.channels())
    }
}

#[pyfunction]
fn sanitize(text: &str) -> String {
    text_channel::sanitize(text).into_string()
}

/// Corrupts the sanitized `text`; returns the outcome as a dict.
#[pyfunction]
fn corrupt<'py>(py: Python<'py>, text: &str, error_type_code: u8, ratio: f64, seed: u64) -> PyResult<Bound<'py, PyAny>> {
    let spec = ErrorSpec::new(error_type(error_type_code)?, ratio, seed).map_err(value_err)?;
    let out = text_channel::corrupt(&text_channel::sanitize(text), &spec).map_err(value_err)?;
    to_py(py, &out)
}

/// `(lower, upper)` bit error rate for a character error rate.
#[pyfunction]
#[pyo3(signature = (cer, bits_per_char = linkmath::DEFAULT_BITS_PER_CHAR))]
fn ber_bounds(cer: f64, bits_per_char: u32) -> PyResult<(f64, f64)> {
    let b = linkmath::ber_bounds(cer, bits_per_char).map_err(value_err)?;
    Ok((b.lower, b.upper))
}

#[pyfunction]
fn payload_stats<'py>(py: Python<'py>, image_bytes: u64, text: &str) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &linkmath::payload_stats(image_bytes, &text_channel::sanitize(text)))
}

#[pyfunction]
fn mse(a: &PyImage, b: &PyImage) -> PyResult<f64> {
    metrics::mse(&a.inner, &b.inner).map_err(value_err)
}

/// PSNR in dB; `inf` for identical images.
#[pyfunction]
fn psnr(a: &PyImage, b: &PyImage) -> PyResult<f64> {
    metrics::psnr(&a.inner, &b.inner).map_err(value_err)
}

#[pyfunction]
fn ssim(a: &PyImage, b: &PyImage) -> PyResult<f64> {
    metrics::ssim(&a.inner, &b.inner).map_err(value_err)
}

/// PSNR, SSIM and CLIPScore using the offline mock embedder.
#[pyfunction]
fn compare<'py>(py: Python<'py>, a: &PyImage, b: &PyImage) -> PyResult<Bound<'py, PyAny>> {
    let report = metrics::compare(&a.inner, &b.inner, &MockEmbedder).map_err(value_err)?;
    to_py(py, &report)
}

fn providers_for(backend_url: Option<String>, token: Option<String>) -> PyResult<Providers> {
    match backend_url {
        None => Ok(Providers::mock()),
        Some(url) => {
            let mut ep = BackendEndpoint::new(url);
            ep.auth_token = token;
            Providers::http(ep).map_err(value_err)
        }
    }
}

/// One caption, corrupt, generate, score trial. Uses the mock providers
/// unless `backend_url` names a model server.
#[pyfunction]
#[pyo3(signature = (image, error_type_code, ratio, seed, gen_seed = 0, width = 64, height = 64, control = None, backend_url = None, token = None))]
#[allow(clippy::too_many_arguments)]
fn run_trial<'py>(
    py: Python<'py>,
    image: &PyImage,
    error_type_code: u8,
    ratio: f64,
    seed: u64,
    gen_seed: u64,
    width: usize,
    height: usize,
    control: Option<PyRef<'py, PyImage>>,
    backend_url: Option<String>,
    token: Option<String>,
) -> PyResult<Bound<'py, PyAny>> {
    let providers = providers_for(backend_url, token)?;
    let control = match control {
        Some(c) => c.inner.clone(),
        None => pipeline::builtin_control(pipeline::CONTROL_SIDE, pipeline::CONTROL_SIDE),
    };
    let input = TrialInput {
        image_id: "image",
        original: &image.inner,
        control: &control,
        spec: ErrorSpec::new(error_type(error_type_code)?, ratio, seed).map_err(value_err)?,
        gen_seed,
        gen_width: width,
        gen_height: height,
    };
    let record = py.detach(|| pipeline::run_trial(&input, &providers, &TrialCache::new()));
    if let TrialStatus::Failed { unreachable: true, message, .. } = &record.status {
        return Err(PyConnectionError::new_err(message.clone()));
    }
    to_py(py, &record)
}

/// The default error types, ratios and generations per caption.
#[pyfunction]
fn default_grid<'py>(py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &experiment::default_grid())
}

/// Runs a sweep from a JSON configuration string and writes its CSV files.
/// `mock=True` forces the offline providers. Returns a summary dict.
#[pyfunction]
#[pyo3(signature = (config_json, mock = false, jobs = None))]
fn run_sweep<'py>(py: Python<'py>, config_json: &str, mock: bool, jobs: Option<usize>) -> PyResult<Bound<'py, PyAny>> {
    let mut cfg: SweepConfig = serde_json::from_str(config_json).map_err(value_err)?;
    if mock {
        cfg.backends = BackendsConfig::Mock;
    }
    let providers = cfg.backends.providers().map_err(value_err)?;
    let outcome = py
        .detach(|| experiment::run_sweep(&cfg, &providers, jobs))
        .map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    to_py(
        py,
        &serde_json::json!({
            "output_dir": cfg.output_dir,
            "records": outcome.records.len(),
            "failed": outcome.failed,
            "caption_calls": outcome.caption_calls,
            "resumed_cells": outcome.resumed_cells,
            "unreachable": outcome.unreachable,
        }),
    )
}

/// Renders the SVG charts for an aggregates.csv into `out_dir`.
#[pyfunction]
fn render_report<'py>(py: Python<'py>, aggregates_csv: PathBuf, out_dir: PathBuf) -> PyResult<Bound<'py, PyAny>> {
    let rows = report::read_aggregates_csv(&aggregates_csv).map_err(value_err)?;
    let manifest = report::render_all(&rows, &out_dir).map_err(value_err)?;
    to_py(py, &manifest)
}

#[pymodule]
fn aquasem_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyImage>()?;
    m.add_function(wrap_pyfunction!(sanitize, m)?)?;
    m.add_function(wrap_pyfunction!(corrupt, m)?)?;
    m.add_function(wrap_pyfunction!(ber_bounds, m)?)?;
    m.add_function(wrap_pyfunction!(payload_stats, m)?)?;
    m.add_function(wrap_pyfunction!(mse, m)?)?;
    m.add_function(wrap_pyfunction!(psnr, m)?)?;
    m.add_function(wrap_pyfunction!(ssim, m)?)?;
    m.add_function(wrap_pyfunction!(compare, m)?)?;
    m.add_function(wrap_pyfunction!(run_trial, m)?)?;
    m.add_function(wrap_pyfunction!(default_grid, m)?)?;
    m.add_function(wrap_pyfunction!(run_sweep, m)?)?;
    m.add_function(wrap_pyfunction!(render_report, m)?)?;
    Ok(())
}
