use std::path::PathBuf;

use hbf_core::complexity::{complexity_estimate, reference_inputs};
use hbf_core::experiment::{run_experiment, ExperimentSpec};
use hbf_core::{
    alternating_optimize, fd_baseline, initialize, AlgorithmVariant, ExitReason, HbfError,
    InitStrategy,
};
use num_complex::Complex64;
use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn to_py(err: HbfError) -> PyErr {
    match err {
        HbfError::Io { .. } => PyIOError::new_err(err.to_string()),
        e if e.is_invariant_abort() => PyRuntimeError::new_err(e.to_string()),
        e => PyValueError::new_err(e.to_string()),
    }
}

fn parse_variant(name: &str) -> PyResult<AlgorithmVariant> {
    name.parse::<AlgorithmVariant>()
        .map_err(|e| PyValueError::new_err(e.to_string()))
}

fn parse_init(name: &str) -> PyResult<InitStrategy> {
    match name {
        "random" => Ok(InitStrategy::RandomIni),
        "mmse" => Ok(InitStrategy::MmseIni),
        other => Err(PyValueError::new_err(format!(
            "unknown init strategy '{other}' (expected 'random' or 'mmse')"
        ))),
    }
}

/// System geometry and SNR. Unspecified fields take the library defaults.
#[pyclass(name = "SystemConfig", from_py_object)]
#[derive(Clone)]
struct PySystemConfig {
    inner: hbf_core::SystemConfig,
}

#[pymethods]
impl PySystemConfig {
    #[new]
    #[pyo3(signature = (n_tx=None, n_rx=None, n_tx_rf=None, n_rx_rf=None, n_streams=None, n_subcarriers=None, snr_db=None, seed=None))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        n_tx: Option<usize>,
        n_rx: Option<usize>,
        n_tx_rf: Option<usize>,
        n_rx_rf: Option<usize>,
        n_streams: Option<usize>,
        n_subcarriers: Option<usize>,
        snr_db: Option<f64>,
        seed: Option<u64>,
    ) -> PyResult<Self> {
        let d = hbf_core::SystemConfig::default();
        let inner = hbf_core::SystemConfig {
            n_tx: n_tx.unwrap_or(d.n_tx),
            n_rx: n_rx.unwrap_or(d.n_rx),
            n_tx_rf: n_tx_rf.unwrap_or(d.n_tx_rf),
            n_rx_rf: n_rx_rf.unwrap_or(d.n_rx_rf),
            n_streams: n_streams.unwrap_or(d.n_streams),
            n_subcarriers: n_subcarriers.unwrap_or(d.n_subcarriers),
            snr_db: snr_db.unwrap_or(d.snr_db),
            seed: seed.unwrap_or(d.seed),
            ..d
        };
        inner.validate().map_err(to_py)?;
        Ok(Self { inner })
    }

    #[getter]
    fn n_tx(&self) -> usize {
        self.inner.n_tx
    }

    #[getter]
    fn n_rx(&self) -> usize {
        self.inner.n_rx
    }

    #[getter]
    fn n_tx_rf(&self) -> usize {
        self.inner.n_tx_rf
    }

    #[getter]
    fn n_rx_rf(&self) -> usize {
        self.inner.n_rx_rf
    }

    #[getter]
    fn n_streams(&self) -> usize {
        self.inner.n_streams
    }

    #[getter]
    fn n_subcarriers(&self) -> usize {
        self.inner.n_subcarriers
    }

    #[getter]
    fn snr_db(&self) -> f64 {
        self.inner.snr_db
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    fn noise_var(&self) -> f64 {
        self.inner.noise_var()
    }

    fn with_snr_db(&self, snr_db: f64) -> PyResult<Self> {
        let inner = self.inner.with_snr_db(snr_db);
        inner.validate().map_err(to_py)?;
        Ok(Self { inner })
    }

    fn __repr__(&self) -> String {
        let c = &self.inner;
        format!(
            "SystemConfig(n_tx={}, n_rx={}, n_tx_rf={}, n_rx_rf={}, n_streams={}, n_subcarriers={}, snr_db={}, seed={})",
            c.n_tx, c.n_rx, c.n_tx_rf, c.n_rx_rf, c.n_streams, c.n_subcarriers, c.snr_db, c.seed
        )
    }
}

/// One channel realization: a receive-by-transmit matrix per subcarrier.
#[pyclass(name = "Channel")]
struct PyChannel {
    inner: hbf_core::ChannelRealization,
}

#[pymethods]
impl PyChannel {
    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    #[getter]
    fn n_subcarriers(&self) -> usize {
        self.inner.matrices.len()
    }

    /// Row-major nested list of complex entries for subcarrier `k`.
    fn matrix(&self, k: usize) -> PyResult<Vec<Vec<Complex64>>> {
        let h = self
            .inner
            .matrices
            .get(k)
            .ok_or_else(|| PyValueError::new_err(format!("subcarrier {k} out of range")))?;
        Ok((0..h.nrows())
            .map(|i| (0..h.ncols()).map(|j| h[(i, j)]).collect())
            .collect())
    }

    /// Water-filling fully digital rate for this channel.
    fn fd_rate(&self, config: &PySystemConfig) -> PyResult<f64> {
        fd_baseline(&self.inner, &config.inner).map_err(to_py)
    }
}

#[pyfunction]
#[pyo3(signature = (config, seed=None))]
fn generate_channel(config: &PySystemConfig, seed: Option<u64>) -> PyResult<PyChannel> {
    let seed = seed.unwrap_or(config.inner.seed);
    let inner = hbf_core::generate_channel(&config.inner, seed).map_err(to_py)?;
    Ok(PyChannel { inner })
}

/// Outcome of one alternating-optimization run.
#[pyclass(name = "RunResult", get_all)]
struct PyRunResult {
    variant: String,
    rate: f64,
    outer_iterations: usize,
    converged: bool,
    degenerate: bool,
    rates: Vec<f64>,
    objectives: Vec<f64>,
    precoder_phases: Vec<Vec<f64>>,
    combiner_phases: Vec<Vec<f64>>,
}

#[pymethods]
impl PyRunResult {
    fn __repr__(&self) -> String {
        format!(
            "RunResult(variant='{}', rate={:.6}, outer_iterations={}, converged={})",
            self.variant,
            self.rate,
            self.outer_iterations,
            if self.converged { "True" } else { "False" }
        )
    }
}

/// Designs the hybrid beamformers for one channel.
#[pyfunction]
#[pyo3(signature = (channel, config, variant="wmmse-ei", init="random", seed=None))]
fn optimize(
    py: Python<'_>,
    channel: &PyChannel,
    config: &PySystemConfig,
    variant: &str,
    init: &str,
    seed: Option<u64>,
) -> PyResult<PyRunResult> {
    let variant = parse_variant(variant)?;
    let strategy = parse_init(init)?;
    let seed = seed.unwrap_or(channel.inner.seed);
    let (ch, cfg) = (&channel.inner, &config.inner);
    let (state, trace) = py
        .detach(|| {
            let start = initialize(ch, cfg, strategy, seed)?;
            alternating_optimize(ch, cfg, variant, &start, &cfg.controls)
        })
        .map_err(to_py)?;
    Ok(PyRunResult {
        variant: variant.to_string(),
        rate: trace.final_rate(),
        outer_iterations: trace.outer_iterations,
        converged: trace.exit_reason == ExitReason::Converged,
        degenerate: trace.degenerate,
        rates: trace.rates.clone(),
        objectives: trace.steps.iter().map(|s| s.objective).collect(),
        precoder_phases: state.f_rf.phases.clone(),
        combiner_phases: state.w_rf.phases.clone(),
    })
}

/// Complex-multiplication estimate at the reference operating point.
#[pyfunction]
fn complexity(variant: &str) -> PyResult<f64> {
    let v = parse_variant(variant)?;
    Ok(complexity_estimate(&reference_inputs(v), v))
}

/// Runs a sweep from a TOML spec or JSON manifest; returns one dict per result row.
#[pyfunction]
#[pyo3(signature = (path, overrides=None))]
fn run_spec<'py>(
    py: Python<'py>,
    path: PathBuf,
    overrides: Option<Vec<(String, String)>>,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let overrides = overrides.unwrap_or_default();
    let output = py
        .detach(|| {
            let spec = ExperimentSpec::load(&path, &overrides)?;
            run_experiment(&spec)
        })
        .map_err(to_py)?;
    output
        .rows
        .iter()
        .map(|r| {
            let d = PyDict::new(py);
            d.set_item("variant", r.variant.to_string())?;
            d.set_item("seed", r.seed)?;
            d.set_item("snr_db", r.snr_db)?;
            d.set_item("quant_bits", r.quant_bits)?;
            d.set_item("outer_iters", r.outer_iterations)?;
            d.set_item("rate", r.rate)?;
            d.set_item("fd_rate", r.fd_rate)?;
            d.set_item("flags", r.flags())?;
            Ok(d)
        })
        .collect()
}

/// Built-in consistency checks as `(name, passed, detail)` tuples.
#[pyfunction]
fn selftest() -> Vec<(String, bool, String)> {
    hbf_core::selftest::run_selftest()
        .into_iter()
        .map(|r| (r.name.to_string(), r.passed, r.detail))
        .collect()
}

#[pymodule]
fn hbf(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySystemConfig>()?;
    m.add_class::<PyChannel>()?;
    m.add_class::<PyRunResult>()?;
    m.add_function(wrap_pyfunction!(generate_channel, m)?)?;
    m.add_function(wrap_pyfunction!(optimize, m)?)?;
    m.add_function(wrap_pyfunction!(complexity, m)?)?;
    m.add_function(wrap_pyfunction!(run_spec, m)?)?;
    m.add_function(wrap_pyfunction!(selftest, m)?)?;
    Ok(())
}
