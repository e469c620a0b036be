//! Seeded sweeps over SNR, variants and quantization, with CSV/JSON output.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::channel::generate_channel;
use crate::config::{ClusterParams, SystemConfig};
use crate::driver::{
    alternating_optimize, fd_baseline, initialize, AlgorithmVariant, ConvergenceTrace, ExitReason,
    InitStrategy, SolverControls, StepLabel,
};
use crate::error::{HbfError, Result};

pub const CSV_HEADER: [&str; 9] = [
    "variant",
    "seed",
    "snr_db",
    "quant_bits",
    "outer_iters",
    "rate",
    "fd_rate",
    "wall_ms",
    "flags",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemSection {
    pub n_tx: usize,
    pub n_rx: usize,
    pub n_tx_rf: usize,
    pub n_rx_rf: usize,
    pub n_streams: usize,
    pub n_subcarriers: usize,
    pub snr_db: f64,
    pub quant_bits: Option<u32>,
    /// Seed of realization 0; realization `i` uses `seed + i`.
    pub seed: u64,
}

impl Default for SystemSection {
    fn default() -> Self {
        let c = SystemConfig::default();
        Self {
            n_tx: c.n_tx,
            n_rx: c.n_rx,
            n_tx_rf: c.n_tx_rf,
            n_rx_rf: c.n_rx_rf,
            n_streams: c.n_streams,
            n_subcarriers: c.n_subcarriers,
            snr_db: c.snr_db,
            quant_bits: c.quant_bits,
            seed: c.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub snr_grid: Vec<f64>,
    pub variants: Vec<AlgorithmVariant>,
    pub n_realizations: usize,
    pub init_strategy: InitStrategy,
    /// Bit counts; each base variant is run once per entry in its quantized form.
    pub quant_grid: Vec<u32>,
    /// Off by default so that reruns produce identical bytes.
    pub record_wall_time: bool,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            snr_grid: vec![-6.0],
            variants: vec![
                AlgorithmVariant::WmmseEi,
                AlgorithmVariant::WmmseMo,
                AlgorithmVariant::MmseEi,
            ],
            n_realizations: 50,
            init_strategy: InitStrategy::RandomIni,
            quant_grid: Vec::new(),
            record_wall_time: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub results_csv: PathBuf,
    pub traces_json: Option<PathBuf>,
    pub manifest_json: Option<PathBuf>,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            results_csv: PathBuf::from("results.csv"),
            traces_json: None,
            manifest_json: None,
        }
    }
}

/// A complete sweep description; the manifest is this struct serialized with every default filled in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSpec {
    pub system: SystemSection,
    pub channel: ClusterParams,
    pub solver: SolverControls,
    pub experiment: SweepSection,
    pub output: OutputSection,
}

impl ExperimentSpec {
    pub fn base_config(&self) -> SystemConfig {
        let s = &self.system;
        SystemConfig {
            n_tx: s.n_tx,
            n_rx: s.n_rx,
            n_tx_rf: s.n_tx_rf,
            n_rx_rf: s.n_rx_rf,
            n_streams: s.n_streams,
            n_subcarriers: s.n_subcarriers,
            snr_db: s.snr_db,
            cluster: self.channel.clone(),
            quant_bits: s.quant_bits,
            controls: self.solver.clone(),
            seed: s.seed,
        }
    }

    /// Effective quantization grid: the explicit grid, else the system's bit count.
    pub fn quant_grid(&self) -> Vec<u32> {
        if !self.experiment.quant_grid.is_empty() {
            self.experiment.quant_grid.clone()
        } else {
            self.system.quant_bits.into_iter().collect()
        }
    }

    /// Variants actually run, in output order.
    pub fn expanded_variants(&self) -> Vec<AlgorithmVariant> {
        let grid = self.quant_grid();
        let mut out = Vec::new();
        for v in &self.experiment.variants {
            if grid.is_empty() {
                out.push(*v);
            } else {
                out.extend(grid.iter().map(|&b| v.with_bits(b)));
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let e = &self.experiment;
        if e.n_realizations == 0 {
            return Err(HbfError::InvalidConfig(
                "n_realizations must be at least 1".into(),
            ));
        }
        if e.snr_grid.is_empty() || e.variants.is_empty() {
            return Err(HbfError::InvalidConfig(
                "snr_grid and variants must be non-empty".into(),
            ));
        }
        for v in self.expanded_variants() {
            v.validate()?;
        }
        let base = self.base_config();
        for &snr in &e.snr_grid {
            base.with_snr_db(snr).validate()?;
        }
        base.validate()
    }

    /// Parses a TOML spec or a JSON manifest (by extension) and applies dotted-path overrides.
    pub fn load(path: &Path, overrides: &[(String, String)]) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| HbfError::io(path, e))?;
        let parse_err = |message: String| HbfError::Parse {
            path: path.to_path_buf(),
            message,
        };
        let is_json = path
            .extension()
            .is_some_and(|x| x.eq_ignore_ascii_case("json"));
        let mut value: Value = if is_json {
            serde_json::from_str(&text).map_err(|e| parse_err(e.to_string()))?
        } else {
            toml::from_str(&text).map_err(|e| parse_err(e.to_string()))?
        };
        for (key, raw) in overrides {
            apply_override(&mut value, key, raw)?;
        }
        let spec: Self = serde_json::from_value(value).map_err(|e| parse_err(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let spec: Self = toml::from_str(text).map_err(|e| HbfError::Parse {
            path: PathBuf::from("<inline>"),
            message: e.to_string(),
        })?;
        spec.validate()?;
        Ok(spec)
    }
}

/// Interprets an override value as a TOML literal, falling back to a bare string.
fn parse_override_value(raw: &str) -> Value {
    #[derive(Deserialize)]
    struct Wrapper {
        v: Value,
    }
    match toml::from_str::<Wrapper>(&format!("v = {raw}")) {
        Ok(w) => w.v,
        Err(_) => Value::String(raw.to_string()),
    }
}

pub fn apply_override(root: &mut Value, key: &str, raw: &str) -> Result<()> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(HbfError::InvalidConfig(format!("bad override key '{key}'")));
    }
    let mut node = root;
    for part in &parts[..parts.len() - 1] {
        let map = node.as_object_mut().ok_or_else(|| {
            HbfError::InvalidConfig(format!("override '{key}' crosses a non-table value"))
        })?;
        node = map
            .entry(part.to_string())
            .or_insert_with(|| Value::Object(Default::default()));
    }
    let map = node.as_object_mut().ok_or_else(|| {
        HbfError::InvalidConfig(format!("override '{key}' crosses a non-table value"))
    })?;
    map.insert(
        parts[parts.len() - 1].to_string(),
        parse_override_value(raw),
    );
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub variant: AlgorithmVariant,
    pub seed: u64,
    pub snr_db: f64,
    pub quant_bits: Option<u32>,
    pub outer_iterations: usize,
    pub rate: f64,
    pub fd_rate: f64,
    pub wall_ms: f64,
    pub degenerate: bool,
    pub max_iterations: bool,
    pub aborted: Option<String>,
}

impl ResultRow {
    pub fn flags(&self) -> String {
        let mut flags = Vec::new();
        if self.aborted.is_some() {
            flags.push("abort");
        }
        if self.degenerate {
            flags.push("degenerate");
        }
        if self.max_iterations {
            flags.push("max-iterations");
        }
        flags.join("|")
    }

    fn sort_key(&self) -> (usize, Option<u32>, AlgorithmVariant) {
        (self.variant.family_index(), self.quant_bits, self.variant)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRecord {
    pub variant: AlgorithmVariant,
    pub seed: u64,
    pub snr_db: f64,
    pub labels: Vec<StepLabel>,
    pub outer: Vec<usize>,
    pub objective: Vec<f64>,
    pub rate: Vec<f64>,
    pub rates_per_iteration: Vec<f64>,
    pub exit_reason: ExitReason,
    pub projected_rate: Option<f64>,
}

impl TraceRecord {
    fn new(variant: AlgorithmVariant, seed: u64, snr_db: f64, trace: &ConvergenceTrace) -> Self {
        Self {
            variant,
            seed,
            snr_db,
            labels: trace.steps.iter().map(|s| s.label).collect(),
            outer: trace.steps.iter().map(|s| s.outer).collect(),
            objective: trace.steps.iter().map(|s| s.objective).collect(),
            rate: trace.steps.iter().map(|s| s.rate).collect(),
            rates_per_iteration: trace.rates.clone(),
            exit_reason: trace.exit_reason,
            projected_rate: trace.projected_rate,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct ExperimentOutput {
    pub rows: Vec<ResultRow>,
    pub traces: Vec<TraceRecord>,
}

impl ExperimentOutput {
    pub fn aborted_rows(&self) -> usize {
        self.rows.iter().filter(|r| r.aborted.is_some()).count()
    }
}

fn run_point(
    spec: &ExperimentSpec,
    variants: &[AlgorithmVariant],
    seed: u64,
    snr_db: f64,
) -> Result<ExperimentOutput> {
    let config = spec.base_config().with_snr_db(snr_db);
    let channel = generate_channel(&config, seed)?;
    let fd_rate = fd_baseline(&channel, &config)?;
    let init = initialize(&channel, &config, spec.experiment.init_strategy, seed);
    let mut out = ExperimentOutput::default();
    for &variant in variants {
        let start = Instant::now();
        let result = init.as_ref().map_err(|e| e.to_string()).and_then(|init| {
            alternating_optimize(&channel, &config, variant, init, &config.controls)
                .map_err(|e| e.to_string())
        });
        let wall_ms = if spec.experiment.record_wall_time {
            start.elapsed().as_secs_f64() * 1e3
        } else {
            0.0
        };
        let row = match result {
            Ok((_, trace)) => {
                out.traces
                    .push(TraceRecord::new(variant, seed, snr_db, &trace));
                ResultRow {
                    variant,
                    seed,
                    snr_db,
                    quant_bits: variant.bits(),
                    outer_iterations: trace.outer_iterations,
                    rate: trace.final_rate(),
                    fd_rate,
                    wall_ms,
                    degenerate: trace.degenerate,
                    max_iterations: trace.exit_reason == ExitReason::MaxIterations,
                    aborted: None,
                }
            }
            Err(message) => ResultRow {
                variant,
                seed,
                snr_db,
                quant_bits: variant.bits(),
                outer_iterations: 0,
                rate: f64::NAN,
                fd_rate,
                wall_ms,
                degenerate: false,
                max_iterations: false,
                aborted: Some(message),
            },
        };
        out.rows.push(row);
    }
    Ok(out)
}

/// Runs every (realization, SNR, variant) combination; realization `i` sees the
/// same channel at every SNR and for every variant.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentOutput> {
    spec.validate()?;
    let variants = spec.expanded_variants();
    let points: Vec<(u64, f64)> = (0..spec.experiment.n_realizations as u64)
        .flat_map(|i| spec.experiment.snr_grid.iter().map(move |&snr| (i, snr)))
        .collect();
    let parts: Vec<ExperimentOutput> = points
        .par_iter()
        .map(|&(i, snr)| run_point(spec, &variants, spec.system.seed + i, snr))
        .collect::<Result<_>>()?;
    let mut out = ExperimentOutput::default();
    for p in parts {
        out.rows.extend(p.rows);
        out.traces.extend(p.traces);
    }
    out.rows.sort_by(|a, b| {
        a.sort_key()
            .cmp(&b.sort_key())
            .then(a.snr_db.total_cmp(&b.snr_db))
            .then(a.seed.cmp(&b.seed))
    });
    out.traces.sort_by(|a, b| {
        (a.variant.family_index(), a.variant.bits(), a.variant)
            .cmp(&(b.variant.family_index(), b.variant.bits(), b.variant))
            .then(a.snr_db.total_cmp(&b.snr_db))
            .then(a.seed.cmp(&b.seed))
    });
    Ok(out)
}

fn fmt_f64(x: f64) -> String {
    let mut s = String::new();
    let _ = write!(s, "{x}");
    s
}

pub fn write_csv(path: &Path, rows: &[ResultRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_io(path, e))?;
    w.write_record(CSV_HEADER).map_err(|e| csv_io(path, e))?;
    for r in rows {
        w.write_record([
            r.variant.to_string(),
            r.seed.to_string(),
            fmt_f64(r.snr_db),
            r.quant_bits
                .map_or_else(|| "inf".to_string(), |b| b.to_string()),
            r.outer_iterations.to_string(),
            fmt_f64(r.rate),
            fmt_f64(r.fd_rate),
            fmt_f64(r.wall_ms),
            r.flags(),
        ])
        .map_err(|e| csv_io(path, e))?;
    }
    w.flush().map_err(|e| HbfError::io(path, e))
}

fn csv_io(path: &Path, e: csv::Error) -> HbfError {
    HbfError::io(path, std::io::Error::other(e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| HbfError::io(path, std::io::Error::other(e)))?;
    fs::write(path, text + "\n").map_err(|e| HbfError::io(path, e))
}

/// Writes the results CSV and, when configured, the trace and manifest JSON files.
pub fn emit(output: &ExperimentOutput, spec: &ExperimentSpec) -> Result<()> {
    if output.rows.is_empty() {
        return Err(HbfError::InvalidConfig("no result rows to write".into()));
    }
    write_csv(&spec.output.results_csv, &output.rows)?;
    if let Some(path) = &spec.output.traces_json {
        write_json(path, &output.traces)?;
    }
    if let Some(path) = &spec.output.manifest_json {
        write_json(path, spec)?;
    }
    Ok(())
}
