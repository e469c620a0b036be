//! Partially-connected analog beamformers and the full hybrid state.

use std::f64::consts::TAU;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::complex_gaussian;
use crate::config::SystemConfig;
use crate::error::{HbfError, Result};
use crate::linalg::{
    fro_norm_sqr, hermitian_deviation, min_hermitian_eigenvalue, unit, wrap_phase, CMat, CVec, C64,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    Tx,
    Rx,
}

/// Phase of the `n`-th point of the `2^bits` uniform phase alphabet.
pub fn quant_level(n: u64, bits: u32) -> f64 {
    TAU * n as f64 / (1u64 << bits) as f64
}

/// Nearest alphabet point to `phase` (ties round up).
pub fn quantize_phase(phase: f64, bits: u32) -> f64 {
    let levels = 1u64 << bits;
    let step = TAU / levels as f64;
    let n = (wrap_phase(phase) / step).round() as u64 % levels;
    quant_level(n, bits)
}

pub fn is_quantized_phase(phase: f64, bits: u32) -> bool {
    quantize_phase(phase, bits) == phase
}

/// Block-diagonal unit-modulus matrix stored as one phase vector per RF chain.
///
/// Chain `q` drives antennas `q * b .. (q + 1) * b` where `b` is the block size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalogBeamformer {
    pub side: Side,
    pub phases: Vec<Vec<f64>>,
}

impl AnalogBeamformer {
    pub fn new(side: Side, phases: Vec<Vec<f64>>) -> Result<Self> {
        let b = phases.first().map(Vec::len).unwrap_or(0);
        if b == 0 || phases.iter().any(|v| v.len() != b) {
            return Err(HbfError::Dimension(
                "analog blocks must be non-empty and equal length".into(),
            ));
        }
        if phases.iter().flatten().any(|p| !p.is_finite()) {
            return Err(HbfError::InvalidConfig(
                "analog phases must be finite".into(),
            ));
        }
        Ok(Self { side, phases })
    }

    pub fn constant(side: Side, n_ant: usize, n_rf: usize, phase: f64) -> Self {
        Self {
            side,
            phases: vec![vec![phase; n_ant / n_rf]; n_rf],
        }
    }

    pub fn random<R: Rng + ?Sized>(side: Side, n_ant: usize, n_rf: usize, rng: &mut R) -> Self {
        let b = n_ant / n_rf;
        let phases = (0..n_rf)
            .map(|_| {
                (0..b)
                    .map(|_| wrap_phase(rng.random::<f64>() * TAU))
                    .collect()
            })
            .collect();
        Self { side, phases }
    }

    /// Rebuilds a beamformer from its support values (antenna order).
    pub fn from_support(side: Side, n_rf: usize, values: &[C64]) -> Self {
        let b = values.len() / n_rf;
        let phases = (0..n_rf)
            .map(|q| {
                (0..b)
                    .map(|p| wrap_phase(values[q * b + p].arg()))
                    .collect()
            })
            .collect();
        Self { side, phases }
    }

    pub fn n_rf(&self) -> usize {
        self.phases.len()
    }

    pub fn block_size(&self) -> usize {
        self.phases[0].len()
    }

    pub fn n_ant(&self) -> usize {
        self.n_rf() * self.block_size()
    }

    pub fn chain_of(&self, antenna: usize) -> usize {
        antenna / self.block_size()
    }

    /// `n_rf / n_ant`.
    pub fn ratio(&self) -> f64 {
        1.0 / self.block_size() as f64
    }

    /// Dense `n_ant x n_rf` matrix.
    pub fn expand(&self) -> CMat {
        let b = self.block_size();
        let mut x = CMat::zeros(self.n_ant(), self.n_rf());
        for (q, block) in self.phases.iter().enumerate() {
            for (p, &phase) in block.iter().enumerate() {
                x[(q * b + p, q)] = unit(phase);
            }
        }
        x
    }

    /// Indicator of the block support, same shape as `expand()`.
    pub fn mask(&self) -> CMat {
        let b = self.block_size();
        CMat::from_fn(self.n_ant(), self.n_rf(), |i, j| {
            if i / b == j {
                C64::new(1.0, 0.0)
            } else {
                C64::new(0.0, 0.0)
            }
        })
    }

    /// Unit-modulus support entries in antenna order.
    pub fn support(&self) -> CVec {
        CVec::from_iterator(self.n_ant(), self.phases.iter().flatten().map(|&p| unit(p)))
    }

    pub fn quantize(&self, bits: u32) -> Self {
        Self {
            side: self.side,
            phases: self
                .phases
                .iter()
                .map(|v| v.iter().map(|&p| quantize_phase(p, bits)).collect())
                .collect(),
        }
    }

    pub fn is_quantized(&self, bits: u32) -> bool {
        self.phases
            .iter()
            .flatten()
            .all(|&p| is_quantized_phase(p, bits))
    }

    /// `X^H Y` for two beamformers sharing a layout; diagonal by construction.
    pub fn gram(&self) -> CMat {
        CMat::identity(self.n_rf(), self.n_rf()).scale(self.block_size() as f64)
    }
}

/// Analog and per-subcarrier digital beamformers, scaling factors and weights.
#[derive(Debug, Clone, PartialEq)]
pub struct HybridState {
    pub f_rf: AnalogBeamformer,
    pub w_rf: AnalogBeamformer,
    pub f_d: Vec<CMat>,
    pub w_d: Vec<CMat>,
    pub xi: Vec<f64>,
    pub weights: Vec<CMat>,
}

impl HybridState {
    /// Random feasible state: uniform phases, Gaussian digital parts with the
    /// precoder power at its budget, random positive scaling factors and
    /// random Hermitian positive-definite weights.
    pub fn random<R: Rng + ?Sized>(config: &SystemConfig, rng: &mut R) -> Self {
        let k = config.n_subcarriers;
        let n_s = config.n_streams;
        fn gaussian<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> CMat {
            CMat::from_fn(rows, cols, |_, _| complex_gaussian(rng))
        }
        let budget = config.tx_ratio();
        let f_d: Vec<CMat> = (0..k)
            .map(|_| {
                let m = gaussian(config.n_tx_rf, n_s, rng);
                let scale = (budget / fro_norm_sqr(&m)).sqrt();
                m.scale(scale)
            })
            .collect();
        let w_d = (0..k).map(|_| gaussian(config.n_rx_rf, n_s, rng)).collect();
        let weights = (0..k)
            .map(|_| {
                let a = gaussian(n_s, n_s, rng);
                &a * a.adjoint() + CMat::identity(n_s, n_s).scale(0.1)
            })
            .collect();
        let xi = (0..k).map(|_| 0.5 + rng.random::<f64>()).collect();
        Self {
            f_rf: AnalogBeamformer::random(Side::Tx, config.n_tx, config.n_tx_rf, rng),
            w_rf: AnalogBeamformer::random(Side::Rx, config.n_rx, config.n_rx_rf, rng),
            f_d,
            w_d,
            xi,
            weights,
        }
    }

    pub fn n_subcarriers(&self) -> usize {
        self.f_d.len()
    }

    /// `F_RF F_D,k`.
    pub fn precoder(&self, k: usize) -> CMat {
        block_times(&self.f_rf, &self.f_d[k])
    }

    /// `W_RF W_D,k`.
    pub fn combiner(&self, k: usize) -> CMat {
        block_times(&self.w_rf, &self.w_d[k])
    }

    pub fn check_dimensions(&self, config: &SystemConfig) -> Result<()> {
        let k = config.n_subcarriers;
        let ok = self.f_rf.n_ant() == config.n_tx
            && self.f_rf.n_rf() == config.n_tx_rf
            && self.w_rf.n_ant() == config.n_rx
            && self.w_rf.n_rf() == config.n_rx_rf
            && self.f_d.len() == k
            && self.w_d.len() == k
            && self.xi.len() == k
            && self.weights.len() == k
            && self
                .f_d
                .iter()
                .all(|m| m.shape() == (config.n_tx_rf, config.n_streams))
            && self
                .w_d
                .iter()
                .all(|m| m.shape() == (config.n_rx_rf, config.n_streams))
            && self
                .weights
                .iter()
                .all(|m| m.shape() == (config.n_streams, config.n_streams));
        if ok {
            Ok(())
        } else {
            Err(HbfError::Dimension(
                "hybrid state does not match the configuration".into(),
            ))
        }
    }

    /// Power budget, positive scaling factors, Hermitian PD weights.
    pub fn check_invariants(&self, config: &SystemConfig) -> Result<()> {
        self.check_dimensions(config)?;
        let budget = config.tx_ratio();
        for k in 0..self.n_subcarriers() {
            let power = fro_norm_sqr(&self.f_d[k]);
            if power > budget + 1e-10 {
                return Err(HbfError::InvalidConfig(format!(
                    "digital precoder power {power:.6e} exceeds {budget:.6e} on subcarrier {k}"
                )));
            }
            if !(self.xi[k] > 0.0) {
                return Err(HbfError::NonPositiveScale {
                    k,
                    value: self.xi[k],
                });
            }
            if hermitian_deviation(&self.weights[k]) > 1e-10 {
                return Err(HbfError::NonHermitian(format!(
                    "weight matrix on subcarrier {k}"
                )));
            }
            if !(min_hermitian_eigenvalue(&self.weights[k]) > 0.0) {
                return Err(HbfError::NotPositiveDefinite {
                    what: format!("weight matrix on subcarrier {k}"),
                });
            }
        }
        Ok(())
    }
}

/// `X D` for block-diagonal `X`, skipping the structural zeros.
pub fn block_times(x: &AnalogBeamformer, d: &CMat) -> CMat {
    let b = x.block_size();
    let mut out = CMat::zeros(x.n_ant(), d.ncols());
    for (q, block) in x.phases.iter().enumerate() {
        for (p, &phase) in block.iter().enumerate() {
            let u = unit(phase);
            for j in 0..d.ncols() {
                out[(q * b + p, j)] = u * d[(q, j)];
            }
        }
    }
    out
}

/// `X^H Y` for block-diagonal `X` (`n_rf x cols`).
pub fn block_adjoint_times(x: &AnalogBeamformer, y: &CMat) -> CMat {
    let b = x.block_size();
    let mut out = CMat::zeros(x.n_rf(), y.ncols());
    for (q, block) in x.phases.iter().enumerate() {
        for (p, &phase) in block.iter().enumerate() {
            let u = unit(phase).conj();
            for j in 0..y.ncols() {
                out[(q, j)] += u * y[(q * b + p, j)];
            }
        }
    }
    out
}
