//! Shared fixtures and independent reference computations for the integration tests.
#![allow(dead_code)]

use std::f64::consts::{LN_2, TAU};

use hbf_core::analog::AnalogSubproblem;
use hbf_core::beamformer::{AnalogBeamformer, HybridState, Side};
use hbf_core::linalg::{CMat, C64};
use hbf_core::{rng, ChannelRealization, SystemConfig};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Stream id for test-side randomness, disjoint from the library's streams.
pub const TEST_STREAM: u64 = 99;

pub fn test_rng(seed: u64) -> ChaCha8Rng {
    rng::stream(seed, TEST_STREAM)
}

pub fn tiny_config() -> SystemConfig {
    SystemConfig {
        n_tx: 8,
        n_rx: 4,
        n_tx_rf: 2,
        n_rx_rf: 2,
        n_streams: 2,
        n_subcarriers: 4,
        snr_db: 0.0,
        ..SystemConfig::default()
    }
}

pub fn reduced_config() -> SystemConfig {
    SystemConfig {
        n_tx: 32,
        n_rx: 16,
        n_tx_rf: 4,
        n_rx_rf: 2,
        n_streams: 2,
        n_subcarriers: 16,
        snr_db: -6.0,
        ..SystemConfig::default()
    }
}

pub fn random_state(config: &SystemConfig, seed: u64) -> HybridState {
    HybridState::random(config, &mut test_rng(seed))
}

pub fn random_beamformer(side: Side, n_ant: usize, n_rf: usize, seed: u64) -> AnalogBeamformer {
    AnalogBeamformer::random(side, n_ant, n_rf, &mut test_rng(seed))
}

pub fn gaussian_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> CMat {
    CMat::from_fn(rows, cols, |_, _| {
        C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
    })
}

pub fn random_hpd<R: Rng + ?Sized>(n: usize, rng: &mut R) -> CMat {
    let a = gaussian_matrix(n, n, rng);
    &a * a.adjoint() + CMat::identity(n, n).scale(0.05)
}

/// `ln|det m|` through the LU determinant.
pub fn ln_abs_det(m: &CMat) -> f64 {
    m.clone().determinant().norm().ln()
}

/// Rate from the full `M x M` form `log2|I + sigma^-2 H F F^H H^H W (W^H W)^-1 W^H|`.
pub fn oracle_rate(
    channel: &ChannelRealization,
    state: &HybridState,
    config: &SystemConfig,
) -> f64 {
    let noise = config.noise_var();
    let mut total = 0.0;
    for (k, h) in channel.matrices.iter().enumerate() {
        let f = state.f_rf.expand() * &state.f_d[k];
        let w = state.w_rf.expand() * &state.w_d[k];
        let proj = &w
            * (w.adjoint() * &w)
                .try_inverse()
                .expect("combiner Gram inverse")
            * w.adjoint();
        let m = h.nrows();
        let cov = CMat::identity(m, m) + (h * &f * f.adjoint() * h.adjoint() * proj).unscale(noise);
        total += ln_abs_det(&cov) / LN_2;
    }
    total / channel.n_subcarriers() as f64
}

/// `E[(xi^-1 y - s)(xi^-1 y - s)^H]` for `y = W^H (H F s + n)`.
pub fn oracle_mse(
    channel: &ChannelRealization,
    state: &HybridState,
    config: &SystemConfig,
    k: usize,
) -> CMat {
    let h = &channel.matrices[k];
    let f = state.f_rf.expand() * &state.f_d[k];
    let w = state.w_rf.expand() * &state.w_d[k];
    let xi = state.xi[k];
    let n_s = config.n_streams;
    let gain = (w.adjoint() * h * &f).unscale(xi) - CMat::identity(n_s, n_s);
    &gain * gain.adjoint() + (w.adjoint() * &w).scale(config.noise_var() / (xi * xi))
}

pub fn oracle_objective(
    channel: &ChannelRealization,
    state: &HybridState,
    config: &SystemConfig,
) -> f64 {
    let k_total = channel.n_subcarriers();
    (0..k_total)
        .map(|k| {
            let lam = &state.weights[k];
            (lam * oracle_mse(channel, state, config, k)).trace().re - ln_abs_det(lam)
        })
        .sum::<f64>()
        / k_total as f64
}

/// Subproblem objective from the dense beamformer and LU inverses.
pub fn oracle_subproblem(sub: &AnalogSubproblem, x: &CMat) -> f64 {
    let k_total = sub.n_subcarriers();
    (0..k_total)
        .map(|k| {
            let m = &sub.c_mat[k]
                + (&sub.left[k] * x * x.adjoint() * &sub.right[k]).unscale(sub.scale[k]);
            m.try_inverse().expect("inner matrix inverse").trace().re
        })
        .sum::<f64>()
        / k_total as f64
}

/// Central differences of `f` along the real and imaginary parts of one support entry.
pub fn central_difference<F: Fn(&[C64]) -> f64>(f: &F, z: &[C64], i: usize, h: f64) -> C64 {
    let mut out = [0.0; 2];
    for (part, dir) in [C64::new(1.0, 0.0), C64::new(0.0, 1.0)]
        .into_iter()
        .enumerate()
    {
        let mut plus = z.to_vec();
        let mut minus = z.to_vec();
        plus[i] += dir * h;
        minus[i] -= dir * h;
        out[part] = (f(&plus) - f(&minus)) / (2.0 * h);
    }
    C64::new(out[0], out[1])
}

/// Brute-force minimizer of a 1-D function over a uniform grid.
pub fn grid_argmin<F: Fn(f64) -> f64>(f: F, n: usize) -> (f64, f64) {
    (0..n)
        .map(|i| TAU * i as f64 / n as f64)
        .map(|t| (t, f(t)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("non-empty grid")
}

pub fn rel_diff(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}
