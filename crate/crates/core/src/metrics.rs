//! Rate, MSE and WMMSE objective evaluation for a hybrid state.

use std::f64::consts::LN_2;

use crate::beamformer::{block_adjoint_times, block_times, AnalogBeamformer, HybridState};
use crate::channel::ChannelRealization;
use crate::config::SystemConfig;
use crate::error::{HbfError, Result};
use crate::linalg::{hermitian_part, logdet_hpd, min_hermitian_eigenvalue, trace, CMat, C64};

/// Jitter added to a rank-deficient combiner Gram matrix.
pub const GRAM_JITTER: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateEvaluation {
    /// bits/s/Hz averaged over subcarriers.
    pub rate: f64,
    /// Some subcarrier needed jitter on its combiner Gram matrix.
    pub degenerate: bool,
}

fn check_channel(
    channel: &ChannelRealization,
    state: &HybridState,
    config: &SystemConfig,
) -> Result<()> {
    channel.check_against(config)?;
    state.check_dimensions(config)
}

/// `(1/K) sum_k log2 |I + sigma^-2 W^H H F F^H H^H W (W^H W)^-1|`.
pub fn spectral_efficiency(
    channel: &ChannelRealization,
    state: &HybridState,
    config: &SystemConfig,
) -> Result<RateEvaluation> {
    check_channel(channel, state, config)?;
    let inv_noise = 1.0 / config.noise_var();
    let n_s = config.n_streams;
    let mut total = 0.0;
    let mut degenerate = false;
    for (k, h) in channel.matrices.iter().enumerate() {
        let w = state.combiner(k);
        let f = state.precoder(k);
        let s = w.adjoint() * (h * f);
        let mut gram = hermitian_part(&(w.adjoint() * &w));
        let scale = gram.diagonal().iter().map(|z| z.re).fold(0.0, f64::max);
        if min_hermitian_eigenvalue(&gram) <= GRAM_JITTER * scale.max(1.0) {
            for i in 0..n_s {
                gram[(i, i)] += C64::new(GRAM_JITTER, 0.0);
            }
            degenerate = true;
        }
        let signal = &gram + (&s * s.adjoint()).scale(inv_noise);
        let value =
            logdet_hpd(&signal, "signal covariance")? - logdet_hpd(&gram, "combiner Gram matrix")?;
        total += value.max(0.0);
    }
    Ok(RateEvaluation {
        rate: total / (channel.n_subcarriers() as f64 * LN_2),
        degenerate,
    })
}

/// Rate after the analog combiner with an ideal receiver behind it.
pub fn analog_output_rate(
    channel: &ChannelRealization,
    f_rf: &AnalogBeamformer,
    f_d: &[CMat],
    w_rf: &AnalogBeamformer,
    config: &SystemConfig,
) -> Result<f64> {
    channel.check_against(config)?;
    if f_d.len() != channel.n_subcarriers() {
        return Err(HbfError::Dimension(
            "one digital precoder per subcarrier expected".into(),
        ));
    }
    let gain = config.n_rx_rf as f64 / (config.noise_var() * config.n_rx as f64);
    let mut total = 0.0;
    for (h, fd) in channel.matrices.iter().zip(f_d) {
        let t = block_adjoint_times(w_rf, &(h * block_times(f_rf, fd)));
        // Sylvester: the small side is N_s x N_s
        let m = CMat::identity(fd.ncols(), fd.ncols()) + (t.adjoint() * &t).scale(gain);
        total += logdet_hpd(&m, "analog output covariance")?.max(0.0);
    }
    Ok(total / (channel.n_subcarriers() as f64 * LN_2))
}

/// The rate a variant reports: the ideal-receiver form when the combiner keeps
/// more chains than streams, otherwise the linear-combiner form.
pub fn reported_rate(
    channel: &ChannelRealization,
    state: &HybridState,
    config: &SystemConfig,
) -> Result<RateEvaluation> {
    if config.n_rx_rf > config.n_streams {
        let rate = analog_output_rate(channel, &state.f_rf, &state.f_d, &state.w_rf, config)?;
        Ok(RateEvaluation {
            rate,
            degenerate: false,
        })
    } else {
        spectral_efficiency(channel, state, config)
    }
}

/// Modified MSE matrix of the scaled receive estimate on subcarrier `k`.
pub fn mse_matrix(
    channel: &ChannelRealization,
    state: &HybridState,
    config: &SystemConfig,
    k: usize,
) -> CMat {
    let w = state.combiner(k);
    let f = state.precoder(k);
    let inv_xi = 1.0 / state.xi[k];
    let p = w.adjoint() * (&channel.matrices[k] * f);
    let n_s = p.nrows();
    let noise = (w.adjoint() * &w).scale(config.noise_var());
    let e = CMat::identity(n_s, n_s) - (&p + p.adjoint()).scale(inv_xi)
        + (noise + &p * p.adjoint()).scale(inv_xi * inv_xi);
    hermitian_part(&e)
}

pub fn mse_matrices(
    channel: &ChannelRealization,
    state: &HybridState,
    config: &SystemConfig,
) -> Vec<CMat> {
    (0..channel.n_subcarriers())
        .map(|k| mse_matrix(channel, state, config, k))
        .collect()
}

/// `tr(Lambda E) - ln|Lambda|` for one subcarrier.
pub fn wmmse_term(weight: &CMat, mse: &CMat) -> Result<f64> {
    Ok(trace(&(weight * mse)).re - logdet_hpd(weight, "weight matrix")?)
}

/// `(1/K) sum_k tr(Lambda_k E_k) - ln|Lambda_k|` (natural log).
pub fn wmmse_objective(
    channel: &ChannelRealization,
    state: &HybridState,
    config: &SystemConfig,
) -> Result<f64> {
    check_channel(channel, state, config)?;
    let mut total = 0.0;
    for k in 0..channel.n_subcarriers() {
        total += wmmse_term(&state.weights[k], &mse_matrix(channel, state, config, k))?;
    }
    Ok(total / channel.n_subcarriers() as f64)
}

/// `(1/K) sum_k -log2|E_k|`, the rate implied by the MSE matrices.
pub fn mse_rate(
    channel: &ChannelRealization,
    state: &HybridState,
    config: &SystemConfig,
) -> Result<f64> {
    let mut total = 0.0;
    for k in 0..channel.n_subcarriers() {
        total -= logdet_hpd(&mse_matrix(channel, state, config, k), "MSE matrix")?;
    }
    Ok(total / (channel.n_subcarriers() as f64 * LN_2))
}
