//! Closed-form digital combiner, digital precoder with scaling, weights, and
//! the MMSE upper-bound matrix.

use crate::beamformer::{block_adjoint_times, AnalogBeamformer, HybridState};
use crate::channel::ChannelRealization;
use crate::config::SystemConfig;
use crate::error::{HbfError, Result};
use crate::linalg::{
    fro_norm_sqr, hermitian_condition, hermitian_part, hpd_inverse, hpd_solve, identity_columns,
    trace, CMat, MAX_CONDITION,
};

/// Per-subcarrier data of the digital combiner update.
#[derive(Debug, Clone)]
pub struct CombinerAux {
    /// `G_k = xi_k^-1 H_k F_k`, `M x N_s`.
    pub g: Vec<CMat>,
    /// `alpha_k = sigma^2 xi_k^-2 M / N_r^RF`.
    pub alpha: Vec<f64>,
}

impl CombinerAux {
    pub fn new(
        channel: &ChannelRealization,
        state: &HybridState,
        config: &SystemConfig,
    ) -> Result<Self> {
        let m_over_nr = config.n_rx as f64 / config.n_rx_rf as f64;
        let mut g = Vec::with_capacity(channel.n_subcarriers());
        let mut alpha = Vec::with_capacity(channel.n_subcarriers());
        for (k, h) in channel.matrices.iter().enumerate() {
            let xi = state.xi[k];
            if !(xi > 0.0) {
                return Err(HbfError::NonPositiveScale { k, value: xi });
            }
            g.push((h * state.precoder(k)).unscale(xi));
            alpha.push(config.noise_var() * m_over_nr / (xi * xi));
        }
        Ok(Self { g, alpha })
    }
}

/// `(W_RF^H G G^H W_RF + alpha I)^-1 W_RF^H G`.
pub fn optimal_digital_combiner(
    aux: &CombinerAux,
    w_rf: &AnalogBeamformer,
    k: usize,
) -> Result<CMat> {
    let alpha = aux.alpha[k];
    if !(alpha > 0.0) {
        return Err(HbfError::NonPositiveScale { k, value: alpha });
    }
    let t = block_adjoint_times(w_rf, &aux.g[k]);
    let n = t.nrows();
    let m = &t * t.adjoint() + CMat::identity(n, n).scale(alpha);
    hpd_solve(&m, &t, "digital combiner system")
}

/// Per-subcarrier data of the digital precoder update.
#[derive(Debug, Clone)]
pub struct PrecoderAux {
    /// `G~_k = W_k^H H_k`, `N_s x N`.
    pub g_tilde: Vec<CMat>,
    /// `beta_k = sigma^2 N M tr(Lambda_k W_D,k^H W_D,k) / (N_t^RF N_r^RF)`.
    pub beta: Vec<f64>,
}

impl PrecoderAux {
    pub fn new(
        channel: &ChannelRealization,
        state: &HybridState,
        config: &SystemConfig,
    ) -> Result<Self> {
        Self::with_weights(channel, state, &state.weights, config)
    }

    /// Same as `new` but with explicit weights (identity for the MMSE bound).
    pub fn with_weights(
        channel: &ChannelRealization,
        state: &HybridState,
        weights: &[CMat],
        config: &SystemConfig,
    ) -> Result<Self> {
        let c = config.noise_var() * (config.n_tx * config.n_rx) as f64
            / (config.n_tx_rf * config.n_rx_rf) as f64;
        let mut g_tilde = Vec::with_capacity(channel.n_subcarriers());
        let mut beta = Vec::with_capacity(channel.n_subcarriers());
        for (k, h) in channel.matrices.iter().enumerate() {
            let w = state.combiner(k);
            g_tilde.push(w.adjoint() * h);
            let wd = &state.w_d[k];
            beta.push(c * trace(&(&weights[k] * (wd.adjoint() * wd))).re);
        }
        Ok(Self { g_tilde, beta })
    }

    /// `F~_k = F_RF^H G~^H Lambda G~ F_RF + beta I`.
    pub fn f_tilde(&self, f_rf: &AnalogBeamformer, weight: &CMat, k: usize) -> CMat {
        let gf = block_times_right(&self.g_tilde[k], f_rf);
        let n = gf.ncols();
        hermitian_part(&(gf.adjoint() * weight * &gf)) + CMat::identity(n, n).scale(self.beta[k])
    }
}

/// `G X` for block-diagonal `X` applied from the right.
fn block_times_right(g: &CMat, x: &AnalogBeamformer) -> CMat {
    block_adjoint_times(x, &g.adjoint()).adjoint()
}

#[derive(Debug, Clone)]
pub struct PrecoderUpdate {
    pub f_d: CMat,
    pub xi: f64,
    /// The channel seen through the combiner vanished; a fixed feasible precoder was used.
    pub degenerate: bool,
}

/// `F_D = xi F~^-1 F_RF^H G~^H Lambda` with `xi` chosen so `||F_D||^2 = N_t^RF / N`.
pub fn optimal_digital_precoder(
    aux: &PrecoderAux,
    f_rf: &AnalogBeamformer,
    weight: &CMat,
    k: usize,
) -> Result<PrecoderUpdate> {
    let beta = aux.beta[k];
    if !(beta > 0.0) {
        return Err(HbfError::NonPositiveScale { k, value: beta });
    }
    let budget = f_rf.ratio();
    let rhs = block_adjoint_times(f_rf, &aux.g_tilde[k].adjoint()) * weight;
    let p = hpd_solve(
        &aux.f_tilde(f_rf, weight, k),
        &rhs,
        "digital precoder system",
    )?;
    let power = fro_norm_sqr(&p);
    if !(power > 0.0) || !power.is_finite() {
        let n_s = weight.nrows();
        let f_d = identity_columns(f_rf.n_rf(), n_s).scale((budget / n_s as f64).sqrt());
        return Ok(PrecoderUpdate {
            f_d,
            xi: 1.0,
            degenerate: true,
        });
    }
    let xi = (budget / power).sqrt();
    Ok(PrecoderUpdate {
        f_d: p.scale(xi),
        xi,
        degenerate: false,
    })
}

/// `Lambda = E^-1`.
pub fn optimal_weight(mse: &CMat) -> Result<CMat> {
    let cond = hermitian_condition(mse);
    if !(cond <= MAX_CONDITION) {
        return Err(HbfError::IllConditioned {
            what: "MSE matrix".into(),
            cond,
        });
    }
    Ok(hermitian_part(&hpd_inverse(mse, "MSE matrix")?))
}

/// `A = sum_k phi_k^-1 G~^H (rho I + phi_k^-1 G~ G~^H)^-1 G~` with `phi_k` the
/// identity-weight `beta_k` of `aux`.
pub fn mmse_bound_matrix(aux: &PrecoderAux, config: &SystemConfig) -> Result<CMat> {
    let n = config.n_tx;
    let rho = config.tx_ratio();
    let mut a = CMat::zeros(n, n);
    for (k, g) in aux.g_tilde.iter().enumerate() {
        let phi = aux.beta[k];
        if !(phi > 0.0) {
            return Err(HbfError::NonPositiveScale { k, value: phi });
        }
        let n_s = g.nrows();
        let inner = CMat::identity(n_s, n_s).scale(rho) + (g * g.adjoint()).unscale(phi);
        let solved = hpd_solve(&inner, g, "bound inner matrix")?;
        a += (g.adjoint() * solved).unscale(phi);
    }
    Ok(hermitian_part(&a))
}

/// `N^2 / N_t^RF - N / (K N_t^RF) tr(F_RF^H A F_RF)`.
pub fn mmse_upper_bound(a: &CMat, f_rf: &AnalogBeamformer, n_subcarriers: usize) -> f64 {
    let n = f_rf.n_ant() as f64;
    let nt = f_rf.n_rf() as f64;
    let f = f_rf.expand();
    let quad = trace(&(f.adjoint() * a * &f)).re;
    n * n / nt - n / (n_subcarriers as f64 * nt) * quad
}

/// Applies the precoder update on every subcarrier; returns true if any was degenerate.
pub fn update_precoders(aux: &PrecoderAux, state: &mut HybridState) -> Result<bool> {
    let mut degenerate = false;
    for k in 0..state.n_subcarriers() {
        let up = optimal_digital_precoder(aux, &state.f_rf, &state.weights[k], k)?;
        degenerate |= up.degenerate;
        state.f_d[k] = up.f_d;
        state.xi[k] = up.xi;
    }
    Ok(degenerate)
}

pub fn update_combiners(
    channel: &ChannelRealization,
    state: &mut HybridState,
    config: &SystemConfig,
) -> Result<()> {
    let aux = CombinerAux::new(channel, state, config)?;
    for k in 0..state.n_subcarriers() {
        state.w_d[k] = optimal_digital_combiner(&aux, &state.w_rf, k)?;
    }
    Ok(())
}

pub fn update_weights(
    channel: &ChannelRealization,
    state: &mut HybridState,
    config: &SystemConfig,
) -> Result<()> {
    for k in 0..state.n_subcarriers() {
        let e = crate::metrics::mse_matrix(channel, state, config, k);
        state.weights[k] = optimal_weight(&e)?;
    }
    Ok(())
}
