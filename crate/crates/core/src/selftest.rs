//! Quick internal consistency checks run by `hbf selftest`.

use std::f64::consts::{LN_2, TAU};

use crate::analog::{build_subproblem, ei_coefficients, euclidean_gradient, SubproblemSide};
use crate::beamformer::{AnalogBeamformer, HybridState};
use crate::channel::{generate_channel, ula_response, ArrayGeometry};
use crate::config::SystemConfig;
use crate::digital::{update_combiners, update_weights};
use crate::driver::{
    alternating_optimize, initialize, AlgorithmVariant, InitStrategy, MONOTONE_SLACK,
};
use crate::error::Result;
use crate::linalg::{fro_norm_sqr, unit, C64};
use crate::metrics::{spectral_efficiency, wmmse_objective};
use crate::rng;

#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn small_config() -> SystemConfig {
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

fn check(name: &'static str, value: f64, tol: f64) -> CheckResult {
    CheckResult {
        name,
        passed: value.is_finite() && value <= tol,
        detail: format!("error {value:.3e} (tolerance {tol:.0e})"),
    }
}

fn failed(name: &'static str, err: crate::error::HbfError) -> CheckResult {
    CheckResult {
        name,
        passed: false,
        detail: err.to_string(),
    }
}

fn ula_norm() -> f64 {
    let g = ArrayGeometry::new(16);
    (0..32)
        .map(|i| (ula_response(TAU * i as f64 / 32.0, &g).norm_squared() - 1.0).abs())
        .fold(0.0, f64::max)
}

fn subcarrier_relation(config: &SystemConfig) -> Result<f64> {
    let ch = generate_channel(config, 3)?;
    let k = config.n_subcarriers as f64;
    let rotated = ch.matrices[0].map(|z| z * unit(-TAU / k));
    Ok((&ch.matrices[1] - rotated).norm())
}

fn rate_identity(config: &SystemConfig) -> Result<f64> {
    let ch = generate_channel(config, 5)?;
    let mut state = HybridState::random(config, &mut rng::stream(5, rng::INIT_STREAM));
    update_combiners(&ch, &mut state, config)?;
    update_weights(&ch, &mut state, config)?;
    let j = wmmse_objective(&ch, &state, config)?;
    let r = spectral_efficiency(&ch, &state, config)?.rate;
    Ok((j - (config.n_streams as f64 - r * LN_2)).abs())
}

fn gradient_error(config: &SystemConfig, side: SubproblemSide) -> Result<f64> {
    let ch = generate_channel(config, 7)?;
    let state = HybridState::random(config, &mut rng::stream(7, rng::INIT_STREAM));
    let sub = build_subproblem(side, &ch, &state, config)?;
    let x = match side {
        SubproblemSide::Precoder => &state.f_rf,
        SubproblemSide::Combiner => &state.w_rf,
    };
    let grad = euclidean_gradient(&sub, x)?;
    let z = x.support();
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for i in 0..z.len() {
        let row = i;
        let col = x.chain_of(i);
        let mut fd = [0.0; 2];
        for (part, dir) in [C64::new(1.0, 0.0), C64::new(0.0, 1.0)]
            .into_iter()
            .enumerate()
        {
            let mut plus = z.clone();
            let mut minus = z.clone();
            plus[i] += dir * h;
            minus[i] -= dir * h;
            fd[part] = (sub.objective_support(plus.as_slice())?
                - sub.objective_support(minus.as_slice())?)
                / (2.0 * h);
        }
        let g = grad[(row, col)] * 2.0;
        let scale = 1.0 + g.norm();
        worst = worst.max(((g.re - fd[0]).abs() + (g.im - fd[1]).abs()) / scale);
    }
    Ok(worst)
}

fn element_identity(config: &SystemConfig) -> Result<f64> {
    let ch = generate_channel(config, 11)?;
    let state = HybridState::random(config, &mut rng::stream(11, rng::INIT_STREAM));
    let sub = build_subproblem(SubproblemSide::Precoder, &ch, &state, config)?;
    let coeffs = ei_coefficients(&sub, &state.f_rf, 1, 2)?;
    let mut worst: f64 = 0.0;
    for i in 0..8 {
        let theta = TAU * i as f64 / 8.0;
        let mut phases = state.f_rf.phases.clone();
        phases[1][2] = theta;
        let x = AnalogBeamformer::new(state.f_rf.side, phases)?;
        let direct = sub.objective(&x)?;
        worst = worst.max((coeffs.constant + coeffs.function.value(theta) - direct).abs());
    }
    Ok(worst)
}

fn precoder_power(config: &SystemConfig) -> Result<f64> {
    let ch = generate_channel(config, 13)?;
    let state = initialize(&ch, config, InitStrategy::RandomIni, 13)?;
    let budget = config.tx_ratio();
    Ok(state
        .f_d
        .iter()
        .map(|f| (fro_norm_sqr(f) - budget).abs())
        .fold(0.0, f64::max))
}

fn driver_monotone(config: &SystemConfig) -> Result<f64> {
    let ch = generate_channel(config, 17)?;
    let init = initialize(&ch, config, InitStrategy::RandomIni, 17)?;
    let mut worst: f64 = 0.0;
    for variant in [
        AlgorithmVariant::WmmseEi,
        AlgorithmVariant::WmmseMo,
        AlgorithmVariant::MmseEi,
    ] {
        let (_, trace) = alternating_optimize(&ch, config, variant, &init, &config.controls)?;
        let mut prev = trace.initial_objective;
        for s in &trace.steps {
            worst = worst.max(s.objective - prev);
            prev = s.objective;
        }
    }
    Ok(worst)
}

/// Runs every check on a small fixed problem.
pub fn run_selftest() -> Vec<CheckResult> {
    let config = small_config();
    let wrap = |name: &'static str, tol: f64, r: Result<f64>| match r {
        Ok(v) => check(name, v, tol),
        Err(e) => failed(name, e),
    };
    vec![
        check("ula-unit-norm", ula_norm(), 1e-12),
        wrap(
            "subcarrier-phase-relation",
            1e-12,
            subcarrier_relation(&config),
        ),
        wrap("objective-rate-identity", 1e-8, rate_identity(&config)),
        wrap(
            "precoder-gradient",
            1e-5,
            gradient_error(&config, SubproblemSide::Precoder),
        ),
        wrap(
            "combiner-gradient",
            1e-5,
            gradient_error(&config, SubproblemSide::Combiner),
        ),
        wrap("element-function", 1e-9, element_identity(&config)),
        wrap("precoder-power", 1e-10, precoder_power(&config)),
        wrap(
            "objective-monotone",
            MONOTONE_SLACK,
            driver_monotone(&config),
        ),
    ]
}
