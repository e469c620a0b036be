mod common;

use hbf_core::beamformer::{AnalogBeamformer, HybridState, Side};
use hbf_core::digital::{
    mmse_bound_matrix, mmse_upper_bound, optimal_digital_combiner, optimal_digital_precoder,
    optimal_weight, update_combiners, update_precoders, CombinerAux, PrecoderAux,
};
use hbf_core::linalg::{fro_norm_sqr, hermitian_deviation, min_hermitian_eigenvalue, CMat, C64};
use hbf_core::metrics::{mse_matrix, wmmse_objective};
use hbf_core::{generate_channel, ChannelRealization, SystemConfig};
use nalgebra::DVector;
use proptest::prelude::*;

use common::*;

fn real(x: f64) -> C64 {
    C64::new(x, 0.0)
}

/// `tr(Lambda_k E_k)` on one subcarrier.
fn weighted_mse(ch: &ChannelRealization, state: &HybridState, cfg: &SystemConfig, k: usize) -> f64 {
    (&state.weights[k] * mse_matrix(ch, state, cfg, k))
        .trace()
        .re
}

#[test]
fn scalar_wiener_combiner() {
    let g = C64::new(0.8, -0.6);
    let alpha = 0.3;
    let aux = CombinerAux {
        g: vec![CMat::from_element(1, 1, g)],
        alpha: vec![alpha],
    };
    let w_rf = AnalogBeamformer::constant(Side::Rx, 1, 1, 0.0);
    let w = optimal_digital_combiner(&aux, &w_rf, 0).unwrap();
    assert!((w[(0, 0)] - g / (g.norm_sqr() + alpha)).norm() < 1e-15);
}

#[test]
fn combiner_is_locally_optimal() {
    let cfg = tiny_config();
    let mut rng = test_rng(11);
    for seed in 0..10 {
        let ch = generate_channel(&cfg, seed).unwrap();
        let mut state = random_state(&cfg, seed);
        update_combiners(&ch, &mut state, &cfg).unwrap();
        for k in 0..cfg.n_subcarriers {
            let best = weighted_mse(&ch, &state, &cfg, k);
            let w0 = state.w_d[k].clone();
            for _ in 0..100 {
                let d = gaussian_matrix(2, 2, &mut rng);
                let d = d.unscale(d.norm()).scale(1e-3);
                let mut trial = state.clone();
                trial.w_d[k] = &w0 + d;
                assert!(weighted_mse(&ch, &trial, &cfg, k) >= best - 1e-12);
            }
        }
    }
}

#[test]
fn combiner_matches_gradient_descent() {
    let cfg = SystemConfig {
        n_tx: 4,
        n_rx: 4,
        n_tx_rf: 1,
        n_rx_rf: 2,
        n_streams: 1,
        n_subcarriers: 2,
        snr_db: 5.0,
        ..SystemConfig::default()
    };
    for seed in 0..5 {
        let ch = generate_channel(&cfg, seed).unwrap();
        let mut state = random_state(&cfg, seed);
        let w_rf = state.w_rf.expand();
        let q = w_rf.adjoint() * &w_rf;
        let mut expected = Vec::new();
        for k in 0..cfg.n_subcarriers {
            let xi = state.xi[k];
            let t = (w_rf.adjoint() * &ch.matrices[k] * state.precoder(k)).unscale(xi);
            // tr(E) = const - 2 Re tr(W^H T) + tr(W^H S W)
            let s = q.scale(cfg.noise_var() / (xi * xi)) + &t * t.adjoint();
            let step = 1.0 / s.clone().symmetric_eigen().eigenvalues.max();
            let mut w = CMat::zeros(2, 1);
            for _ in 0..20_000 {
                let grad = &s * &w - &t;
                w -= grad.scale(step);
            }
            expected.push(w);
        }
        update_combiners(&ch, &mut state, &cfg).unwrap();
        for (got, want) in state.w_d.iter().zip(&expected) {
            assert!((got - want).norm() < 1e-6, "{got} vs {want}");
        }
    }
}

#[test]
fn precoder_meets_power_budget_exactly() {
    let cfg = reduced_config();
    for seed in 0..5 {
        let ch = generate_channel(&cfg, seed).unwrap();
        let mut state = random_state(&cfg, seed);
        let aux = PrecoderAux::new(&ch, &state, &cfg).unwrap();
        let degenerate = update_precoders(&aux, &mut state).unwrap();
        assert!(!degenerate);
        for k in 0..cfg.n_subcarriers {
            assert!((fro_norm_sqr(&state.f_d[k]) - cfg.tx_ratio()).abs() < 1e-10);
            assert!((fro_norm_sqr(&state.precoder(k)) - 1.0).abs() < 1e-10);
            assert!(state.xi[k] > 0.0);
        }
    }
}

#[test]
fn precoder_beats_feasible_alternatives() {
    let cfg = tiny_config();
    let budget = cfg.tx_ratio();
    let mut rng = test_rng(12);
    for seed in 0..10 {
        let ch = generate_channel(&cfg, seed).unwrap();
        let mut state = random_state(&cfg, seed);
        let before = wmmse_objective(&ch, &state, &cfg).unwrap();
        let aux = PrecoderAux::new(&ch, &state, &cfg).unwrap();
        update_precoders(&aux, &mut state).unwrap();
        let best = wmmse_objective(&ch, &state, &cfg).unwrap();
        assert!(best <= before + 1e-12);

        for k in 0..cfg.n_subcarriers {
            let direction = state.f_d[k].unscale(state.xi[k]);
            for trial_index in 0..100 {
                let mut trial = state.clone();
                if trial_index % 2 == 0 {
                    // nearby point on the power sphere with its matching scale
                    let d = gaussian_matrix(2, 2, &mut rng);
                    let p = &direction + d.unscale(d.norm()).scale(1e-3 * direction.norm());
                    let xi = (budget / fro_norm_sqr(&p)).sqrt();
                    trial.f_d[k] = p.scale(xi);
                    trial.xi[k] = xi;
                } else {
                    // arbitrary feasible precoder and scale
                    let p = gaussian_matrix(2, 2, &mut rng);
                    let radius: f64 = rand::Rng::random::<f64>(&mut rng);
                    trial.f_d[k] = p.unscale(p.norm()).scale(radius * budget.sqrt());
                    trial.xi[k] = 0.1 + 10.0 * rand::Rng::random::<f64>(&mut rng);
                }
                let value = wmmse_objective(&ch, &trial, &cfg).unwrap();
                assert!(value >= best - 1e-12, "seed {seed} k {k}: {value} < {best}");
            }
        }
    }
}

#[test]
fn precoder_falls_back_on_zero_channel() {
    let cfg = tiny_config();
    let zero = vec![CMat::zeros(cfg.n_rx, cfg.n_tx); cfg.n_subcarriers];
    let ch = ChannelRealization::from_matrices(zero, 0).unwrap();
    let state = random_state(&cfg, 1);
    let aux = PrecoderAux::new(&ch, &state, &cfg).unwrap();
    let up = optimal_digital_precoder(&aux, &state.f_rf, &state.weights[0], 0).unwrap();
    assert!(up.degenerate);
    assert_eq!(up.xi, 1.0);
    assert!((fro_norm_sqr(&up.f_d) - cfg.tx_ratio()).abs() < 1e-15);
}

#[test]
fn weight_examples() {
    assert_eq!(
        optimal_weight(&CMat::identity(3, 3)).unwrap(),
        CMat::identity(3, 3)
    );
    let e = CMat::from_diagonal(&DVector::from_vec(vec![real(0.5), real(0.25)]));
    let lam = optimal_weight(&e).unwrap();
    let expected = CMat::from_diagonal(&DVector::from_vec(vec![real(2.0), real(4.0)]));
    assert!((lam - expected).norm() < 1e-14);
}

#[test]
fn bound_matrix_trivial_cases() {
    let cfg = SystemConfig {
        n_tx: 4,
        n_rx: 2,
        n_tx_rf: 2,
        n_rx_rf: 2,
        n_streams: 2,
        n_subcarriers: 1,
        ..SystemConfig::default()
    };
    let aux = PrecoderAux {
        g_tilde: vec![CMat::zeros(2, 4)],
        beta: vec![1.5],
    };
    assert_eq!(mmse_bound_matrix(&aux, &cfg).unwrap(), CMat::zeros(4, 4));

    let c = C64::new(1.2, -0.5);
    let phi = 0.7;
    let mut g = CMat::zeros(2, 4);
    g[(0, 0)] = c;
    let aux = PrecoderAux {
        g_tilde: vec![g],
        beta: vec![phi],
    };
    let a = mmse_bound_matrix(&aux, &cfg).unwrap();
    let s = c.norm_sqr() / phi;
    let mut expected = CMat::zeros(4, 4);
    expected[(0, 0)] = real(s / (cfg.tx_ratio() + s));
    assert!((a - expected).norm() < 1e-14);

    let bad = PrecoderAux {
        g_tilde: vec![CMat::zeros(2, 4)],
        beta: vec![0.0],
    };
    assert!(mmse_bound_matrix(&bad, &cfg).is_err());
}

/// `(1/K) sum_k tr((I + phi_k^-1 G~ F F^H G~^H)^-1)` with identity weights.
fn mmse_analog_objective(aux: &PrecoderAux, f_rf: &CMat) -> f64 {
    let k_total = aux.g_tilde.len();
    (0..k_total)
        .map(|k| {
            let g = &aux.g_tilde[k];
            let n_s = g.nrows();
            let m = CMat::identity(n_s, n_s)
                + (g * f_rf * f_rf.adjoint() * g.adjoint()).unscale(aux.beta[k]);
            m.try_inverse().unwrap().trace().re
        })
        .sum::<f64>()
        / k_total as f64
}

#[test]
fn bound_dominates_objective() {
    let cfg = reduced_config();
    let ch = generate_channel(&cfg, 4).unwrap();
    let mut state = random_state(&cfg, 4);
    update_combiners(&ch, &mut state, &cfg).unwrap();
    let identity = vec![CMat::identity(2, 2); cfg.n_subcarriers];
    let aux = PrecoderAux::with_weights(&ch, &state, &identity, &cfg).unwrap();
    let a = mmse_bound_matrix(&aux, &cfg).unwrap();
    assert!(hermitian_deviation(&a) < 1e-10);
    assert!(min_hermitian_eigenvalue(&a) >= -1e-10);
    for seed in 0..100 {
        let f = random_beamformer(Side::Tx, cfg.n_tx, cfg.n_tx_rf, seed);
        let j = mmse_analog_objective(&aux, &f.expand());
        let bound = mmse_upper_bound(&a, &f, cfg.n_subcarriers);
        assert!(j <= bound, "seed {seed}: {j} > {bound}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn precoder_power_is_active(seed in 0u64..100_000, snr in -15.0f64..15.0) {
        let cfg = SystemConfig { snr_db: snr, ..tiny_config() };
        let ch = generate_channel(&cfg, seed).unwrap();
        let mut state = random_state(&cfg, seed);
        let aux = PrecoderAux::new(&ch, &state, &cfg).unwrap();
        update_precoders(&aux, &mut state).unwrap();
        for f in &state.f_d {
            prop_assert!((fro_norm_sqr(f) - cfg.tx_ratio()).abs() < 1e-10);
        }
        state.check_invariants(&cfg).unwrap();
    }
}
