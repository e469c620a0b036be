mod common;

use hbf_core::beamformer::is_quantized_phase;
use hbf_core::driver::{water_filling, StepLabel, TraceStep, MONOTONE_SLACK};
use hbf_core::linalg::{
    fro_norm_sqr, hermitian_deviation, identity_columns, min_hermitian_eigenvalue, CMat, C64,
};
use hbf_core::metrics::mse_matrix;
use hbf_core::{
    alternating_optimize, fd_baseline, generate_channel, initialize, AlgorithmVariant,
    ChannelRealization, ConvergenceTrace, ExitReason, InitStrategy, SolverControls, StepOrder,
    SystemConfig,
};
use proptest::prelude::*;

use common::*;

const VARIANTS: [AlgorithmVariant; 6] = [
    AlgorithmVariant::WmmseEi,
    AlgorithmVariant::WmmseMo,
    AlgorithmVariant::MmseEi,
    AlgorithmVariant::WmmseEiQ(2),
    AlgorithmVariant::MmseEiQ(3),
    AlgorithmVariant::WmmseMoU(1),
];

fn small_config() -> SystemConfig {
    SystemConfig {
        n_tx: 16,
        n_rx: 8,
        n_tx_rf: 4,
        n_rx_rf: 2,
        n_streams: 2,
        n_subcarriers: 8,
        snr_db: -6.0,
        ..SystemConfig::default()
    }
}

fn run(
    cfg: &SystemConfig,
    variant: AlgorithmVariant,
    seed: u64,
) -> (hbf_core::HybridState, ConvergenceTrace) {
    let ch = generate_channel(cfg, seed).unwrap();
    let init = initialize(&ch, cfg, InitStrategy::RandomIni, seed).unwrap();
    alternating_optimize(&ch, cfg, variant, &init, &cfg.controls).unwrap()
}

fn check_trace(trace: &ConvergenceTrace, variant: AlgorithmVariant, order: StepOrder) {
    assert_eq!(trace.first_violation(MONOTONE_SLACK), None, "{variant}");
    let mut prev = trace.initial_objective;
    for s in &trace.steps {
        assert!(s.objective <= prev + MONOTONE_SLACK);
        prev = s.objective;
    }
    for w in trace.rates.windows(2).skip(1) {
        assert!(w[1] >= w[0] - MONOTONE_SLACK);
    }
    let expected: Vec<StepLabel> = match (order, variant.is_mmse()) {
        (StepOrder::PrecoderFirst, false) => vec![
            StepLabel::S1Precoder,
            StepLabel::S2Combiner,
            StepLabel::S3Weights,
        ],
        (StepOrder::PrecoderFirst, true) => vec![StepLabel::S1Precoder, StepLabel::S2Combiner],
        (StepOrder::CombinerFirst, false) => vec![
            StepLabel::S2Combiner,
            StepLabel::S3Weights,
            StepLabel::S1Precoder,
        ],
        (StepOrder::CombinerFirst, true) => vec![StepLabel::S2Combiner, StepLabel::S1Precoder],
    };
    for (i, s) in trace.steps.iter().enumerate() {
        assert_eq!(s.label, expected[i % expected.len()]);
        assert_eq!(s.outer, i / expected.len() + 1);
    }
    assert_eq!(trace.rates.len(), trace.outer_iterations + 1);
}

#[test]
fn random_start_is_feasible_and_deterministic() {
    let cfg = small_config();
    let ch = generate_channel(&cfg, 3).unwrap();
    let a = initialize(&ch, &cfg, InitStrategy::RandomIni, 3).unwrap();
    let b = initialize(&ch, &cfg, InitStrategy::RandomIni, 3).unwrap();
    assert_eq!(a, b);
    a.check_invariants(&cfg).unwrap();
    for k in 0..cfg.n_subcarriers {
        assert!((fro_norm_sqr(&a.f_d[k]) - cfg.tx_ratio()).abs() < 1e-10);
        assert_eq!(a.w_d[k], identity_columns(2, 2));
        assert_eq!(a.weights[k], CMat::identity(2, 2));
    }
    for x in [&a.f_rf, &a.w_rf] {
        assert!(x
            .expand()
            .iter()
            .all(|z| z.norm() == 0.0 || (z.norm() - 1.0).abs() < 1e-12));
    }
    let c = initialize(&ch, &cfg, InitStrategy::RandomIni, 4).unwrap();
    assert_ne!(a.f_rf, c.f_rf);
}

#[test]
fn mmse_start_uses_inverse_mse_weights() {
    let cfg = small_config();
    let ch = generate_channel(&cfg, 5).unwrap();
    let state = initialize(&ch, &cfg, InitStrategy::MmseIni, 5).unwrap();
    state.check_invariants(&cfg).unwrap();
    for k in 0..cfg.n_subcarriers {
        let product = &state.weights[k] * mse_matrix(&ch, &state, &cfg, k);
        assert!((product - CMat::identity(2, 2)).norm() < 1e-9);
    }
    assert_eq!(
        state,
        initialize(&ch, &cfg, InitStrategy::MmseIni, 5).unwrap()
    );
}

#[test]
fn all_variants_keep_trace_contracts() {
    let cfg = small_config();
    for variant in VARIANTS {
        for seed in 0..3 {
            let (state, trace) = run(&cfg, variant, seed);
            check_trace(&trace, variant, StepOrder::PrecoderFirst);
            state.check_invariants(&cfg).unwrap();
            if variant.is_mmse() {
                assert!(state.weights.iter().all(|w| *w == CMat::identity(2, 2)));
            }
            for w in &state.weights {
                assert!(hermitian_deviation(w) < 1e-10 && min_hermitian_eigenvalue(w) > 0.0);
            }
        }
    }
}

#[test]
fn runs_are_deterministic() {
    let cfg = small_config();
    for variant in [AlgorithmVariant::WmmseEi, AlgorithmVariant::WmmseMo] {
        let a = run(&cfg, variant, 8);
        let b = run(&cfg, variant, 8);
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
    }
}

#[test]
fn converged_runs_echo_the_stop_rule() {
    let cfg = small_config();
    for seed in 0..3 {
        let (_, trace) = run(&cfg, AlgorithmVariant::WmmseEi, seed);
        if trace.exit_reason == ExitReason::Converged {
            let n = trace.rates.len();
            let (a, b) = (trace.rates[n - 2], trace.rates[n - 1]);
            assert!((b - a).abs() <= cfg.controls.outer_rel_tol * a.abs());
        } else {
            assert_eq!(trace.outer_iterations, cfg.controls.outer_cap);
        }
    }
}

#[test]
fn quantized_variants_end_on_the_alphabet() {
    let cfg = small_config();
    for variant in [
        AlgorithmVariant::WmmseEiQ(2),
        AlgorithmVariant::MmseEiQ(3),
        AlgorithmVariant::WmmseMoU(1),
    ] {
        let bits = variant.bits().unwrap();
        for seed in 0..2 {
            let (state, trace) = run(&cfg, variant, seed);
            for x in [&state.f_rf, &state.w_rf] {
                assert!(x
                    .phases
                    .iter()
                    .flatten()
                    .all(|&p| is_quantized_phase(p, bits)));
            }
            if let AlgorithmVariant::WmmseMoU(_) = variant {
                assert!(trace.projected_rate.is_some());
                assert_eq!(trace.final_rate(), trace.projected_rate.unwrap());
            }
        }
    }
}

#[test]
fn combiner_first_order_keeps_contracts() {
    let mut cfg = small_config();
    cfg.controls.step_order = StepOrder::CombinerFirst;
    for variant in [
        AlgorithmVariant::WmmseEi,
        AlgorithmVariant::WmmseMo,
        AlgorithmVariant::MmseEi,
    ] {
        for seed in 0..2 {
            let ch = generate_channel(&cfg, seed).unwrap();
            let init = initialize(&ch, &cfg, InitStrategy::RandomIni, seed).unwrap();
            let (state, trace) =
                alternating_optimize(&ch, &cfg, variant, &init, &cfg.controls).unwrap();
            check_trace(&trace, variant, StepOrder::CombinerFirst);
            state.check_invariants(&cfg).unwrap();
        }
    }
}

#[test]
fn fully_digital_baseline_dominates() {
    let cfg = small_config();
    for seed in 0..3 {
        let ch = generate_channel(&cfg, seed).unwrap();
        let fd = fd_baseline(&ch, &cfg).unwrap();
        for variant in VARIANTS {
            let (_, trace) = run(&cfg, variant, seed);
            assert!(
                trace.final_rate() <= fd + 1e-9,
                "{variant}: {} > {fd}",
                trace.final_rate()
            );
        }
    }
}

#[test]
fn zero_channel_stops_after_first_check() {
    let cfg = small_config();
    let zero = vec![CMat::zeros(cfg.n_rx, cfg.n_tx); cfg.n_subcarriers];
    let ch = ChannelRealization::from_matrices(zero, 0).unwrap();
    let init = initialize(&ch, &cfg, InitStrategy::RandomIni, 0).unwrap();
    for variant in [
        AlgorithmVariant::WmmseEi,
        AlgorithmVariant::WmmseMo,
        AlgorithmVariant::MmseEi,
    ] {
        let (_, trace) = alternating_optimize(&ch, &cfg, variant, &init, &cfg.controls).unwrap();
        assert!(trace.rates.iter().all(|&r| r == 0.0));
        assert!(trace.steps.iter().all(|s| s.rate == 0.0));
        assert_eq!(trace.outer_iterations, 1);
        assert_eq!(trace.exit_reason, ExitReason::Converged);
        assert!(trace.degenerate);
    }
    assert_eq!(fd_baseline(&ch, &cfg).unwrap(), 0.0);
}

#[test]
fn mmse_start_needs_fewer_iterations() {
    let cfg = small_config();
    let (mut random_iters, mut mmse_iters) = (0, 0);
    let (mut random_rate, mut mmse_rate) = (0.0, 0.0);
    for seed in 0..20 {
        let ch = generate_channel(&cfg, seed).unwrap();
        for (strategy, iters, rate) in [
            (InitStrategy::RandomIni, &mut random_iters, &mut random_rate),
            (InitStrategy::MmseIni, &mut mmse_iters, &mut mmse_rate),
        ] {
            let init = initialize(&ch, &cfg, strategy, seed).unwrap();
            let (_, trace) =
                alternating_optimize(&ch, &cfg, AlgorithmVariant::WmmseEi, &init, &cfg.controls)
                    .unwrap();
            *iters += trace.outer_iterations;
            *rate += trace.final_rate();
        }
    }
    assert!(mmse_iters <= random_iters, "{mmse_iters} > {random_iters}");
    assert!(mmse_rate >= random_rate - 1e-6 * random_rate.abs());
}

#[test]
fn invalid_inputs_are_rejected() {
    let cfg = small_config();
    let ch = generate_channel(&cfg, 1).unwrap();
    let init = initialize(&ch, &cfg, InitStrategy::RandomIni, 1).unwrap();
    for variant in [AlgorithmVariant::WmmseEiQ(0), AlgorithmVariant::MmseEiQ(17)] {
        assert!(alternating_optimize(&ch, &cfg, variant, &init, &cfg.controls).is_err());
    }
    let controls = SolverControls {
        outer_cap: 0,
        ..SolverControls::default()
    };
    assert!(alternating_optimize(&ch, &cfg, AlgorithmVariant::WmmseEi, &init, &controls).is_err());
    let mut bad = init.clone();
    bad.f_d[0] = bad.f_d[0].scale(2.0);
    assert!(
        alternating_optimize(&ch, &cfg, AlgorithmVariant::WmmseEi, &bad, &cfg.controls).is_err()
    );
    let other = generate_channel(
        &SystemConfig {
            n_tx: 32,
            ..cfg.clone()
        },
        1,
    )
    .unwrap();
    assert!(alternating_optimize(
        &other,
        &cfg,
        AlgorithmVariant::WmmseEi,
        &init,
        &cfg.controls
    )
    .is_err());
}

#[test]
fn trace_checker_flags_violations() {
    let step = |objective: f64| TraceStep {
        label: StepLabel::S1Precoder,
        outer: 1,
        objective,
        rate: 0.0,
    };
    let mut trace = ConvergenceTrace {
        steps: vec![step(1.0), step(0.9)],
        initial_objective: 1.5,
        rates: vec![0.0, 1.0, 2.0],
        exit_reason: ExitReason::Converged,
        outer_iterations: 2,
        degenerate: false,
        projected_rate: None,
    };
    assert_eq!(trace.first_violation(1e-9), None);
    trace.steps.push(step(0.95));
    assert!(trace.first_violation(1e-9).is_some());
    trace.steps.pop();
    trace.rates.push(1.5);
    assert!(trace.first_violation(1e-9).is_some());
}

fn diag_channel(values: &[f64], m: usize, n: usize) -> ChannelRealization {
    let mut h = CMat::zeros(m, n);
    for (i, v) in values.iter().enumerate() {
        h[(i, i)] = C64::new(*v, 0.0);
    }
    ChannelRealization::from_matrices(vec![h], 0).unwrap()
}

#[test]
fn fully_digital_closed_forms() {
    let cfg = SystemConfig {
        n_tx: 4,
        n_rx: 2,
        n_tx_rf: 1,
        n_rx_rf: 1,
        n_streams: 1,
        n_subcarriers: 1,
        snr_db: 3.0,
        ..SystemConfig::default()
    };
    let noise = cfg.noise_var();
    // rank one
    let ch = diag_channel(&[2.0], 2, 4);
    let expected = (1.0 + 4.0 / noise).log2();
    assert!((fd_baseline(&ch, &cfg).unwrap() - expected).abs() < 1e-12);

    let cfg = SystemConfig {
        n_tx_rf: 2,
        n_rx_rf: 2,
        n_streams: 2,
        ..cfg
    };
    let ch = diag_channel(&[1.5, 1.5], 2, 4);
    let expected = 2.0 * (1.0 + 2.25 / (2.0 * noise)).log2();
    assert!((fd_baseline(&ch, &cfg).unwrap() - expected).abs() < 1e-12);
}

proptest! {
    #[test]
    fn water_filling_satisfies_kkt(gains in proptest::collection::vec(0.0f64..50.0, 1..8), total in 0.01f64..10.0) {
        let p = water_filling(&gains, total);
        let used: f64 = p.iter().sum();
        prop_assert!(p.iter().all(|&x| x >= 0.0));
        if gains.iter().any(|&g| g > 0.0) {
            prop_assert!((used - total).abs() < 1e-8 * total.max(1.0));
            let level = p
                .iter()
                .zip(&gains)
                .find(|(&x, _)| x > 0.0)
                .map(|(x, g)| x + 1.0 / g)
                .unwrap();
            for (&x, &g) in p.iter().zip(&gains) {
                if x > 0.0 {
                    prop_assert!((x + 1.0 / g - level).abs() < 1e-8 * level);
                } else if g > 0.0 {
                    prop_assert!(1.0 / g >= level - 1e-8 * level);
                }
            }
        }
    }

    #[test]
    fn fd_baseline_beats_random_states(seed in 0u64..10_000) {
        let cfg = tiny_config();
        let ch = generate_channel(&cfg, seed).unwrap();
        let state = random_state(&cfg, seed);
        let r = hbf_core::metrics::spectral_efficiency(&ch, &state, &cfg).unwrap().rate;
        prop_assert!(r <= fd_baseline(&ch, &cfg).unwrap() + 1e-9);
    }
}
