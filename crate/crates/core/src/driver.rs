//! Alternating optimization of the hybrid beamformers.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::analog::{build_subproblem, ei_solve, mo_solve, surrogate_solve, SubproblemSide};
use crate::beamformer::{AnalogBeamformer, HybridState, Side};
use crate::channel::ChannelRealization;
use crate::config::SystemConfig;
use crate::digital::{update_combiners, update_precoders, update_weights, PrecoderAux};
use crate::error::{HbfError, Result};
use crate::linalg::{identity_columns, CMat};
use crate::metrics::{reported_rate, wmmse_objective};
use crate::rng;

/// Slack allowed on the monotonicity contracts.
pub const MONOTONE_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AlgorithmVariant {
    WmmseEi,
    WmmseMo,
    MmseEi,
    WmmseEiQ(u32),
    MmseEiQ(u32),
    WmmseMoU(u32),
}

impl AlgorithmVariant {
    pub fn bits(&self) -> Option<u32> {
        match *self {
            Self::WmmseEiQ(b) | Self::MmseEiQ(b) | Self::WmmseMoU(b) => Some(b),
            _ => None,
        }
    }

    pub fn is_mmse(&self) -> bool {
        matches!(self, Self::MmseEi | Self::MmseEiQ(_))
    }

    /// The unquantized algorithm family.
    pub fn base(&self) -> Self {
        match self {
            Self::WmmseEi | Self::WmmseEiQ(_) => Self::WmmseEi,
            Self::WmmseMo | Self::WmmseMoU(_) => Self::WmmseMo,
            Self::MmseEi | Self::MmseEiQ(_) => Self::MmseEi,
        }
    }

    /// The quantized form of this variant's family.
    pub fn with_bits(&self, bits: u32) -> Self {
        match self.base() {
            Self::WmmseEi => Self::WmmseEiQ(bits),
            Self::WmmseMo => Self::WmmseMoU(bits),
            _ => Self::MmseEiQ(bits),
        }
    }

    /// Position of the family in output ordering.
    pub fn family_index(&self) -> usize {
        match self.base() {
            Self::WmmseEi => 0,
            Self::WmmseMo => 1,
            _ => 2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.bits() {
            Some(0) => Err(HbfError::InvalidConfig(format!(
                "{self}: quantized variants need at least one bit"
            ))),
            Some(b) if b > 16 => Err(HbfError::InvalidConfig(format!(
                "{self}: at most 16 bits are supported"
            ))),
            _ => Ok(()),
        }
    }
}

impl fmt::Display for AlgorithmVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::WmmseEi => write!(f, "wmmse-ei"),
            Self::WmmseMo => write!(f, "wmmse-mo"),
            Self::MmseEi => write!(f, "mmse-ei"),
            Self::WmmseEiQ(b) => write!(f, "wmmse-ei-q{b}"),
            Self::MmseEiQ(b) => write!(f, "mmse-ei-q{b}"),
            Self::WmmseMoU(b) => write!(f, "wmmse-mo-u{b}"),
        }
    }
}

impl FromStr for AlgorithmVariant {
    type Err = HbfError;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase().replace('_', "-");
        let parse_bits = |rest: &str| {
            rest.parse::<u32>()
                .map_err(|_| HbfError::InvalidConfig(format!("bad bit count in variant '{s}'")))
        };
        let v = match lower.as_str() {
            "wmmse-ei" => Self::WmmseEi,
            "wmmse-mo" => Self::WmmseMo,
            "mmse-ei" => Self::MmseEi,
            other => {
                if let Some(rest) = other.strip_prefix("wmmse-ei-q") {
                    Self::WmmseEiQ(parse_bits(rest)?)
                } else if let Some(rest) = other.strip_prefix("mmse-ei-q") {
                    Self::MmseEiQ(parse_bits(rest)?)
                } else if let Some(rest) = other.strip_prefix("wmmse-mo-u") {
                    Self::WmmseMoU(parse_bits(rest)?)
                } else {
                    return Err(HbfError::InvalidConfig(format!("unknown variant '{s}'")));
                }
            }
        };
        v.validate()?;
        Ok(v)
    }
}

impl Serialize for AlgorithmVariant {
    fn serialize<S: serde::Serializer>(
        &self,
        serializer: S,
    ) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for AlgorithmVariant {
    fn deserialize<D: serde::Deserializer<'de>>(
        deserializer: D,
    ) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum StepOrder {
    /// Precoder, combiner, weights.
    #[default]
    PrecoderFirst,
    /// Combiner, weights, precoder.
    CombinerFirst,
}

/// Iteration caps and tolerances of the outer loop and the analog solvers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverControls {
    pub outer_cap: usize,
    /// Relative change of the rate below which the outer loop stops.
    pub outer_rel_tol: f64,
    pub ei_sweep_cap: usize,
    pub ei_rel_tol: f64,
    pub mo_iter_cap: usize,
    pub mo_grad_tol: f64,
    /// Final bracket width of the 1-D phase search, radians.
    pub line_search_tol: f64,
    pub step_order: StepOrder,
}

impl Default for SolverControls {
    fn default() -> Self {
        Self {
            outer_cap: 30,
            outer_rel_tol: 1e-4,
            ei_sweep_cap: 5,
            ei_rel_tol: 1e-4,
            mo_iter_cap: 50,
            mo_grad_tol: 1e-6,
            line_search_tol: 1e-3,
            step_order: StepOrder::PrecoderFirst,
        }
    }
}

impl SolverControls {
    pub fn validate(&self) -> Result<()> {
        let caps = [
            ("outer_cap", self.outer_cap),
            ("ei_sweep_cap", self.ei_sweep_cap),
            ("mo_iter_cap", self.mo_iter_cap),
        ];
        for (name, v) in caps {
            if v == 0 {
                return Err(HbfError::InvalidConfig(format!("{name} must be positive")));
            }
        }
        let tols = [
            ("outer_rel_tol", self.outer_rel_tol),
            ("ei_rel_tol", self.ei_rel_tol),
            ("mo_grad_tol", self.mo_grad_tol),
            ("line_search_tol", self.line_search_tol),
        ];
        for (name, v) in tols {
            if !(v > 0.0 && v.is_finite()) {
                return Err(HbfError::InvalidConfig(format!("{name} must be positive")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum InitStrategy {
    #[default]
    RandomIni,
    MmseIni,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StepLabel {
    #[serde(rename = "S1_precoder")]
    S1Precoder,
    #[serde(rename = "S2_combiner")]
    S2Combiner,
    #[serde(rename = "S3_weights")]
    S3Weights,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub label: StepLabel,
    pub outer: usize,
    /// WMMSE objective after the step.
    pub objective: f64,
    /// Reported rate after the step, bits/s/Hz.
    pub rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExitReason {
    Converged,
    MaxIterations,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTrace {
    pub steps: Vec<TraceStep>,
    pub initial_objective: f64,
    /// `R^(0), R^(1), ...`: the initial rate then one sample per outer iteration.
    pub rates: Vec<f64>,
    pub exit_reason: ExitReason,
    pub outer_iterations: usize,
    pub degenerate: bool,
    /// Rate after the exit-time phase projection of `WmmseMoU`.
    pub projected_rate: Option<f64>,
}

impl ConvergenceTrace {
    pub fn final_rate(&self) -> f64 {
        self.projected_rate
            .unwrap_or_else(|| self.rates.last().copied().unwrap_or(0.0))
    }

    /// First violation of the step-objective or per-iteration rate contracts.
    pub fn first_violation(&self, slack: f64) -> Option<String> {
        let mut prev = self.initial_objective;
        for s in &self.steps {
            if s.objective > prev + slack {
                return Some(format!(
                    "objective rose at iteration {} {:?}: {prev:.12e} -> {:.12e}",
                    s.outer, s.label, s.objective
                ));
            }
            prev = s.objective;
        }
        for n in 2..self.rates.len() {
            if self.rates[n] < self.rates[n - 1] - slack {
                return Some(format!(
                    "rate fell at iteration {n}: {:.12e} -> {:.12e}",
                    self.rates[n - 1],
                    self.rates[n]
                ));
            }
        }
        None
    }
}

fn identity_weights(config: &SystemConfig) -> Vec<CMat> {
    vec![CMat::identity(config.n_streams, config.n_streams); config.n_subcarriers]
}

/// Random phases, identity digital combiners and weights, then the closed-form precoder.
fn random_state(
    channel: &ChannelRealization,
    config: &SystemConfig,
    seed: u64,
) -> Result<HybridState> {
    let mut r = rng::stream(seed, rng::INIT_STREAM);
    let f_rf = AnalogBeamformer::random(Side::Tx, config.n_tx, config.n_tx_rf, &mut r);
    let w_rf = AnalogBeamformer::random(Side::Rx, config.n_rx, config.n_rx_rf, &mut r);
    let k = config.n_subcarriers;
    let mut state = HybridState {
        f_rf,
        w_rf,
        f_d: vec![CMat::zeros(config.n_tx_rf, config.n_streams); k],
        w_d: vec![identity_columns(config.n_rx_rf, config.n_streams); k],
        xi: vec![1.0; k],
        weights: identity_weights(config),
    };
    let aux = PrecoderAux::new(channel, &state, config)?;
    update_precoders(&aux, &mut state)?;
    Ok(state)
}

/// Starting point of an alternating optimization run.
pub fn initialize(
    channel: &ChannelRealization,
    config: &SystemConfig,
    strategy: InitStrategy,
    seed: u64,
) -> Result<HybridState> {
    config.validate()?;
    channel.check_against(config)?;
    let state = random_state(channel, config, seed)?;
    match strategy {
        InitStrategy::RandomIni => Ok(state),
        InitStrategy::MmseIni => {
            let (mut state, _) = alternating_optimize(
                channel,
                config,
                AlgorithmVariant::MmseEi,
                &state,
                &config.controls,
            )?;
            update_weights(channel, &mut state, config)?;
            Ok(state)
        }
    }
}

fn solve_analog(
    side: SubproblemSide,
    channel: &ChannelRealization,
    state: &HybridState,
    config: &SystemConfig,
    variant: AlgorithmVariant,
    controls: &SolverControls,
) -> Result<AnalogBeamformer> {
    let sub = build_subproblem(side, channel, state, config)?;
    let x0 = match side {
        SubproblemSide::Precoder => &state.f_rf,
        SubproblemSide::Combiner => &state.w_rf,
    };
    let x = match variant {
        AlgorithmVariant::WmmseEi | AlgorithmVariant::WmmseEiQ(_) => {
            ei_solve(
                &sub,
                x0,
                variant.bits(),
                controls.ei_sweep_cap,
                controls.ei_rel_tol,
                controls.line_search_tol,
            )?
            .x
        }
        AlgorithmVariant::WmmseMo | AlgorithmVariant::WmmseMoU(_) => {
            mo_solve(&sub, x0, controls.mo_iter_cap, controls.mo_grad_tol)?.x
        }
        AlgorithmVariant::MmseEi | AlgorithmVariant::MmseEiQ(_) => {
            surrogate_solve(
                &sub,
                x0,
                variant.bits(),
                controls.ei_sweep_cap,
                controls.ei_rel_tol,
            )?
            .x
        }
    };
    Ok(x)
}

/// Runs one step in place; returns true if a degenerate precoder update occurred.
fn run_step(
    label: StepLabel,
    channel: &ChannelRealization,
    state: &mut HybridState,
    config: &SystemConfig,
    variant: AlgorithmVariant,
    controls: &SolverControls,
) -> Result<bool> {
    match label {
        StepLabel::S1Precoder => {
            let f_rf = solve_analog(
                SubproblemSide::Precoder,
                channel,
                state,
                config,
                variant,
                controls,
            )?;
            let aux = PrecoderAux::new(channel, state, config)?;
            state.f_rf = f_rf;
            update_precoders(&aux, state)
        }
        StepLabel::S2Combiner => {
            state.w_rf = solve_analog(
                SubproblemSide::Combiner,
                channel,
                state,
                config,
                variant,
                controls,
            )?;
            update_combiners(channel, state, config)?;
            Ok(false)
        }
        StepLabel::S3Weights => {
            update_weights(channel, state, config)?;
            Ok(false)
        }
    }
}

/// Recomputes the digital parts around fixed analog beamformers.
fn refresh_digital(
    channel: &ChannelRealization,
    state: &mut HybridState,
    config: &SystemConfig,
    with_weights: bool,
) -> Result<bool> {
    let aux = PrecoderAux::new(channel, state, config)?;
    let degenerate = update_precoders(&aux, state)?;
    update_combiners(channel, state, config)?;
    if with_weights {
        update_weights(channel, state, config)?;
    }
    Ok(degenerate)
}

/// Alternating minimization over precoder, combiner and weights.
///
/// Every step's objective and every outer iteration's rate are checked
/// against the monotonicity contracts; a violation aborts the run.
pub fn alternating_optimize(
    channel: &ChannelRealization,
    config: &SystemConfig,
    variant: AlgorithmVariant,
    init: &HybridState,
    controls: &SolverControls,
) -> Result<(HybridState, ConvergenceTrace)> {
    config.validate()?;
    controls.validate()?;
    variant.validate()?;
    channel.check_against(config)?;
    init.check_invariants(config)?;

    let mut state = init.clone();
    let mut degenerate = false;
    if variant.is_mmse() {
        state.weights = identity_weights(config);
    }
    if let (Some(bits), false) = (
        variant.bits(),
        matches!(variant, AlgorithmVariant::WmmseMoU(_)),
    ) {
        state.f_rf = state.f_rf.quantize(bits);
        state.w_rf = state.w_rf.quantize(bits);
        degenerate |= refresh_digital(channel, &mut state, config, !variant.is_mmse())?;
    }

    let order: &[StepLabel] = match (controls.step_order, variant.is_mmse()) {
        (StepOrder::PrecoderFirst, false) => &[
            StepLabel::S1Precoder,
            StepLabel::S2Combiner,
            StepLabel::S3Weights,
        ],
        (StepOrder::PrecoderFirst, true) => &[StepLabel::S1Precoder, StepLabel::S2Combiner],
        (StepOrder::CombinerFirst, false) => &[
            StepLabel::S2Combiner,
            StepLabel::S3Weights,
            StepLabel::S1Precoder,
        ],
        (StepOrder::CombinerFirst, true) => &[StepLabel::S2Combiner, StepLabel::S1Precoder],
    };
    // the rate is sampled where the weights equal the inverse MSE matrices
    let sample_after = if variant.is_mmse() {
        *order.last().unwrap()
    } else {
        StepLabel::S3Weights
    };

    let initial = reported_rate(channel, &state, config)?;
    degenerate |= initial.degenerate;
    let mut trace = ConvergenceTrace {
        steps: Vec::new(),
        initial_objective: wmmse_objective(channel, &state, config)?,
        rates: vec![initial.rate],
        exit_reason: ExitReason::MaxIterations,
        outer_iterations: 0,
        degenerate: false,
        projected_rate: None,
    };
    let mut prev_objective = trace.initial_objective;

    for outer in 1..=controls.outer_cap {
        let snapshot = state.clone();
        let steps_before = trace.steps.len();
        let mut sampled = None;
        for &label in order {
            degenerate |= run_step(label, channel, &mut state, config, variant, controls)?;
            let objective = wmmse_objective(channel, &state, config)?;
            let rate = reported_rate(channel, &state, config)?;
            degenerate |= rate.degenerate;
            if objective > prev_objective + MONOTONE_SLACK {
                return Err(HbfError::Monotonicity {
                    outer,
                    step: format!("{label:?}"),
                    before: prev_objective,
                    after: objective,
                });
            }
            prev_objective = objective;
            trace.steps.push(TraceStep {
                label,
                outer,
                objective,
                rate: rate.rate,
            });
            if label == sample_after {
                sampled = Some(rate.rate);
            }
        }
        let rate = sampled.expect("sampling step is part of every iteration");
        let previous = *trace.rates.last().unwrap();
        if outer >= 2 && rate < previous - MONOTONE_SLACK {
            if variant.is_mmse() {
                // no rate guarantee without weights: keep the better iterate and stop
                state = snapshot;
                trace.steps.truncate(steps_before);
                trace.exit_reason = ExitReason::Converged;
                break;
            }
            return Err(HbfError::Monotonicity {
                outer,
                step: "rate".into(),
                before: previous,
                after: rate,
            });
        }
        trace.rates.push(rate);
        trace.outer_iterations = outer;
        if (rate - previous).abs() <= controls.outer_rel_tol * previous.abs() {
            trace.exit_reason = ExitReason::Converged;
            break;
        }
    }

    if let AlgorithmVariant::WmmseMoU(bits) = variant {
        state.f_rf = state.f_rf.quantize(bits);
        state.w_rf = state.w_rf.quantize(bits);
        degenerate |= refresh_digital(channel, &mut state, config, true)?;
        let projected = reported_rate(channel, &state, config)?;
        degenerate |= projected.degenerate;
        trace.projected_rate = Some(projected.rate);
    }
    trace.degenerate = degenerate;
    Ok((state, trace))
}

/// Power allocation maximizing `sum log(1 + p_i g_i)` subject to `sum p_i = total`.
pub fn water_filling(gains: &[f64], total: f64) -> Vec<f64> {
    let mut order: Vec<usize> = (0..gains.len()).filter(|&i| gains[i] > 0.0).collect();
    order.sort_by(|&i, &j| gains[j].total_cmp(&gains[i]));
    let mut level = 0.0;
    let mut active = 0;
    let mut inv_sum = 0.0;
    for (m, &i) in order.iter().enumerate() {
        inv_sum += 1.0 / gains[i];
        let candidate = (total + inv_sum) / (m + 1) as f64;
        if candidate > 1.0 / gains[i] {
            level = candidate;
            active = m + 1;
        } else {
            break;
        }
    }
    let mut powers = vec![0.0; gains.len()];
    for &i in order.iter().take(active) {
        powers[i] = (level - 1.0 / gains[i]).max(0.0);
    }
    powers
}

/// Fully-digital reference: top-`N_s` eigenmodes with water-filling, bits/s/Hz.
pub fn fd_baseline(channel: &ChannelRealization, config: &SystemConfig) -> Result<f64> {
    channel.check_against(config)?;
    let noise = config.noise_var();
    let mut total = 0.0;
    for h in &channel.matrices {
        let mut sv: Vec<f64> = h.singular_values().iter().copied().collect();
        sv.sort_by(|a, b| b.total_cmp(a));
        let gains: Vec<f64> = sv
            .iter()
            .take(config.n_streams)
            .map(|s| s * s / noise)
            .collect();
        let powers = water_filling(&gains, 1.0);
        total += gains
            .iter()
            .zip(&powers)
            .map(|(g, p)| (1.0 + g * p).log2())
            .sum::<f64>();
    }
    Ok(total / channel.n_subcarriers() as f64)
}
