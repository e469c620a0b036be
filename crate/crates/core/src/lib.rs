//! Hybrid analog/digital beamforming design for partially-connected mmWave
//! MIMO-OFDM links.
//!
//! The WMMSE reformulation turns rate maximization into alternating closed-form
//! digital updates and unit-modulus analog subproblems, solved either by element
//! iteration or by conjugate gradient on the complex-circle manifold.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod analog;
pub mod beamformer;
pub mod channel;
pub mod complexity;
pub mod config;
pub mod digital;
pub mod driver;
pub mod error;
pub mod experiment;
pub mod linalg;
pub mod metrics;
pub mod rng;
pub mod selftest;

pub use beamformer::{AnalogBeamformer, HybridState, Side};
pub use channel::{generate_channel, ArrayGeometry, ChannelRealization};
pub use config::{ClusterParams, DelayMode, SystemConfig};
pub use driver::{
    alternating_optimize, fd_baseline, initialize, AlgorithmVariant, ConvergenceTrace, ExitReason,
    InitStrategy, SolverControls, StepOrder,
};
pub use error::{HbfError, Result};
