//! Unit-modulus block-diagonal analog subproblems and their solvers.

pub mod ei;
pub mod mo;
pub mod search;
pub mod subproblem;

pub use ei::{
    ei_coefficients, ei_pass, ei_pass_quantized, ei_solve, surrogate_blocks, surrogate_pass,
    surrogate_solve, surrogate_value, EiCoefficients, SweepOutcome,
};
pub use mo::{
    euclidean_gradient, mo_solve, project_tangent, riemannian_gradient, support_gradient, MoExit,
    MoOutcome,
};
pub use search::{periodic_minimize, RatioTerm, ScalarRatioFunction};
pub use subproblem::{build_subproblem, objective, AnalogSubproblem, SubproblemSide};
