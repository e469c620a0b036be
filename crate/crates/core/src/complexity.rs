//! Closed-form complex-multiplication counts of the analog precoder solvers.
//!
//! `O(n^3)` inversion terms are counted as `n^3`.

use crate::driver::AlgorithmVariant;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComplexityInputs {
    pub n_ant: usize,
    pub n_rf: usize,
    pub n_subcarriers: usize,
    /// Average inner (sweep or gradient) iterations per analog step.
    pub n_in: f64,
    pub n_out: f64,
    /// Average golden-section iterations per 1-D search.
    pub n_g: f64,
}

/// Multiplication count of the variant's family (quantized forms use their base family).
pub fn complexity_estimate(inputs: &ComplexityInputs, variant: AlgorithmVariant) -> f64 {
    let a = inputs.n_ant as f64;
    let r = inputs.n_rf as f64;
    let k = inputs.n_subcarriers as f64;
    let inv = r.powi(3);
    let outer = inputs.n_out * inputs.n_in;
    match variant.base() {
        AlgorithmVariant::WmmseEi => {
            let per_element =
                2.0 * a * a * r + 3.0 * a * r * r + 4.0 * a * a + 2.0 * a + 3.0 * r.powi(3)
                    - r * r
                    - a * r
                    + inputs.n_g
                    + 2.0 * inv;
            outer * a * k * per_element
        }
        AlgorithmVariant::WmmseMo => {
            let per_subcarrier = 5.0 * a * a * r + 6.0 * a * r * r + 4.0 * r.powi(3) + 4.0 * inv;
            outer * (k * per_subcarrier + 3.0 * a * r + a)
        }
        _ => {
            let per_subcarrier = 2.0 * a * a * r + 3.0 * a * r * r + r.powi(3) + inv;
            outer * (k * per_subcarrier + a * a)
        }
    }
}

/// Average iteration counts reported for the 32-antenna, 4-chain, 64-subcarrier setting.
pub fn reference_inputs(variant: AlgorithmVariant) -> ComplexityInputs {
    let (n_in, n_out, n_g) = match variant.base() {
        AlgorithmVariant::WmmseEi => (3.0, 10.0, 8.1),
        AlgorithmVariant::WmmseMo => (21.2, 10.0, 0.0),
        _ => (4.0, 5.2, 0.0),
    };
    ComplexityInputs {
        n_ant: 32,
        n_rf: 4,
        n_subcarriers: 64,
        n_in,
        n_out,
        n_g,
    }
}
