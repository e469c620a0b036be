//! Small dense complex linear-algebra helpers shared by the solvers.
//!
//! Every matrix inverted on the hot paths is either Hermitian positive
//! definite (Cholesky) or similar to one (LU on an `N_s x N_s` block).

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use num_complex::Complex;

use crate::error::{HbfError, Result};

pub type C64 = Complex<f64>;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

/// Guard used when a Hermitian matrix must be inverted with a meaningful result.
pub const MAX_CONDITION: f64 = 1e12;

pub fn identity(n: usize) -> CMat {
    CMat::identity(n, n)
}

pub fn hermitian_part(m: &CMat) -> CMat {
    (m + m.adjoint()).scale(0.5)
}

pub fn trace(m: &CMat) -> C64 {
    m.diagonal().iter().copied().sum()
}

pub fn fro_norm_sqr(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum()
}

/// Largest entrywise deviation `|m - m^H|`.
pub fn hermitian_deviation(m: &CMat) -> f64 {
    let n = m.nrows();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

/// Ascending eigenvalues of the Hermitian part of `m`.
pub fn hermitian_eigenvalues(m: &CMat) -> Vec<f64> {
    let mut ev: Vec<f64> = hermitian_part(m)
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .copied()
        .collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    ev
}

pub fn min_hermitian_eigenvalue(m: &CMat) -> f64 {
    hermitian_eigenvalues(m).first().copied().unwrap_or(0.0)
}

/// Cholesky factor of the Hermitian part of `m`, rejecting non-positive pivots.
///
/// The complex factorization takes complex square roots, so a negative pivot
/// shows up as an imaginary diagonal entry instead of a failure.
pub fn hpd_cholesky(m: &CMat, what: &str) -> Result<Cholesky<C64, Dyn>> {
    let fail = || HbfError::NotPositiveDefinite {
        what: what.to_string(),
    };
    let chol = hermitian_part(m).cholesky().ok_or_else(fail)?;
    let ok = chol
        .l_dirty()
        .diagonal()
        .iter()
        .all(|d| d.re > 0.0 && d.re.is_finite() && d.im.abs() <= 1e-12 * d.re);
    if ok {
        Ok(chol)
    } else {
        Err(fail())
    }
}

/// Inverse of a Hermitian positive-definite matrix through its Cholesky factor.
pub fn hpd_inverse(m: &CMat, what: &str) -> Result<CMat> {
    Ok(hpd_cholesky(m, what)?.inverse())
}

/// Solves `m x = rhs` for Hermitian positive-definite `m`.
pub fn hpd_solve(m: &CMat, rhs: &CMat, what: &str) -> Result<CMat> {
    Ok(hpd_cholesky(m, what)?.solve(rhs))
}

/// Natural-log determinant of a Hermitian positive-definite matrix.
pub fn logdet_hpd(m: &CMat, what: &str) -> Result<f64> {
    let chol = hpd_cholesky(m, what)?;
    Ok(chol
        .l_dirty()
        .diagonal()
        .iter()
        .map(|d| 2.0 * d.re.ln())
        .sum())
}

/// Spectral condition number of a Hermitian matrix (infinite when not PD).
pub fn hermitian_condition(m: &CMat) -> f64 {
    let ev = hermitian_eigenvalues(m);
    match (ev.first(), ev.last()) {
        (Some(&lo), Some(&hi)) if lo > 0.0 => hi / lo,
        _ => f64::INFINITY,
    }
}

/// LU inverse for the small non-Hermitian blocks produced by the combiner mapping.
pub fn general_inverse(m: &CMat, what: &str) -> Result<CMat> {
    m.clone()
        .try_inverse()
        .ok_or_else(|| HbfError::NotPositiveDefinite {
            what: what.to_string(),
        })
}

/// Real inner product `Re <a, b>` of two complex vectors.
pub fn real_inner(a: &[C64], b: &[C64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.re * y.re + x.im * y.im)
        .sum()
}

pub fn unit(phase: f64) -> C64 {
    C64::from_polar(1.0, phase)
}

/// Reduces an angle into `[0, 2pi)`.
pub fn wrap_phase(theta: f64) -> f64 {
    let two_pi = std::f64::consts::TAU;
    let r = theta.rem_euclid(two_pi);
    if r >= two_pi {
        0.0
    } else {
        r
    }
}

/// The first `cols` columns of the `rows x rows` identity.
pub fn identity_columns(rows: usize, cols: usize) -> CMat {
    CMat::from_fn(rows, cols, |i, j| {
        if i == j {
            C64::new(1.0, 0.0)
        } else {
            C64::new(0.0, 0.0)
        }
    })
}
