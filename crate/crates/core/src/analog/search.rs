use std::f64::consts::TAU;

use crate::linalg::wrap_phase;

/// One subcarrier's contribution `(a + b cos(t + theta1)) / (c + d cos(t + theta2))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatioTerm {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub theta1: f64,
    pub theta2: f64,
}

/// `value(t) = -(1/K) sum_k (A_k + B_k cos(t + theta1_k)) / (C_k + D_k cos(t + theta2_k))`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarRatioFunction {
    terms: Vec<RatioTerm>,
    // [a, b cos theta1, b sin theta1, c, d cos theta2, d sin theta2]
    packed: Vec<[f64; 6]>,
}

pub const COARSE_GRID: usize = 16;
const REFINED_BRACKETS: usize = 3;

impl ScalarRatioFunction {
    pub fn new(terms: Vec<RatioTerm>) -> Self {
        let packed = terms
            .iter()
            .map(|t| {
                let (s1, c1) = t.theta1.sin_cos();
                let (s2, c2) = t.theta2.sin_cos();
                [t.a, t.b * c1, t.b * s1, t.c, t.d * c2, t.d * s2]
            })
            .collect();
        Self { terms, packed }
    }

    pub fn terms(&self) -> &[RatioTerm] {
        &self.terms
    }

    pub fn value(&self, theta: f64) -> f64 {
        let (s, c) = theta.sin_cos();
        let sum: f64 = self
            .packed
            .iter()
            .map(|p| (p[0] + p[1] * c - p[2] * s) / (p[3] + p[4] * c - p[5] * s))
            .sum();
        -sum / self.packed.len() as f64
    }

    /// True when every denominator stays positive on the circle.
    pub fn has_positive_denominators(&self) -> bool {
        self.terms.iter().all(|t| t.c > t.d)
    }

    pub fn grid_values(&self, n: usize) -> Vec<f64> {
        (0..n)
            .map(|i| self.value(TAU * i as f64 / n as f64))
            .collect()
    }
}

fn golden_section<F: Fn(f64) -> f64>(f: &F, mut lo: f64, mut hi: f64, tol: f64) -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while hi - lo > tol {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = f(x2);
        }
    }
    if f1 <= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

/// Global 1-D minimization on the circle: a 16-point grid, then golden
/// section inside the brackets of the best grid local minima.
///
/// The returned angle lies in `[0, 2pi)` and is never worse than the best grid point.
pub fn periodic_minimize(f: &ScalarRatioFunction, tol: f64) -> f64 {
    let n = COARSE_GRID;
    let step = TAU / n as f64;
    let grid = f.grid_values(n);
    let mut minima: Vec<usize> = (0..n)
        .filter(|&i| grid[i] <= grid[(i + n - 1) % n] && grid[i] <= grid[(i + 1) % n])
        .collect();
    minima.sort_by(|&i, &j| grid[i].total_cmp(&grid[j]));
    minima.truncate(REFINED_BRACKETS);

    let best_grid = (0..n)
        .min_by(|&i, &j| grid[i].total_cmp(&grid[j]))
        .unwrap_or(0);
    let mut best = (step * best_grid as f64, grid[best_grid]);
    let eval = |t: f64| f.value(t);
    for i in minima {
        let center = step * i as f64;
        let (t, v) = golden_section(&eval, center - step, center + step, tol);
        if v < best.1 {
            best = (t, v);
        }
    }
    wrap_phase(best.0)
}
