//! Riemannian conjugate gradient on the product of unit circles.

use crate::beamformer::AnalogBeamformer;
use crate::error::Result;
use crate::linalg::{general_inverse, real_inner, CMat, C64};

use super::subproblem::AnalogSubproblem;

const ARMIJO_C: f64 = 1e-4;
const BACKTRACK: f64 = 0.5;
const MAX_BACKTRACKS: usize = 60;

/// `d f / d X*` at support values `z`, in antenna order.
///
/// The real gradient with respect to `(Re z, Im z)` is twice this value.
pub fn support_gradient(sub: &AnalogSubproblem, z: &[C64]) -> Result<Vec<C64>> {
    let b = sub.block_size();
    let k_total = sub.n_subcarriers() as f64;
    let mut grad = vec![C64::new(0.0, 0.0); z.len()];
    for k in 0..sub.n_subcarriers() {
        let s_inv = 1.0 / sub.scale[k];
        let (lx, xr) = sub.reduced_products(k, z);
        let m = &sub.c_mat[k] + (&lx * xr).scale(s_inv);
        let m_inv = general_inverse(&m, "analog subproblem inner matrix")?;
        let t = &m_inv * (&m_inv * &lx);
        let right = &sub.right[k];
        for (i, g) in grad.iter_mut().enumerate() {
            let q = i / b;
            let mut acc = C64::new(0.0, 0.0);
            for s in 0..t.nrows() {
                acc += right[(i, s)] * t[(s, q)];
            }
            *g -= acc * (s_inv / k_total);
        }
    }
    Ok(grad)
}

/// Masked Euclidean gradient as a dense `D x n_rf` matrix; off-block entries are zero.
pub fn euclidean_gradient(sub: &AnalogSubproblem, x: &AnalogBeamformer) -> Result<CMat> {
    sub.check_beamformer(x)?;
    let g = support_gradient(sub, x.support().as_slice())?;
    let b = x.block_size();
    let mut out = CMat::zeros(x.n_ant(), x.n_rf());
    for (i, gi) in g.into_iter().enumerate() {
        out[(i, i / b)] = gi;
    }
    Ok(out)
}

/// Tangent-space projection `v - Re(v conj(z)) z`.
pub fn project_tangent(z: &[C64], v: &[C64]) -> Vec<C64> {
    z.iter()
        .zip(v)
        .map(|(zi, vi)| vi - zi * (vi * zi.conj()).re)
        .collect()
}

pub fn riemannian_gradient(sub: &AnalogSubproblem, z: &[C64]) -> Result<Vec<C64>> {
    Ok(project_tangent(z, &support_gradient(sub, z)?))
}

fn norm(v: &[C64]) -> f64 {
    real_inner(v, v).sqrt()
}

fn retract(z: &[C64], d: &[C64], t: f64) -> Vec<C64> {
    z.iter()
        .zip(d)
        .map(|(zi, di)| {
            let y = zi + di * t;
            let r = y.norm();
            if r > 0.0 {
                y / r
            } else {
                *zi
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MoExit {
    GradientTolerance,
    IterationCap,
    /// Armijo backtracking found no decrease; the iterate is a numerical critical point.
    LineSearchStall,
}

#[derive(Debug, Clone)]
pub struct MoOutcome {
    pub x: AnalogBeamformer,
    pub iterations: usize,
    pub objective: f64,
    pub grad_norm: f64,
    pub exit: MoExit,
    /// Objective after every accepted iteration, starting with the initial value.
    pub history: Vec<f64>,
}

/// Polak-Ribiere conjugate gradient with Armijo backtracking and entrywise retraction.
pub fn mo_solve(
    sub: &AnalogSubproblem,
    x0: &AnalogBeamformer,
    iter_cap: usize,
    grad_tol: f64,
) -> Result<MoOutcome> {
    sub.check_beamformer(x0)?;
    let mut z: Vec<C64> = x0.support().iter().copied().collect();
    let mut f = sub.objective_support(&z)?;
    let mut g = riemannian_gradient(sub, &z)?;
    let mut g_norm = norm(&g);
    let mut history = vec![f];
    let mut d: Vec<C64> = g.iter().map(|v| -v).collect();
    let mut iterations = 0;
    let mut exit = MoExit::IterationCap;
    let mut moved = false;

    while g_norm >= grad_tol {
        if iterations >= iter_cap {
            exit = MoExit::IterationCap;
            break;
        }
        // directional derivative of f along d
        let mut slope = 2.0 * real_inner(&g, &d);
        if !(slope < 0.0) {
            d = g.iter().map(|v| -v).collect();
            slope = -2.0 * g_norm * g_norm;
        }
        let mut t = 1.0 / g_norm;
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            let z_new = retract(&z, &d, t);
            let f_new = sub.objective_support(&z_new)?;
            if f_new <= f + ARMIJO_C * t * slope {
                accepted = Some((z_new, f_new));
                break;
            }
            t *= BACKTRACK;
        }
        let Some((z_new, f_new)) = accepted else {
            exit = MoExit::LineSearchStall;
            break;
        };
        iterations += 1;
        moved = true;
        let g_new = riemannian_gradient(sub, &z_new)?;
        let g_old = project_tangent(&z_new, &g);
        let d_old = project_tangent(&z_new, &d);
        let diff: Vec<C64> = g_new.iter().zip(&g_old).map(|(a, b)| a - b).collect();
        let beta = (real_inner(&g_new, &diff) / (g_norm * g_norm)).max(0.0);
        d = g_new
            .iter()
            .zip(&d_old)
            .map(|(gn, dv)| -gn + dv * beta)
            .collect();
        z = z_new;
        f = f_new;
        g = g_new;
        g_norm = norm(&g);
        history.push(f);
    }
    if g_norm < grad_tol {
        exit = MoExit::GradientTolerance;
    }
    let x = if moved {
        AnalogBeamformer::from_support(x0.side, x0.n_rf(), &z)
    } else {
        x0.clone()
    };
    Ok(MoOutcome {
        x,
        iterations,
        objective: f,
        grad_norm: g_norm,
        exit,
        history,
    })
}
