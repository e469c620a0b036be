//! Element iteration: coordinate descent over single phase-shifter entries.

use crate::beamformer::{quant_level, AnalogBeamformer};
use crate::error::{HbfError, Result};
use crate::linalg::{general_inverse, hpd_solve, trace, unit, wrap_phase, CMat, CVec, C64};

use super::search::{periodic_minimize, RatioTerm, ScalarRatioFunction, COARSE_GRID};
use super::subproblem::AnalogSubproblem;

/// Grid total variation below which an element is treated as inert.
pub const FLAT_FUNCTION: f64 = 1e-14;
const HERMITIAN_TOL: f64 = 1e-8;

/// Scalar function of one element's phase; the subproblem objective equals
/// `constant + function.value(theta)`.
#[derive(Debug, Clone)]
pub struct EiCoefficients {
    pub function: ScalarRatioFunction,
    pub constant: f64,
}

/// Chain-`q` quantities on one subcarrier: `Omega^-1`, `Omega^-2` and the
/// current chain contributions `c_q = L x_q`, `r_q = x_q^H R`.
struct ChainTerm {
    omega_inv: CMat,
    omega_inv2: CMat,
    c_q: CVec,
    r_q: CVec,
    trace_inv: f64,
}

fn dot(row: &CVec, col: &CVec) -> C64 {
    row.iter().zip(col.iter()).map(|(a, b)| a * b).sum()
}

fn chain_terms(sub: &AnalogSubproblem, z: &[C64], q: usize) -> Result<Vec<ChainTerm>> {
    (0..sub.n_subcarriers())
        .map(|k| {
            let (lx, xr) = sub.reduced_products(k, z);
            let c_q: CVec = lx.column(q).into_owned();
            let r_q: CVec = xr.row(q).transpose();
            let full = &lx * &xr - &c_q * r_q.transpose();
            let omega = &sub.c_mat[k] + full.unscale(sub.scale[k]);
            let omega_inv = general_inverse(&omega, "chain matrix")?;
            let omega_inv2 = &omega_inv * &omega_inv;
            let trace_inv = trace(&omega_inv).re;
            Ok(ChainTerm {
                omega_inv,
                omega_inv2,
                c_q,
                r_q,
                trace_inv,
            })
        })
        .collect()
}

fn element_function(
    sub: &AnalogSubproblem,
    terms: &[ChainTerm],
    z: &[C64],
    i: usize,
) -> Result<EiCoefficients> {
    let rho = sub.ratio();
    let b = sub.block_size() as f64;
    let x = z[i];
    let mut ratio_terms = Vec::with_capacity(terms.len());
    let mut constant = 0.0;
    for (k, t) in terms.iter().enumerate() {
        let s_inv = 1.0 / sub.scale[k];
        let a: CVec = sub.left[k].column(i).into_owned();
        let bv: CVec = sub.right[k].row(i).transpose();
        let c_hat = &t.c_q - &a * x;
        let r_hat = &t.r_q - &bv * x.conj();
        let u1 = &t.omega_inv * &a;
        let u2 = &t.omega_inv2 * &a;
        let v1 = &t.omega_inv * &c_hat;
        let v2 = &t.omega_inv2 * &c_hat;

        let num = (dot(&r_hat, &v2) + dot(&bv, &u2)) * s_inv;
        let z_a = dot(&r_hat, &u2) * s_inv;
        let z_a_mirror = dot(&bv, &v2) * s_inv;
        let den = C64::new(rho * (b - 1.0) + rho, 0.0) + (dot(&r_hat, &v1) + dot(&bv, &u1)) * s_inv;
        let z_b = dot(&r_hat, &u1) * s_inv;
        let z_b_mirror = dot(&bv, &v1) * s_inv;

        let scale = 1.0 + num.norm() + den.norm() + z_a.norm() + z_b.norm();
        if (z_a_mirror - z_a.conj()).norm() > HERMITIAN_TOL * scale
            || (z_b_mirror - z_b.conj()).norm() > HERMITIAN_TOL * scale
            || num.im.abs() > HERMITIAN_TOL * scale
            || den.im.abs() > HERMITIAN_TOL * scale
        {
            return Err(HbfError::NonHermitian(format!(
                "element {i}, subcarrier {k}: quadratic forms are not Hermitian"
            )));
        }
        ratio_terms.push(RatioTerm {
            a: num.re,
            b: 2.0 * z_a.norm(),
            c: den.re,
            d: 2.0 * z_b.norm(),
            theta1: z_a.arg(),
            theta2: z_b.arg(),
        });
        constant += t.trace_inv;
    }
    let k_total = terms.len() as f64;
    Ok(EiCoefficients {
        function: ScalarRatioFunction::new(ratio_terms),
        constant: constant / k_total,
    })
}

fn commit(sub: &AnalogSubproblem, terms: &mut [ChainTerm], i: usize, old: C64, new: C64) {
    let delta = new - old;
    let delta_conj = new.conj() - old.conj();
    for (k, t) in terms.iter_mut().enumerate() {
        for s in 0..t.c_q.len() {
            t.c_q[s] += sub.left[k][(s, i)] * delta;
            t.r_q[s] += delta_conj * sub.right[k][(i, s)];
        }
    }
}

/// Scalar function for element `p` of chain `q` with every other element fixed.
pub fn ei_coefficients(
    sub: &AnalogSubproblem,
    x: &AnalogBeamformer,
    q: usize,
    p: usize,
) -> Result<EiCoefficients> {
    sub.check_beamformer(x)?;
    if q >= x.n_rf() || p >= x.block_size() {
        return Err(HbfError::Dimension(format!(
            "element ({p}, {q}) is outside the block support"
        )));
    }
    let z = x.support();
    let terms = chain_terms(sub, z.as_slice(), q)?;
    element_function(sub, &terms, z.as_slice(), q * x.block_size() + p)
}

fn grid_variation(f: &ScalarRatioFunction) -> f64 {
    let grid = f.grid_values(COARSE_GRID);
    let lo = grid.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = grid.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    hi - lo
}

/// How an element's new phase is chosen.
#[derive(Debug, Clone, Copy)]
enum ElementRule {
    Continuous { tol: f64 },
    Quantized { bits: u32 },
}

fn sweep(
    sub: &AnalogSubproblem,
    x: &AnalogBeamformer,
    rule: ElementRule,
) -> Result<AnalogBeamformer> {
    sub.check_beamformer(x)?;
    let bsz = x.block_size();
    let mut phases = x.phases.clone();
    let mut z: Vec<C64> = x.support().iter().copied().collect();
    for q in 0..x.n_rf() {
        let mut terms = chain_terms(sub, &z, q)?;
        for p in 0..bsz {
            let i = q * bsz + p;
            let f = element_function(sub, &terms, &z, i)?.function;
            let old_phase = phases[q][p];
            let current = f.value(old_phase);
            let new_phase = match rule {
                ElementRule::Continuous { tol } => {
                    if grid_variation(&f) < FLAT_FUNCTION {
                        continue;
                    }
                    let t = periodic_minimize(&f, tol);
                    if f.value(t) < current {
                        t
                    } else {
                        continue;
                    }
                }
                ElementRule::Quantized { bits } => {
                    let on_grid = crate::beamformer::is_quantized_phase(old_phase, bits);
                    let mut best: Option<(f64, f64)> = None;
                    for n in 0..(1u64 << bits) {
                        let t = quant_level(n, bits);
                        let v = f.value(t);
                        if best.is_none_or(|(_, bv)| v < bv) {
                            best = Some((t, v));
                        }
                    }
                    let (t, v) = best.expect("alphabet is non-empty");
                    if on_grid && !(v < current) {
                        continue;
                    }
                    t
                }
            };
            let new = unit(new_phase);
            commit(sub, &mut terms, i, z[i], new);
            z[i] = new;
            phases[q][p] = wrap_phase(new_phase);
        }
    }
    Ok(AnalogBeamformer {
        side: x.side,
        phases,
    })
}

/// One sweep over chains then elements, each set to its 1-D minimizer.
pub fn ei_pass(sub: &AnalogSubproblem, x: &AnalogBeamformer, tol: f64) -> Result<AnalogBeamformer> {
    sweep(sub, x, ElementRule::Continuous { tol })
}

/// One sweep with each element chosen from the `2^bits` phase alphabet.
pub fn ei_pass_quantized(
    sub: &AnalogSubproblem,
    x: &AnalogBeamformer,
    bits: u32,
) -> Result<AnalogBeamformer> {
    sweep(sub, x, ElementRule::Quantized { bits })
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub x: AnalogBeamformer,
    pub sweeps: usize,
    pub objective: f64,
}

/// Repeats sweeps until the relative objective decrease drops below `rel_tol`
/// (or, when quantized, until a sweep changes nothing).
pub fn ei_solve(
    sub: &AnalogSubproblem,
    x0: &AnalogBeamformer,
    bits: Option<u32>,
    sweep_cap: usize,
    rel_tol: f64,
    line_tol: f64,
) -> Result<SweepOutcome> {
    let mut x = x0.clone();
    let mut value = sub.objective(&x)?;
    let mut sweeps = 0;
    while sweeps < sweep_cap {
        let next = match bits {
            Some(b) => ei_pass_quantized(sub, &x, b)?,
            None => ei_pass(sub, &x, line_tol)?,
        };
        sweeps += 1;
        let next_value = sub.objective(&next)?;
        let unchanged = next == x;
        let small = value - next_value <= rel_tol * value.abs();
        x = next;
        value = next_value;
        if unchanged || small {
            break;
        }
    }
    Ok(SweepOutcome {
        x,
        sweeps,
        objective: value,
    })
}

/// Diagonal blocks of the identity-weight bound matrix
/// `A = sum_k s_k^-1 R_k (rho I + s_k^-1 L_k R_k)^-1 L_k`, one `b x b` block per chain.
pub fn surrogate_blocks(sub: &AnalogSubproblem) -> Result<Vec<CMat>> {
    let b = sub.block_size();
    let n_s = sub.n_streams();
    let rho = sub.ratio();
    let mut blocks = vec![CMat::zeros(b, b); sub.n_rf];
    for k in 0..sub.n_subcarriers() {
        let s_inv = 1.0 / sub.scale[k];
        let inner =
            CMat::identity(n_s, n_s).scale(rho) + (&sub.left[k] * &sub.right[k]).scale(s_inv);
        let solved = if sub.left[k] == sub.right[k].adjoint() {
            hpd_solve(&inner, &sub.left[k], "bound inner matrix")?
        } else {
            general_inverse(&inner, "bound inner matrix")? * &sub.left[k]
        };
        for (q, block) in blocks.iter_mut().enumerate() {
            let rows = sub.right[k].rows(q * b, b);
            let cols = solved.columns(q * b, b);
            *block += (rows * cols).scale(s_inv);
        }
    }
    Ok(blocks)
}

/// `tr(X^H A X)` restricted to the diagonal blocks.
pub fn surrogate_value(blocks: &[CMat], x: &AnalogBeamformer) -> f64 {
    blocks
        .iter()
        .zip(&x.phases)
        .map(|(a, ph)| {
            let v = CVec::from_iterator(ph.len(), ph.iter().map(|&p| unit(p)));
            (v.adjoint() * a * &v)[(0, 0)].re
        })
        .sum()
}

/// One closed-form sweep maximizing `tr(X^H A X)` element by element.
pub fn surrogate_pass(
    blocks: &[CMat],
    x: &AnalogBeamformer,
    bits: Option<u32>,
) -> AnalogBeamformer {
    let mut phases = x.phases.clone();
    for (q, a) in blocks.iter().enumerate() {
        let mut v: Vec<C64> = phases[q].iter().map(|&p| unit(p)).collect();
        for p in 0..v.len() {
            let zsum: C64 = (0..v.len())
                .filter(|&j| j != p)
                .map(|j| v[j].conj() * a[(j, p)])
                .sum();
            if zsum.norm() < 1e-300 {
                continue;
            }
            let new_phase = match bits {
                None => wrap_phase(-zsum.arg()),
                Some(bits) => {
                    let gain = |t: f64| (zsum * unit(t)).re;
                    let old = phases[q][p];
                    let mut best = (old, gain(old));
                    let on_grid = crate::beamformer::is_quantized_phase(old, bits);
                    if !on_grid {
                        best = (quant_level(0, bits), gain(quant_level(0, bits)));
                    }
                    for n in 0..(1u64 << bits) {
                        let t = quant_level(n, bits);
                        if gain(t) > best.1 {
                            best = (t, gain(t));
                        }
                    }
                    best.0
                }
            };
            v[p] = unit(new_phase);
            phases[q][p] = new_phase;
        }
    }
    AnalogBeamformer {
        side: x.side,
        phases,
    }
}

/// Sweeps the bound surrogate to convergence; the result is kept only if the
/// true subproblem objective does not increase.
pub fn surrogate_solve(
    sub: &AnalogSubproblem,
    x0: &AnalogBeamformer,
    bits: Option<u32>,
    sweep_cap: usize,
    rel_tol: f64,
) -> Result<SweepOutcome> {
    sub.check_beamformer(x0)?;
    let blocks = surrogate_blocks(sub)?;
    let mut x = x0.clone();
    let mut value = surrogate_value(&blocks, &x);
    let mut sweeps = 0;
    while sweeps < sweep_cap {
        let next = surrogate_pass(&blocks, &x, bits);
        sweeps += 1;
        let next_value = surrogate_value(&blocks, &next);
        let unchanged = next == x;
        let small = next_value - value <= rel_tol * value.abs();
        x = next;
        value = next_value;
        if unchanged || small {
            break;
        }
    }
    let start = sub.objective(x0)?;
    let end = sub.objective(&x)?;
    if end <= start {
        Ok(SweepOutcome {
            x,
            sweeps,
            objective: end,
        })
    } else {
        Ok(SweepOutcome {
            x: x0.clone(),
            sweeps,
            objective: start,
        })
    }
}
