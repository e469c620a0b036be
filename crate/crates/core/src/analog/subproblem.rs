use serde::{Deserialize, Serialize};

use crate::beamformer::{AnalogBeamformer, HybridState};
use crate::channel::ChannelRealization;
use crate::config::SystemConfig;
use crate::digital::{CombinerAux, PrecoderAux};
use crate::error::{HbfError, Result};
use crate::linalg::{general_inverse, hpd_inverse, trace, CMat, C64};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SubproblemSide {
    Precoder,
    Combiner,
}

/// Reduced analog problem shared by the precoder and the combiner:
/// minimize `(1/K) sum_k tr((C_k + s_k^-1 L_k X X^H R_k)^-1)` over
/// block-diagonal unit-modulus `X`.
#[derive(Debug, Clone)]
pub struct AnalogSubproblem {
    pub side: SubproblemSide,
    /// `C_k`, `N_s x N_s`.
    pub c_mat: Vec<CMat>,
    /// `L_k`, `N_s x D`.
    pub left: Vec<CMat>,
    /// `R_k`, `D x N_s`.
    pub right: Vec<CMat>,
    /// `s_k > 0`.
    pub scale: Vec<f64>,
    pub dim: usize,
    pub n_rf: usize,
}

impl AnalogSubproblem {
    pub fn new(
        side: SubproblemSide,
        c_mat: Vec<CMat>,
        left: Vec<CMat>,
        right: Vec<CMat>,
        scale: Vec<f64>,
        n_rf: usize,
    ) -> Result<Self> {
        let k = c_mat.len();
        if k == 0 || left.len() != k || right.len() != k || scale.len() != k {
            return Err(HbfError::Dimension(
                "subproblem terms must have one entry per subcarrier".into(),
            ));
        }
        let n_s = c_mat[0].nrows();
        let dim = left[0].ncols();
        if n_rf == 0 || !dim.is_multiple_of(n_rf) {
            return Err(HbfError::Dimension(format!(
                "{dim} antennas cannot be split over {n_rf} chains"
            )));
        }
        for i in 0..k {
            if c_mat[i].shape() != (n_s, n_s)
                || left[i].shape() != (n_s, dim)
                || right[i].shape() != (dim, n_s)
            {
                return Err(HbfError::Dimension(format!(
                    "subproblem term {i} has inconsistent shapes"
                )));
            }
            if !(scale[i] > 0.0) {
                return Err(HbfError::NonPositiveScale {
                    k: i,
                    value: scale[i],
                });
            }
        }
        Ok(Self {
            side,
            c_mat,
            left,
            right,
            scale,
            dim,
            n_rf,
        })
    }

    pub fn n_subcarriers(&self) -> usize {
        self.c_mat.len()
    }

    pub fn n_streams(&self) -> usize {
        self.c_mat[0].nrows()
    }

    pub fn block_size(&self) -> usize {
        self.dim / self.n_rf
    }

    /// `n_rf / D`.
    pub fn ratio(&self) -> f64 {
        self.n_rf as f64 / self.dim as f64
    }

    pub fn check_beamformer(&self, x: &AnalogBeamformer) -> Result<()> {
        if x.n_ant() != self.dim || x.n_rf() != self.n_rf {
            return Err(HbfError::Dimension(format!(
                "beamformer is {} x {}, subproblem expects {} x {}",
                x.n_ant(),
                x.n_rf(),
                self.dim,
                self.n_rf
            )));
        }
        Ok(())
    }

    /// `(L_k X, X^H R_k)` for support values `z` in antenna order.
    pub fn reduced_products(&self, k: usize, z: &[C64]) -> (CMat, CMat) {
        let b = self.block_size();
        let n_s = self.n_streams();
        let left = &self.left[k];
        let right = &self.right[k];
        let mut lx = CMat::zeros(n_s, self.n_rf);
        let mut xr = CMat::zeros(self.n_rf, n_s);
        for (i, &zi) in z.iter().enumerate() {
            let q = i / b;
            let zc = zi.conj();
            for s in 0..n_s {
                lx[(s, q)] += left[(s, i)] * zi;
                xr[(q, s)] += zc * right[(i, s)];
            }
        }
        (lx, xr)
    }

    /// `M_k = C_k + s_k^-1 L_k X X^H R_k`.
    pub fn inner_matrix(&self, k: usize, z: &[C64]) -> CMat {
        let (lx, xr) = self.reduced_products(k, z);
        &self.c_mat[k] + (lx * xr).unscale(self.scale[k])
    }

    /// Objective at arbitrary (not necessarily unit-modulus) support values.
    pub fn objective_support(&self, z: &[C64]) -> Result<f64> {
        let mut total = 0.0;
        for k in 0..self.n_subcarriers() {
            let inv = general_inverse(&self.inner_matrix(k, z), "analog subproblem inner matrix")?;
            total += trace(&inv).re;
        }
        Ok(total / self.n_subcarriers() as f64)
    }

    pub fn objective(&self, x: &AnalogBeamformer) -> Result<f64> {
        self.check_beamformer(x)?;
        self.objective_support(x.support().as_slice())
    }

    /// Dense per-chain matrices `(Omega, A, B)` on subcarrier `k`, where the
    /// objective term equals `tr(Omega^-1) - x_q^H A x_q / x_q^H B x_q` with
    /// `x_q` the `D`-dimensional column of chain `q`.
    pub fn chain_matrices(
        &self,
        x: &AnalogBeamformer,
        q: usize,
        k: usize,
    ) -> Result<(CMat, CMat, CMat)> {
        let dense = x.expand();
        let mut others = dense.clone();
        others.column_mut(q).fill(C64::new(0.0, 0.0));
        let s_inv = 1.0 / self.scale[k];
        let omega = &self.c_mat[k]
            + (&self.left[k] * &others * others.adjoint() * &self.right[k]).scale(s_inv);
        let omega_inv = general_inverse(&omega, "chain matrix")?;
        let a = (&self.right[k] * &omega_inv * &omega_inv * &self.left[k]).scale(s_inv);
        let b = CMat::identity(self.dim, self.dim).scale(self.ratio())
            + (&self.right[k] * &omega_inv * &self.left[k]).scale(s_inv);
        Ok((omega, a, b))
    }
}

/// Builds the precoder or combiner subproblem around the current state.
pub fn build_subproblem(
    side: SubproblemSide,
    channel: &ChannelRealization,
    state: &HybridState,
    config: &SystemConfig,
) -> Result<AnalogSubproblem> {
    let c_mat: Vec<CMat> = state
        .weights
        .iter()
        .map(|w| hpd_inverse(w, "weight matrix"))
        .collect::<Result<_>>()?;
    match side {
        SubproblemSide::Precoder => {
            let aux = PrecoderAux::new(channel, state, config)?;
            let right = aux.g_tilde.iter().map(|g| g.adjoint()).collect();
            AnalogSubproblem::new(side, c_mat, aux.g_tilde, right, aux.beta, config.n_tx_rf)
        }
        SubproblemSide::Combiner => {
            let aux = CombinerAux::new(channel, state, config)?;
            let left = aux
                .g
                .iter()
                .zip(&c_mat)
                .map(|(g, c)| c * g.adjoint())
                .collect();
            AnalogSubproblem::new(side, c_mat, left, aux.g, aux.alpha, config.n_rx_rf)
        }
    }
}

pub fn objective(sub: &AnalogSubproblem, x: &AnalogBeamformer) -> Result<f64> {
    sub.objective(x)
}
