use serde::{Deserialize, Serialize};

use crate::driver::SolverControls;
use crate::error::{HbfError, Result};

/// How the per-subcarrier phase factor of the channel is formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum DelayMode {
    /// One cluster-independent factor `exp(-j 2pi (k-1) / K)`.
    #[default]
    Verbatim,
    /// Per-cluster integer tap delay `d_c` in `1..=max_delay_taps`.
    DelayTap,
}

/// Clustered ray-model statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusterParams {
    pub n_clusters: usize,
    pub n_rays: usize,
    /// Laplacian scale of the ray angles around their cluster mean, radians.
    pub angle_spread: f64,
    pub delay_mode: DelayMode,
    pub max_delay_taps: usize,
}

impl Default for ClusterParams {
    fn default() -> Self {
        Self {
            n_clusters: 5,
            n_rays: 10,
            angle_spread: 10f64.to_radians(),
            delay_mode: DelayMode::Verbatim,
            max_delay_taps: 1,
        }
    }
}

/// Dimensions, SNR and solver knobs of one hybrid beamforming problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    /// Transmit antennas `N`.
    pub n_tx: usize,
    /// Receive antennas `M`.
    pub n_rx: usize,
    pub n_tx_rf: usize,
    pub n_rx_rf: usize,
    pub n_streams: usize,
    pub n_subcarriers: usize,
    pub snr_db: f64,
    pub cluster: ClusterParams,
    pub quant_bits: Option<u32>,
    pub controls: SolverControls,
    pub seed: u64,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self {
            n_tx: 64,
            n_rx: 32,
            n_tx_rf: 4,
            n_rx_rf: 2,
            n_streams: 2,
            n_subcarriers: 64,
            snr_db: -6.0,
            cluster: ClusterParams::default(),
            quant_bits: None,
            controls: SolverControls::default(),
            seed: 1,
        }
    }
}

impl SystemConfig {
    /// Noise variance; transmit power per subcarrier is normalized to one.
    pub fn noise_var(&self) -> f64 {
        10f64.powf(-self.snr_db / 10.0)
    }

    pub fn with_snr_db(&self, snr_db: f64) -> Self {
        Self {
            snr_db,
            ..self.clone()
        }
    }

    /// `N_t^RF / N`, the per-subcarrier digital power budget.
    pub fn tx_ratio(&self) -> f64 {
        self.n_tx_rf as f64 / self.n_tx as f64
    }

    pub fn rx_ratio(&self) -> f64 {
        self.n_rx_rf as f64 / self.n_rx as f64
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(HbfError::InvalidConfig(msg));
        let dims = [
            ("n_tx", self.n_tx),
            ("n_rx", self.n_rx),
            ("n_tx_rf", self.n_tx_rf),
            ("n_rx_rf", self.n_rx_rf),
            ("n_streams", self.n_streams),
            ("n_subcarriers", self.n_subcarriers),
        ];
        for (name, v) in dims {
            if v == 0 {
                return bad(format!("{name} must be positive"));
            }
        }
        if !self.n_tx.is_multiple_of(self.n_tx_rf) {
            return bad(format!(
                "n_tx = {} is not divisible by n_tx_rf = {}",
                self.n_tx, self.n_tx_rf
            ));
        }
        if !self.n_rx.is_multiple_of(self.n_rx_rf) {
            return bad(format!(
                "n_rx = {} is not divisible by n_rx_rf = {}",
                self.n_rx, self.n_rx_rf
            ));
        }
        if !(self.n_streams <= self.n_rx_rf && self.n_rx_rf <= self.n_rx) {
            return bad("need n_streams <= n_rx_rf <= n_rx".into());
        }
        if !(self.n_streams <= self.n_tx_rf && self.n_tx_rf <= self.n_tx) {
            return bad("need n_streams <= n_tx_rf <= n_tx".into());
        }
        if !self.snr_db.is_finite() {
            return bad("snr_db must be finite".into());
        }
        let c = &self.cluster;
        if c.n_clusters == 0 || c.n_rays == 0 {
            return bad("n_clusters and n_rays must be positive".into());
        }
        if !(c.angle_spread > 0.0) || !c.angle_spread.is_finite() {
            return bad("angle_spread must be positive".into());
        }
        if c.max_delay_taps == 0 {
            return bad("max_delay_taps must be positive".into());
        }
        if c.delay_mode == DelayMode::DelayTap && c.max_delay_taps > self.n_subcarriers {
            return bad(format!(
                "max_delay_taps = {} exceeds the subcarrier count {}",
                c.max_delay_taps, self.n_subcarriers
            ));
        }
        if let Some(0) = self.quant_bits {
            return bad("quant_bits must be at least 1".into());
        }
        self.controls.validate()
    }
}
