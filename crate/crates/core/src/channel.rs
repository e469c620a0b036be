//! Wideband clustered mmWave channel with half-wavelength ULAs at both ends.

use std::collections::BTreeMap;
use std::f64::consts::{PI, TAU};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::config::{DelayMode, SystemConfig};
use crate::error::{HbfError, Result};
use crate::linalg::{wrap_phase, CMat, CVec, C64};
use crate::rng;

/// A uniform linear array with half-wavelength element spacing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArrayGeometry {
    pub n_elements: usize,
}

impl ArrayGeometry {
    pub fn new(n_elements: usize) -> Self {
        assert!(n_elements >= 1, "an array needs at least one element");
        Self { n_elements }
    }

    pub fn response(&self, angle: f64) -> CVec {
        ula_response(angle, self)
    }
}

/// Unit-norm ULA steering vector, entry `p` equal to `exp(j p pi sin(angle)) / sqrt(N)`.
pub fn ula_response(angle: f64, geometry: &ArrayGeometry) -> CVec {
    let n = geometry.n_elements;
    let amp = 1.0 / (n as f64).sqrt();
    let step = PI * angle.sin();
    CVec::from_fn(n, |p, _| C64::from_polar(amp, step * p as f64))
}

/// Draws `mean + Laplace(0, spread)` and reduces it into `[0, 2pi)`.
pub fn sample_laplacian_angle<R: Rng + ?Sized>(mean: f64, spread: f64, rng: &mut R) -> f64 {
    debug_assert!(spread > 0.0);
    loop {
        let u: f64 = rng.random::<f64>() - 0.5;
        let tail = 1.0 - 2.0 * u.abs();
        if tail > 0.0 {
            let offset = -spread * u.signum() * tail.ln();
            return wrap_phase(mean + offset);
        }
    }
}

/// Standard circularly-symmetric complex Gaussian sample.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// One channel draw: the `K` subcarrier matrices plus the ray parameters behind them.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    /// `H_k`, each `M x N`.
    pub matrices: Vec<CMat>,
    /// `N_C x N_R` ray gains.
    pub gains: DMatrix<C64>,
    pub aoa: DMatrix<f64>,
    pub aod: DMatrix<f64>,
    /// Per-cluster `(receive, transmit)` mean angles.
    pub mean_angles: Vec<(f64, f64)>,
    /// Per-cluster tap delay; all ones in verbatim mode.
    pub delays: Vec<usize>,
    pub seed: u64,
}

impl ChannelRealization {
    /// Wraps externally supplied subcarrier matrices (no ray metadata).
    pub fn from_matrices(matrices: Vec<CMat>, seed: u64) -> Result<Self> {
        let first = matrices
            .first()
            .ok_or_else(|| HbfError::Dimension("a channel needs at least one subcarrier".into()))?;
        let (m, n) = first.shape();
        if matrices.iter().any(|h| h.shape() != (m, n)) {
            return Err(HbfError::Dimension(
                "subcarrier matrices differ in shape".into(),
            ));
        }
        Ok(Self {
            matrices,
            gains: DMatrix::zeros(0, 0),
            aoa: DMatrix::zeros(0, 0),
            aod: DMatrix::zeros(0, 0),
            mean_angles: Vec::new(),
            delays: Vec::new(),
            seed,
        })
    }

    pub fn n_subcarriers(&self) -> usize {
        self.matrices.len()
    }

    pub fn n_rx(&self) -> usize {
        self.matrices[0].nrows()
    }

    pub fn n_tx(&self) -> usize {
        self.matrices[0].ncols()
    }

    pub fn check_against(&self, config: &SystemConfig) -> Result<()> {
        if self.n_subcarriers() != config.n_subcarriers
            || self.n_rx() != config.n_rx
            || self.n_tx() != config.n_tx
        {
            return Err(HbfError::Dimension(format!(
                "channel is {} x ({} x {}), config expects {} x ({} x {})",
                self.n_subcarriers(),
                self.n_rx(),
                self.n_tx(),
                config.n_subcarriers,
                config.n_rx,
                config.n_tx
            )));
        }
        Ok(())
    }
}

fn subcarrier_phase(k: usize, delay: usize, n_subcarriers: usize) -> C64 {
    let turns = (k * delay) % n_subcarriers;
    C64::from_polar(1.0, -TAU * turns as f64 / n_subcarriers as f64)
}

/// Generates the channel for `(config, seed)`; a pure function of both.
pub fn generate_channel(config: &SystemConfig, seed: u64) -> Result<ChannelRealization> {
    config.validate()?;
    let params = &config.cluster;
    let (m, n, k_total) = (config.n_rx, config.n_tx, config.n_subcarriers);
    let (n_c, n_r) = (params.n_clusters, params.n_rays);
    let rx_array = ArrayGeometry::new(m);
    let tx_array = ArrayGeometry::new(n);

    let mut rng = rng::stream(seed, rng::CHANNEL_STREAM);
    let mut gains = DMatrix::zeros(n_c, n_r);
    let mut aoa = DMatrix::zeros(n_c, n_r);
    let mut aod = DMatrix::zeros(n_c, n_r);
    let mut mean_angles = Vec::with_capacity(n_c);
    for c in 0..n_c {
        let mean_r = rng.random::<f64>() * TAU;
        let mean_t = rng.random::<f64>() * TAU;
        mean_angles.push((mean_r, mean_t));
        for l in 0..n_r {
            gains[(c, l)] = complex_gaussian(&mut rng);
            aoa[(c, l)] = sample_laplacian_angle(mean_r, params.angle_spread, &mut rng);
            aod[(c, l)] = sample_laplacian_angle(mean_t, params.angle_spread, &mut rng);
        }
    }

    let delays: Vec<usize> = match params.delay_mode {
        DelayMode::Verbatim => vec![1; n_c],
        DelayMode::DelayTap => {
            let mut drng = rng::stream(seed, rng::DELAY_STREAM);
            (0..n_c)
                .map(|_| 1 + drng.random_range(0..params.max_delay_taps))
                .collect()
        }
    };

    // clusters sharing a delay share one subcarrier factor
    let norm = ((m * n) as f64 / (n_c * n_r) as f64).sqrt();
    let mut groups: BTreeMap<usize, CMat> = BTreeMap::new();
    for c in 0..n_c {
        let mut cluster = CMat::zeros(m, n);
        for l in 0..n_r {
            let ar = rx_array.response(aoa[(c, l)]);
            let at = tx_array.response(aod[(c, l)]);
            cluster += (ar * at.adjoint()).map(|z| z * gains[(c, l)]);
        }
        groups
            .entry(delays[c])
            .and_modify(|acc| *acc += &cluster)
            .or_insert(cluster);
    }
    let groups: Vec<(usize, CMat)> = groups
        .into_iter()
        .map(|(d, g)| (d, g.map(|z| z * norm)))
        .collect();

    let matrices = (0..k_total)
        .map(|k| {
            let mut acc: Option<CMat> = None;
            for (d, base) in &groups {
                let term = if k == 0 {
                    base.clone()
                } else {
                    let phi = subcarrier_phase(k, *d, k_total);
                    base.map(|z| z * phi)
                };
                acc = Some(match acc {
                    None => term,
                    Some(h) => h + term,
                });
            }
            acc.expect("at least one cluster")
        })
        .collect();

    Ok(ChannelRealization {
        matrices,
        gains,
        aoa,
        aod,
        mean_angles,
        delays,
        seed,
    })
}

pub const DUMP_MAGIC: &[u8; 4] = b"HBFC";
pub const DUMP_VERSION: u32 = 1;

/// Header of a channel dump file (32 bytes, little-endian).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DumpHeader {
    pub version: u32,
    pub n_rx: u32,
    pub n_tx: u32,
    pub n_subcarriers: u32,
    pub seed: u64,
}

/// Writes `magic, version, M, N, K, reserved(0), seed` followed by the `K`
/// matrices row-major as interleaved `(re, im)` f64 pairs.
pub fn write_channel_dump(path: &Path, channel: &ChannelRealization) -> Result<()> {
    let file = File::create(path).map_err(|e| HbfError::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut write = |bytes: &[u8]| w.write_all(bytes).map_err(|e| HbfError::io(path, e));
    write(DUMP_MAGIC)?;
    write(&DUMP_VERSION.to_le_bytes())?;
    write(&(channel.n_rx() as u32).to_le_bytes())?;
    write(&(channel.n_tx() as u32).to_le_bytes())?;
    write(&(channel.n_subcarriers() as u32).to_le_bytes())?;
    write(&0u32.to_le_bytes())?;
    write(&channel.seed.to_le_bytes())?;
    for h in &channel.matrices {
        for i in 0..h.nrows() {
            for j in 0..h.ncols() {
                let z = h[(i, j)];
                write(&z.re.to_le_bytes())?;
                write(&z.im.to_le_bytes())?;
            }
        }
    }
    w.flush().map_err(|e| HbfError::io(path, e))
}

pub fn read_channel_dump(path: &Path) -> Result<(DumpHeader, Vec<CMat>)> {
    let file = File::open(path).map_err(|e| HbfError::io(path, e))?;
    let mut r = BufReader::new(file);
    let mut header = [0u8; 32];
    r.read_exact(&mut header)
        .map_err(|e| HbfError::io(path, e))?;
    if &header[0..4] != DUMP_MAGIC {
        return Err(HbfError::Parse {
            path: path.to_path_buf(),
            message: "bad magic".into(),
        });
    }
    let word = |at: usize| u32::from_le_bytes(header[at..at + 4].try_into().unwrap());
    let head = DumpHeader {
        version: word(4),
        n_rx: word(8),
        n_tx: word(12),
        n_subcarriers: word(16),
        seed: u64::from_le_bytes(header[24..32].try_into().unwrap()),
    };
    let (m, n) = (head.n_rx as usize, head.n_tx as usize);
    let mut matrices = Vec::with_capacity(head.n_subcarriers as usize);
    let mut buf = [0u8; 16];
    for _ in 0..head.n_subcarriers {
        let mut h = CMat::zeros(m, n);
        for i in 0..m {
            for j in 0..n {
                r.read_exact(&mut buf).map_err(|e| HbfError::io(path, e))?;
                h[(i, j)] = C64::new(
                    f64::from_le_bytes(buf[0..8].try_into().unwrap()),
                    f64::from_le_bytes(buf[8..16].try_into().unwrap()),
                );
            }
        }
        matrices.push(h);
    }
    Ok((head, matrices))
}
