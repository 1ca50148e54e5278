//! One-ring spatial covariance model and the block-fading channel simulator.
//!
//! Antenna `m` (0-based, column-major `vec(H)` layout) sits at transmit index
//! `m mod M_t` and receive index `⌊m / M_t⌋`; neighbouring elements are
//! `3α` apart. Entry `(m1, m2)` of the covariance is the ring average
//!
//! ```text
//! C[m1][m2] = 1/2π ∫₀^{2π} exp(−j·2π/α·[D_T sinΩ (1 − Ψ²/4 + Ψ² cos2ε / 4)
//!                                       + Ψ D_T cosΩ sinε
//!                                       + D_R sinΩ sinε + D_R cosΩ cosε]) dε
//! ```
//!
//! with `D_T`, `D_R` the transmit/receive position differences. The phase
//! factor applies to the whole bracket.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hermitian::{HermitianMatrix, C64};
use crate::likelihood::RegularizedCov;

/// Element spacing in wavelengths.
pub const ANTENNA_SPACING_WAVELENGTHS: f64 = 3.0;

/// Negative eigenvalues above this bound are treated as quadrature noise and
/// clipped to zero; anything lower is an error.
pub const PSD_CLIP_TOLERANCE: f64 = 1e-9;

/// Largest entry change allowed when the node count is doubled.
pub const QUADRATURE_TOLERANCE: f64 = 1e-9;

pub const DEFAULT_QUADRATURE_NODES: usize = 1024;

/// One estimated channel vector `h̄ = vec(H̄)` for a single coherence interval.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSample(pub Vec<C64>);

impl ChannelSample {
    pub fn as_slice(&self) -> &[C64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.0.iter().map(|z| z.norm_sqr()).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OneRingParams {
    pub tx_antennas: usize,
    pub rx_antennas: usize,
    pub aod_deg: f64,
    pub spread_deg: f64,
    pub wavelength_m: f64,
    #[serde(default = "default_nodes")]
    pub quadrature_nodes: usize,
}

fn default_nodes() -> usize {
    DEFAULT_QUADRATURE_NODES
}

impl OneRingParams {
    pub fn dim(&self) -> usize {
        self.tx_antennas * self.rx_antennas
    }

    pub fn validate(&self) -> Result<()> {
        if self.tx_antennas < 1 {
            return Err(Error::invalid("tx_antennas", "must be at least 1"));
        }
        if self.rx_antennas < 1 {
            return Err(Error::invalid("rx_antennas", "must be at least 1"));
        }
        if !(self.wavelength_m > 0.0) || !self.wavelength_m.is_finite() {
            return Err(Error::invalid("wavelength_m", "must be positive"));
        }
        if self.quadrature_nodes < 64 {
            return Err(Error::invalid("quadrature_nodes", "must be at least 64"));
        }
        if !(self.spread_deg > 0.0 && self.spread_deg < 180.0) {
            return Err(Error::invalid("spread_deg", "must lie in (0, 180)"));
        }
        if !self.aod_deg.is_finite() {
            return Err(Error::invalid("aod_deg", "must be finite"));
        }
        Ok(())
    }

    pub fn with_aod_shift(&self, delta_deg: f64) -> Self {
        Self {
            aod_deg: self.aod_deg + delta_deg,
            ..self.clone()
        }
    }
}

/// Pilot link budget. Powers are in mW, so `rho / sigma2` is the received SNR.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkBudget {
    pub tx_power_dbm: f64,
    pub distance_km: f64,
    pub bandwidth_hz: f64,
    pub noise_psd_dbm_hz: f64,
    pub pilot_len: usize,
}

impl LinkBudget {
    /// `−128.1 − 37.6·log₁₀(d)` dB, returned as a (negative) gain.
    pub fn pathloss_db(&self) -> f64 {
        -128.1 - 37.6 * self.distance_km.log10()
    }

    /// Received pilot power, linear mW.
    pub fn rho(&self) -> f64 {
        db_to_linear(self.tx_power_dbm + self.pathloss_db())
    }

    /// Noise power over the band, linear mW.
    pub fn sigma2(&self) -> f64 {
        db_to_linear(self.noise_psd_dbm_hz + 10.0 * self.bandwidth_hz.log10())
    }

    /// `E₀ = ρT/M_t²`
    pub fn e0(&self, tx_antennas: usize) -> f64 {
        self.rho() * self.pilot_len as f64 / (tx_antennas * tx_antennas) as f64
    }

    /// `σ²/E₀`, the variance of the estimation noise on every entry of `h̄`.
    pub fn noise_floor(&self, tx_antennas: usize) -> f64 {
        self.sigma2() / self.e0(tx_antennas)
    }

    pub fn validate(&self, tx_antennas: usize) -> Result<()> {
        if self.pilot_len < tx_antennas {
            return Err(Error::invalid(
                "pilot_len",
                format!("must be at least tx_antennas = {tx_antennas} for orthogonal pilots"),
            ));
        }
        if !(self.distance_km > 0.0) {
            return Err(Error::invalid("distance_km", "must be positive"));
        }
        if !(self.bandwidth_hz > 0.0) {
            return Err(Error::invalid("bandwidth_hz", "must be positive"));
        }
        for (name, v) in [
            ("tx_power_dbm", self.tx_power_dbm),
            ("noise_psd_dbm_hz", self.noise_psd_dbm_hz),
        ] {
            if !v.is_finite() {
                return Err(Error::invalid(name, "must be finite"));
            }
        }
        Ok(())
    }
}

fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Coherence interval (1-based) at which the post-change law takes over.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChangePoint {
    At(usize),
    Never,
}

impl ChangePoint {
    pub fn is_post_change(&self, j: usize) -> bool {
        match *self {
            ChangePoint::At(nu) => j >= nu,
            ChangePoint::Never => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub params_pre: OneRingParams,
    pub delta_aod_deg: f64,
    pub link: LinkBudget,
    pub change_point: ChangePoint,
    pub horizon: usize,
    pub seed: u64,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        self.params_pre.validate()?;
        self.link.validate(self.params_pre.tx_antennas)?;
        if let ChangePoint::At(0) = self.change_point {
            return Err(Error::invalid("change_point", "is 1-based; 0 is not a valid interval"));
        }
        if self.horizon < 1 {
            return Err(Error::invalid("horizon", "must be at least 1"));
        }
        if !self.delta_aod_deg.is_finite() {
            return Err(Error::invalid("delta_aod_deg", "must be finite"));
        }
        Ok(())
    }

    pub fn noise_floor(&self) -> f64 {
        self.link.noise_floor(self.params_pre.tx_antennas)
    }

    pub fn params_post(&self) -> OneRingParams {
        self.params_pre.with_aod_shift(self.delta_aod_deg)
    }

    /// Factors both laws once so streams can be drawn cheaply.
    pub fn model(&self) -> Result<ChannelModel> {
        let (pre, post) = scenario_covariances(self)?;
        ChannelModel::new(pre, post, self.noise_floor())
    }
}

/// Both channel laws of a scenario, factored.
#[derive(Debug, Clone)]
pub struct ChannelModel {
    pub pre: RegularizedCov,
    pub post: RegularizedCov,
}

impl ChannelModel {
    pub fn new(pre: HermitianMatrix, post: HermitianMatrix, noise_floor: f64) -> Result<Self> {
        Ok(Self {
            pre: RegularizedCov::new(pre, noise_floor)?,
            post: RegularizedCov::new(post, noise_floor)?,
        })
    }

    pub fn dim(&self) -> usize {
        self.pre.dim()
    }

    pub fn noise_floor(&self) -> f64 {
        self.pre.reg()
    }

    /// Draws the sample for interval `j` (1-based).
    pub fn sample_at<R: Rng + ?Sized>(
        &self,
        j: usize,
        change_point: ChangePoint,
        rng: &mut R,
    ) -> ChannelSample {
        if change_point.is_post_change(j) {
            self.post.sample(rng)
        } else {
            self.pre.sample(rng)
        }
    }

    pub fn stream<'a, R: Rng + ?Sized>(
        &'a self,
        change_point: ChangePoint,
        rng: &'a mut R,
    ) -> impl Iterator<Item = ChannelSample> + 'a {
        (1..).map(move |j| self.sample_at(j, change_point, rng))
    }
}

/// Ring average for a position lag of `(dt, dr)` element spacings with `nodes`
/// trapezoid nodes, plus the same integral with twice the nodes.
fn ring_integral(p: &OneRingParams, dt: i64, dr: i64, nodes: usize) -> (C64, C64) {
    let omega = p.aod_deg.to_radians();
    let psi = p.spread_deg.to_radians();
    let spacing = ANTENNA_SPACING_WAVELENGTHS * p.wavelength_m;
    let d_t = spacing * dt as f64;
    let d_r = spacing * dr as f64;
    let k = 2.0 * std::f64::consts::PI / p.wavelength_m;
    let (s_om, c_om) = omega.sin_cos();
    let phase = |eps: f64| {
        let (s, c) = eps.sin_cos();
        let cos2 = (2.0 * eps).cos();
        k * (d_t * s_om * (1.0 - psi * psi / 4.0 + psi * psi * cos2 / 4.0)
            + psi * d_t * c_om * s
            + d_r * s_om * s
            + d_r * c_om * c)
    };
    let fine = 2 * nodes;
    let step = 2.0 * std::f64::consts::PI / fine as f64;
    let mut even = C64::new(0.0, 0.0);
    let mut odd = C64::new(0.0, 0.0);
    for i in 0..fine {
        let (s, c) = phase(step * i as f64).sin_cos();
        let z = C64::new(c, -s);
        if i % 2 == 0 {
            even += z;
        } else {
            odd += z;
        }
    }
    (even / nodes as f64, (even + odd) / fine as f64)
}

/// One-ring covariance with unit diagonal, repaired to PSD.
pub fn onering_covariance(p: &OneRingParams) -> Result<HermitianMatrix> {
    p.validate()?;
    let mt = p.tx_antennas as i64;
    let mr = p.rx_antennas as i64;
    let width_t = (2 * mt - 1) as usize;
    let width_r = (2 * mr - 1) as usize;
    let mut table = vec![C64::new(0.0, 0.0); width_t * width_r];
    let mut worst = 0.0_f64;
    for dt in -(mt - 1)..mt {
        for dr in -(mr - 1)..mr {
            let (coarse, fine) = if dt == 0 && dr == 0 {
                (C64::new(1.0, 0.0), C64::new(1.0, 0.0))
            } else {
                ring_integral(p, dt, dr, p.quadrature_nodes)
            };
            worst = worst.max((coarse - fine).norm());
            table[(dt + mt - 1) as usize * width_r + (dr + mr - 1) as usize] = coarse;
        }
    }
    if worst > QUADRATURE_TOLERANCE {
        return Err(Error::Quadrature {
            nodes: p.quadrature_nodes,
            change: worst,
        });
    }
    let m = p.dim();
    let c = HermitianMatrix::from_fn(m, |m1, m2| {
        let dt = (m1 as i64 % mt) - (m2 as i64 % mt);
        let dr = (m1 as i64 / mt) - (m2 as i64 / mt);
        table[(dt + mt - 1) as usize * width_r + (dr + mr - 1) as usize]
    });
    repair_psd(c)
}

/// Clips eigenvalues in `[−PSD_CLIP_TOLERANCE, 0)` to zero. The matrix is
/// returned untouched when nothing needs clipping.
pub fn repair_psd(c: HermitianMatrix) -> Result<HermitianMatrix> {
    let eig = c.eig()?;
    let min = eig.eigenvalues[0];
    if min < -PSD_CLIP_TOLERANCE {
        return Err(Error::NegativeEigenvalue { value: min });
    }
    if min >= 0.0 {
        return Ok(c);
    }
    let clipped: Vec<f64> = eig.eigenvalues.iter().map(|&l| l.max(0.0)).collect();
    Ok(eig.compose(&clipped))
}

/// Pre- and post-change covariances. With no change point both are the
/// pre-change matrix.
pub fn scenario_covariances(s: &Scenario) -> Result<(HermitianMatrix, HermitianMatrix)> {
    s.validate()?;
    let pre = onering_covariance(&s.params_pre)?;
    let post = match s.change_point {
        ChangePoint::Never => pre.clone(),
        ChangePoint::At(_) if s.delta_aod_deg == 0.0 => pre.clone(),
        ChangePoint::At(_) => onering_covariance(&s.params_post())?,
    };
    Ok((pre, post))
}

/// One ML channel estimate `h̄ ~ CN(0, C + σ²/E₀·I)`.
pub fn sample_estimated_channel<R: Rng + ?Sized>(
    c: &HermitianMatrix,
    link: &LinkBudget,
    tx_antennas: usize,
    rng: &mut R,
) -> Result<ChannelSample> {
    let law = RegularizedCov::new(c.clone(), link.noise_floor(tx_antennas))?;
    Ok(law.sample(rng))
}

/// `horizon` samples of the scenario, drawn with `rng`.
pub fn simulate_stream<R: Rng + ?Sized>(s: &Scenario, rng: &mut R) -> Result<Vec<ChannelSample>> {
    let model = s.model()?;
    Ok(model.stream(s.change_point, rng).take(s.horizon).collect())
}
