//! Covariance estimators used by the GLR-type detectors.
//!
//! Both estimators keep the eigenvectors of the sample covariance and only
//! reshape its spectrum, so detectors can work on eigenvalues alone (see
//! [`window_spectrum`]). The dense functions here are the reference path.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hermitian::{HermitianMatrix, C64};
use crate::onering::ChannelSample;

#[derive(Debug, Clone, PartialEq)]
pub struct SampleCovariance {
    matrix: HermitianMatrix,
    n_samples: usize,
}

impl SampleCovariance {
    pub fn matrix(&self) -> &HermitianMatrix {
        &self.matrix
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }
}

/// `(1/n)·Σ h̄·h̄ᴴ` over the window.
pub fn sample_covariance(samples: &[ChannelSample]) -> Result<SampleCovariance> {
    let first = samples.first().ok_or(Error::EmptyWindow)?;
    let m = first.dim();
    let mut acc = DMatrix::<C64>::zeros(m, m);
    for h in samples {
        if h.dim() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                found: h.dim(),
            });
        }
        add_outer(&mut acc, h.as_slice());
    }
    let n = samples.len();
    Ok(SampleCovariance {
        matrix: HermitianMatrix::symmetrized(acc.unscale(n as f64)),
        n_samples: n,
    })
}

/// `acc += v·vᴴ`, lower triangle and its mirror.
fn add_outer(acc: &mut DMatrix<C64>, v: &[C64]) {
    let m = v.len();
    for c in 0..m {
        let vc = v[c].conj();
        for r in c..m {
            acc[(r, c)] += v[r] * vc;
        }
    }
    for c in 0..m {
        for r in (c + 1)..m {
            acc[(c, r)] = acc[(r, c)].conj();
        }
    }
}

/// Eigenvalue bounds `[beta_l, beta_u]` on the estimated channel covariance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MlBounds {
    pub beta_l: f64,
    pub beta_u: f64,
}

impl MlBounds {
    pub fn new(beta_l: f64, beta_u: f64) -> Result<Self> {
        let b = Self { beta_l, beta_u };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta_l > 0.0) || !self.beta_l.is_finite() {
            return Err(Error::invalid("beta_l", "must be positive and finite"));
        }
        if !(self.beta_u > self.beta_l) || !self.beta_u.is_finite() {
            return Err(Error::invalid("beta_u", "must be finite and exceed beta_l"));
        }
        Ok(())
    }

    /// Regularized eigenvalue `â + reg` chosen for a sample eigenvalue.
    ///
    /// The closed form clips `1/λ` into `[1/(β_u+reg), 1/(β_l+reg)]`; clipping
    /// `λ` into `[β_l+reg, β_u+reg]` is the same map and sends a zero sample
    /// eigenvalue (`1/λ = ∞`) to `β_l + reg` without a division.
    pub fn clip_regularized(&self, lambda: f64, reg: f64) -> f64 {
        lambda.clamp(self.beta_l + reg, self.beta_u + reg)
    }
}

fn check_reg(reg: f64) -> Result<()> {
    if !(reg > 0.0) || !reg.is_finite() {
        return Err(Error::invalid("reg", "noise floor must be positive"));
    }
    Ok(())
}

/// Constrained ML estimate: eigenvalues of `S` clipped so the channel
/// covariance spectrum lies in `[β_l, β_u]`.
pub fn ml_covariance(s: &SampleCovariance, bounds: MlBounds, reg: f64) -> Result<HermitianMatrix> {
    bounds.validate()?;
    check_reg(reg)?;
    let eig = s.matrix.eig()?;
    let values: Vec<f64> = eig
        .eigenvalues
        .iter()
        .map(|&l| bounds.clip_regularized(l.max(0.0), reg) - reg)
        .collect();
    Ok(eig.compose(&values))
}

/// Shrinkage weight from `tr S`, `tr S²`, dimension and window length,
/// clamped to `[0, 1]`. Falls back to 1 when the window holds two samples or
/// fewer or the dispersion term in the denominator vanishes.
pub fn shrinkage_weight(trace: f64, trace_sq: f64, dim: usize, n_samples: usize) -> f64 {
    if n_samples <= 2 {
        return 1.0;
    }
    let m = dim as f64;
    let count = (n_samples - 2) as f64;
    let denom = count / m * (trace_sq - trace * trace / m);
    if !(denom > 0.0) {
        return 1.0;
    }
    let phi = (trace * trace - trace_sq / m) / denom;
    phi.clamp(0.0, 1.0)
}

/// `(1−φ)·S + φ·(tr S/M)·I − reg·I`. Not clipped: the result may have
/// negative eigenvalues, but adding `reg·I` back is PD for any non-zero `S`.
pub fn shrinkage_covariance(s: &SampleCovariance, reg: f64) -> Result<HermitianMatrix> {
    check_reg(reg)?;
    let phi = sample_shrinkage_weight(s);
    Ok(shrink_with_weight(s, phi, reg))
}

pub fn sample_shrinkage_weight(s: &SampleCovariance) -> f64 {
    let a = s.matrix.as_matrix();
    let tr = s.matrix.trace();
    let tr_sq: f64 = a.iter().map(|z| z.norm_sqr()).sum();
    shrinkage_weight(tr, tr_sq, s.dim(), s.n_samples)
}

/// The shrinkage combination at an explicit weight.
pub fn shrink_with_weight(s: &SampleCovariance, phi: f64, reg: f64) -> HermitianMatrix {
    let target = s.matrix.trace() / s.dim() as f64;
    s.matrix.scale(1.0 - phi).add_identity(phi * target - reg)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorKind {
    Ml,
    Shrinkage,
}

/// Estimator plus its parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Estimator {
    Ml(MlBounds),
    Shrinkage,
}

impl Estimator {
    pub fn kind(&self) -> EstimatorKind {
        match self {
            Estimator::Ml(_) => EstimatorKind::Ml,
            Estimator::Shrinkage => EstimatorKind::Shrinkage,
        }
    }

    /// Dense estimate of the channel covariance from a sample covariance.
    pub fn estimate(&self, s: &SampleCovariance, reg: f64) -> Result<HermitianMatrix> {
        match self {
            Estimator::Ml(b) => ml_covariance(s, *b, reg),
            Estimator::Shrinkage => shrinkage_covariance(s, reg),
        }
    }

    /// Maps the full sample spectrum (length `M`, zeros included) to the
    /// spectrum of `Ĉ + reg·I` in place.
    pub fn regularized_spectrum(&self, spectrum: &mut [f64], n_samples: usize, reg: f64) {
        match self {
            Estimator::Ml(b) => {
                for l in spectrum.iter_mut() {
                    *l = b.clip_regularized(l.max(0.0), reg);
                }
            }
            Estimator::Shrinkage => {
                let tr: f64 = spectrum.iter().sum();
                let tr_sq: f64 = spectrum.iter().map(|l| l * l).sum();
                let phi = shrinkage_weight(tr, tr_sq, spectrum.len(), n_samples);
                let target = phi * tr / spectrum.len() as f64;
                for l in spectrum.iter_mut() {
                    *l = (1.0 - phi) * *l + target;
                }
            }
        }
    }
}

/// Ascending eigenvalues of the sample covariance of a window, zero-padded
/// to `M`.
///
/// Windows shorter than the dimension use the `n×n` Gram matrix, whose
/// non-zero spectrum matches `H·Hᴴ`.
pub fn window_spectrum(samples: &[ChannelSample]) -> Result<Vec<f64>> {
    let first = samples.first().ok_or(Error::EmptyWindow)?;
    let m = first.dim();
    let n = samples.len();
    if samples.iter().any(|h| h.dim() != m) {
        return Err(Error::DimensionMismatch {
            expected: m,
            found: samples.iter().map(|h| h.dim()).find(|&d| d != m).unwrap_or(m),
        });
    }
    let mut ev = if n < m {
        let g = DMatrix::from_fn(n, n, |r, c| inner(&samples[r], &samples[c]));
        HermitianMatrix::symmetrized(g).eigenvalues()
    } else {
        let mut acc = DMatrix::<C64>::zeros(m, m);
        for h in samples {
            add_outer(&mut acc, h.as_slice());
        }
        HermitianMatrix::symmetrized(acc).eigenvalues()
    };
    for l in ev.iter_mut() {
        *l = l.max(0.0) / n as f64;
    }
    ev.resize(m, 0.0);
    ev.sort_by(f64::total_cmp);
    Ok(ev)
}

/// `aᴴb`
pub(crate) fn inner(a: &ChannelSample, b: &ChannelSample) -> C64 {
    a.as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| x.conj() * y)
        .sum()
}

/// Incremental accumulator for growing a window backwards in time and
/// reading off the spectrum of each prefix.
#[derive(Debug, Clone)]
pub(crate) struct WindowAccumulator {
    outer: DMatrix<C64>,
    dim: usize,
}

impl WindowAccumulator {
    pub(crate) fn new(dim: usize) -> Self {
        Self {
            outer: DMatrix::zeros(dim, dim),
            dim,
        }
    }

    pub(crate) fn reset(&mut self) {
        self.outer.fill(C64::new(0.0, 0.0));
    }

    pub(crate) fn add(&mut self, h: &ChannelSample) {
        let m = self.dim;
        let v = h.as_slice();
        for c in 0..m {
            let vc = v[c].conj();
            for r in c..m {
                self.outer[(r, c)] += v[r] * vc;
            }
        }
    }

    /// Spectrum of `(1/n)·Σ h·hᴴ`, ascending.
    pub(crate) fn spectrum(&self, n: usize) -> Vec<f64> {
        let m = self.dim;
        let mut full = self.outer.clone();
        for c in 0..m {
            for r in (c + 1)..m {
                full[(c, r)] = full[(r, c)].conj();
            }
        }
        let mut ev = HermitianMatrix::symmetrized(full).eigenvalues();
        for l in ev.iter_mut() {
            *l = l.max(0.0) / n as f64;
        }
        ev
    }
}
