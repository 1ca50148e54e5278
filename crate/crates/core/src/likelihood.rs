//! Complex Gaussian log-densities, log-likelihood ratios and the
//! log-determinant divergence between two regularized covariances.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};

use crate::covest::sample_covariance;
use crate::error::{Error, Result};
use crate::hermitian::{HermitianMatrix, PdFactor, C64};
use crate::onering::ChannelSample;

const LN_PI: f64 = 1.144_729_885_849_400_2;

/// A channel covariance `C` together with the estimation-noise floor
/// `reg = σ²/E₀`; every density is evaluated against `C + reg·I`, whose
/// Cholesky factor is cached at construction.
#[derive(Debug, Clone)]
pub struct RegularizedCov {
    base: HermitianMatrix,
    reg: f64,
    regularized: HermitianMatrix,
    factor: PdFactor,
}

impl RegularizedCov {
    pub fn new(base: HermitianMatrix, reg: f64) -> Result<Self> {
        if !(reg > 0.0) || !reg.is_finite() {
            return Err(Error::invalid("reg", "noise floor must be positive"));
        }
        let regularized = base.add_identity(reg);
        let factor = regularized.cholesky()?;
        Ok(Self {
            base,
            reg,
            regularized,
            factor,
        })
    }

    /// Wraps an already regularized matrix `A`, recovering `C = A − reg·I`.
    pub fn from_regularized(regularized: HermitianMatrix, reg: f64) -> Result<Self> {
        let base = regularized.add_identity(-reg);
        Self::new(base, reg)
    }

    pub fn base(&self) -> &HermitianMatrix {
        &self.base
    }

    pub fn reg(&self) -> f64 {
        self.reg
    }

    pub fn regularized(&self) -> &HermitianMatrix {
        &self.regularized
    }

    pub fn factor(&self) -> &PdFactor {
        &self.factor
    }

    pub fn dim(&self) -> usize {
        self.base.dim()
    }

    pub fn logdet(&self) -> f64 {
        self.factor.logdet()
    }

    /// `h̄ᴴ(C + reg·I)⁻¹h̄`
    pub fn quadform(&self, h: &ChannelSample) -> Result<f64> {
        self.factor.quadform_inv(h.as_slice())
    }

    pub fn log_density(&self, h: &ChannelSample) -> Result<f64> {
        let q = self.quadform(h)?;
        Ok(-(self.dim() as f64) * LN_PI - self.logdet() - q)
    }

    /// Draws `L·z` with `z` standard circular complex normal.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> ChannelSample {
        let m = self.dim();
        let z: Vec<C64> = (0..m).map(|_| standard_complex_normal(rng)).collect();
        let mut out = vec![C64::new(0.0, 0.0); m];
        self.factor.mul_lower_into(&z, &mut out);
        ChannelSample(out)
    }
}

pub(crate) fn standard_complex_normal<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

fn check_dims(a: &RegularizedCov, b: &RegularizedCov) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            found: b.dim(),
        });
    }
    Ok(())
}

pub fn log_density(c: &RegularizedCov, h: &ChannelSample) -> Result<f64> {
    c.log_density(h)
}

/// `log p(h̄ | c1) − log p(h̄ | c0)`
pub fn llr(h: &ChannelSample, c0: &RegularizedCov, c1: &RegularizedCov) -> Result<f64> {
    check_dims(c0, c1)?;
    let q0 = c0.quadform(h)?;
    let q1 = c1.quadform(h)?;
    Ok(c0.logdet() - c1.logdet() + q0 - q1)
}

/// Sum of per-sample LLRs over a window.
pub fn llr_sum(samples: &[ChannelSample], c0: &RegularizedCov, c1: &RegularizedCov) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::EmptyWindow);
    }
    samples.iter().map(|h| llr(h, c0, c1)).sum()
}

/// The same window sum written through the sample covariance `S`:
/// `n·(−log|A₁| − tr(A₁⁻¹S)) − nM·log π − Σ log p(h̄ | c0)`.
pub fn llr_sum_expanded(
    samples: &[ChannelSample],
    c0: &RegularizedCov,
    c1: &RegularizedCov,
) -> Result<f64> {
    check_dims(c0, c1)?;
    let s = sample_covariance(samples)?;
    let n = samples.len() as f64;
    let m = c1.dim() as f64;
    let fit = -c1.logdet() - c1.factor().trace_inv_product(s.matrix())?;
    let baseline: f64 = samples
        .iter()
        .map(|h| c0.log_density(h))
        .sum::<Result<f64>>()?;
    Ok(n * fit - n * m * LN_PI - baseline)
}

/// Log-determinant divergence
/// `Φ(A₁, A₀) = −M − log|A₁A₀⁻¹| + tr(A₁A₀⁻¹)` on the regularized matrices.
pub fn ld_divergence(c1: &RegularizedCov, c0: &RegularizedCov) -> Result<f64> {
    check_dims(c0, c1)?;
    let m = c1.dim() as f64;
    let tr = c0.factor().trace_inv_product(c1.regularized())?;
    Ok(-m - (c1.logdet() - c0.logdet()) + tr)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KlEstimate {
    pub estimate: f64,
    pub stderr: f64,
}

impl KlEstimate {
    /// Distance to `value` in standard errors.
    pub fn z_score(&self, value: f64) -> f64 {
        (self.estimate - value) / self.stderr.max(f64::MIN_POSITIVE)
    }
}

/// Monte Carlo estimate of `E₁[llr]`, the KL divergence of `c1`'s law from
/// `c0`'s, with its standard error.
pub fn kl_divergence_mc<R: Rng + ?Sized>(
    c1: &RegularizedCov,
    c0: &RegularizedCov,
    n: usize,
    rng: &mut R,
) -> Result<KlEstimate> {
    if n < 1000 {
        return Err(Error::invalid("n", "at least 1000 draws are required"));
    }
    check_dims(c0, c1)?;
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for k in 0..n {
        let h = c1.sample(rng);
        let x = llr(&h, c0, c1)?;
        let d = x - mean;
        mean += d / (k + 1) as f64;
        m2 += d * (x - mean);
    }
    let var = m2 / (n - 1) as f64;
    Ok(KlEstimate {
        estimate: mean,
        stderr: (var / n as f64).sqrt(),
    })
}

/// Running per-interval LLR values for one stream.
#[derive(Debug, Clone, Default)]
pub struct LlrSequence {
    values: Vec<f64>,
}

impl LlrSequence {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, h: &ChannelSample, c0: &RegularizedCov, c1: &RegularizedCov) -> Result<f64> {
        let v = llr(h, c0, c1)?;
        self.values.push(v);
        Ok(v)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Sum over intervals `first..=last` (1-based).
    pub fn window_sum(&self, first: usize, last: usize) -> f64 {
        self.values[first - 1..last].iter().sum()
    }
}

/// Which law generates the samples whose LLR is being drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Law {
    Pre,
    Post,
}

/// Draws LLR values directly in the joint eigenbasis of the two laws.
///
/// With `μ` the eigenvalues of `A₁⁻¹A₀`, the LLR of a sample from the
/// pre-change law is `Σ log μ + Σ (1 − μ)·E` and from the post-change law
/// `Σ log μ + Σ (1/μ − 1)·E`, with `E` i.i.d. unit exponentials. This has the
/// same distribution as sampling `h̄` and evaluating [`llr`], at a fraction of
/// the cost.
#[derive(Debug, Clone)]
pub struct LlrSpectrum {
    offset: f64,
    pre: Vec<f64>,
    post: Vec<f64>,
}

impl LlrSpectrum {
    pub fn new(c0: &RegularizedCov, c1: &RegularizedCov) -> Result<Self> {
        check_dims(c0, c1)?;
        let m = c0.dim();
        // X = L₁⁻¹L₀, so XᴴX = L₀ᴴA₁⁻¹L₀ is similar to A₁⁻¹A₀
        let l0 = c0.factor().lower();
        let mut x = DMatrix::<C64>::zeros(m, m);
        let mut col = vec![C64::new(0.0, 0.0); m];
        for c in 0..m {
            for r in 0..m {
                col[r] = l0[(r, c)];
            }
            c1.factor().forward_solve_in_place(&mut col);
            for r in 0..m {
                x[(r, c)] = col[r];
            }
        }
        let b = HermitianMatrix::symmetrized(x.adjoint() * &x);
        let mu = b.eigenvalues();
        if mu.iter().any(|&v| !(v > 0.0)) {
            return Err(Error::NotPositiveDefinite);
        }
        Ok(Self {
            offset: mu.iter().map(|v| v.ln()).sum(),
            pre: mu.iter().map(|v| 1.0 - v).collect(),
            post: mu.iter().map(|v| 1.0 / v - 1.0).collect(),
        })
    }

    pub fn mean(&self, law: Law) -> f64 {
        self.offset + self.coeffs(law).iter().sum::<f64>()
    }

    fn coeffs(&self, law: Law) -> &[f64] {
        match law {
            Law::Pre => &self.pre,
            Law::Post => &self.post,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, law: Law, rng: &mut R) -> f64 {
        let mut s = self.offset;
        for &c in self.coeffs(law) {
            let e: f64 = Exp1.sample(rng);
            s += c * e;
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn scalar(v: f64) -> RegularizedCov {
        // base v − 0.5, reg 0.5
        RegularizedCov::new(HermitianMatrix::from_diagonal(&[v - 0.5]), 0.5).unwrap()
    }

    fn h1(re: f64, im: f64) -> ChannelSample {
        ChannelSample(vec![C64::new(re, im)])
    }

    #[test]
    fn scalar_log_density() {
        let c = scalar(1.0);
        assert!((c.log_density(&h1(0.0, 0.0)).unwrap() + LN_PI).abs() < 1e-15);
        assert!((c.log_density(&h1(0.6, 0.8)).unwrap() + LN_PI + 1.0).abs() < 1e-15);
        assert!((LN_PI - std::f64::consts::PI.ln()).abs() < 1e-16);
    }

    #[test]
    fn log_density_dimension_mismatch() {
        let c = scalar(1.0);
        let h = ChannelSample(vec![C64::new(1.0, 0.0); 2]);
        assert!(matches!(c.log_density(&h), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn scalar_llr() {
        let c0 = scalar(1.0);
        let c1 = scalar(2.0);
        let h = h1(1.0, 1.0);
        let v = llr(&h, &c0, &c1).unwrap();
        assert!((v - (1.0 - 2f64.ln())).abs() < 1e-15);
        assert_eq!(llr(&h, &c0, &c0).unwrap(), 0.0);
    }

    #[test]
    fn llr_sum_of_one_and_empty() {
        let c0 = scalar(1.0);
        let c1 = scalar(2.0);
        let h = h1(0.3, -0.2);
        assert_eq!(
            llr_sum(std::slice::from_ref(&h), &c0, &c1).unwrap(),
            llr(&h, &c0, &c1).unwrap()
        );
        assert!(matches!(llr_sum(&[], &c0, &c1), Err(Error::EmptyWindow)));
    }

    #[test]
    fn ld_divergence_diagonal() {
        let a0 = RegularizedCov::new(HermitianMatrix::from_diagonal(&[0.9, 0.9]), 0.1).unwrap();
        let a1 = RegularizedCov::new(HermitianMatrix::from_diagonal(&[1.9, 1.9]), 0.1).unwrap();
        let phi = ld_divergence(&a1, &a0).unwrap();
        assert!((phi - (2.0 - 2.0 * 2f64.ln())).abs() < 1e-12);
        assert!(ld_divergence(&a0, &a0).unwrap().abs() < 1e-14);
    }

    #[test]
    fn kl_requires_enough_draws() {
        let c = scalar(1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(kl_divergence_mc(&c, &c, 999, &mut rng).is_err());
        let est = kl_divergence_mc(&c, &c, 1000, &mut rng).unwrap();
        assert_eq!(est.estimate, 0.0);
    }

    #[test]
    fn spectrum_mean_is_divergence() {
        let a0 = RegularizedCov::new(HermitianMatrix::from_diagonal(&[0.9, 0.4]), 0.1).unwrap();
        let a1 = RegularizedCov::new(HermitianMatrix::from_diagonal(&[1.9, 0.2]), 0.1).unwrap();
        let s = LlrSpectrum::new(&a0, &a1).unwrap();
        let phi1 = ld_divergence(&a1, &a0).unwrap();
        let phi0 = ld_divergence(&a0, &a1).unwrap();
        assert!((s.mean(Law::Post) - phi1).abs() < 1e-12);
        assert!((s.mean(Law::Pre) + phi0).abs() < 1e-12);
    }

    #[test]
    fn llr_sequence_window_sums() {
        let c0 = scalar(1.0);
        let c1 = scalar(2.0);
        let mut seq = LlrSequence::new();
        for k in 0..5 {
            seq.push(&h1(0.1 * k as f64, 0.2), &c0, &c1).unwrap();
        }
        assert_eq!(seq.len(), 5);
        let whole = seq.window_sum(1, 5);
        assert!((whole - (seq.window_sum(1, 2) + seq.window_sum(3, 5))).abs() < 1e-15);
    }
}
