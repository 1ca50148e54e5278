use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{run_online, DetectorVerdict, OnlineDetector, Step, TraceRecord};
use crate::covest::{inner, Estimator, MlBounds, WindowAccumulator};
use crate::error::{Error, Result};
use crate::hermitian::HermitianMatrix;
use crate::likelihood::RegularizedCov;
use crate::onering::ChannelSample;

/// Window-limited GLR parameters: the change point is searched in
/// `[j − xi, j − xi_bar]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WlGlrConfig {
    pub xi: usize,
    pub xi_bar: usize,
    pub bounds: MlBounds,
    pub theta: f64,
}

impl WlGlrConfig {
    pub fn validate(&self) -> Result<()> {
        if self.xi_bar >= self.xi {
            return Err(Error::invalid("xi_bar", "must be smaller than xi"));
        }
        if !self.theta.is_finite() {
            return Err(Error::invalid("theta", "must be finite"));
        }
        self.bounds.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SearchWindow {
    /// Every `p ∈ [1, j]`.
    Full,
    /// `p ∈ [max(1, j − far), j − near]`; no alarm before `j > far`.
    Limited { far: usize, near: usize },
}

impl SearchWindow {
    fn near(&self) -> usize {
        match *self {
            SearchWindow::Full => 0,
            SearchWindow::Limited { near, .. } => near,
        }
    }

    fn first_p(&self, j: usize) -> usize {
        match *self {
            SearchWindow::Full => 1,
            SearchWindow::Limited { far, .. } => j.saturating_sub(far).max(1),
        }
    }

    fn armed(&self, j: usize) -> bool {
        match *self {
            SearchWindow::Full => true,
            SearchWindow::Limited { far, .. } => j > far,
        }
    }
}

/// Constants shared by every window evaluated against one pre-change law.
#[derive(Debug, Clone, Copy)]
pub(crate) struct ScanContext {
    pub logdet0: f64,
    pub estimator: Estimator,
    pub reg: f64,
    pub dim: usize,
}

impl ScanContext {
    pub(crate) fn new(c0: &RegularizedCov, estimator: Estimator) -> Self {
        Self {
            logdet0: c0.logdet(),
            estimator,
            reg: c0.reg(),
            dim: c0.dim(),
        }
    }

    /// Summed LLR of `n` samples against the estimate built from them, given
    /// their sample spectrum and `Σ h̄ᴴA₀⁻¹h̄`.
    fn window_statistic(&self, spectrum: &[f64], n: usize, q0: f64, buf: &mut Vec<f64>) -> f64 {
        buf.clear();
        buf.extend_from_slice(spectrum);
        self.estimator.regularized_spectrum(buf, n, self.reg);
        let mut fit = 0.0;
        for (l, a) in spectrum.iter().zip(buf.iter()) {
            if !(*a > 0.0) {
                return f64::NEG_INFINITY;
            }
            fit += a.ln() + l / a;
        }
        n as f64 * (self.logdet0 - fit) + q0
    }
}

/// Best window ending at the last sample, over window lengths
/// `min_len..=samples.len()`. Returns the statistic, the best length and the
/// number of windows evaluated. Ties go to the longest window.
pub(crate) fn scan_windows(
    samples: &[ChannelSample],
    q0: &[f64],
    min_len: usize,
    ctx: &ScanContext,
    acc: &mut WindowAccumulator,
) -> Option<(f64, usize, usize)> {
    let total = samples.len();
    let m = ctx.dim;
    let min_len = min_len.max(1);
    if min_len > total {
        return None;
    }
    let g = total.min(m - 1);
    let gram = if min_len < m && g > 0 {
        let base = total - g;
        Some(DMatrix::from_fn(g, g, |r, c| inner(&samples[base + r], &samples[base + c])))
    } else {
        None
    };
    let use_acc = total >= m;
    if use_acc {
        acc.reset();
    }
    let mut best = (f64::NEG_INFINITY, 0);
    let mut calls = 0;
    let mut qsum = 0.0;
    let mut spectrum = Vec::with_capacity(m);
    let mut buf = Vec::with_capacity(m);
    for n in 1..=total {
        let h = &samples[total - n];
        qsum += q0[total - n];
        if use_acc {
            acc.add(h);
        }
        if n < min_len {
            continue;
        }
        spectrum.clear();
        if n < m {
            let gram = gram.as_ref().expect("gram built for short windows");
            let block = gram.view((g - n, g - n), (n, n)).into_owned();
            spectrum.extend(
                HermitianMatrix::symmetrized(block)
                    .eigenvalues()
                    .into_iter()
                    .map(|l| l.max(0.0) / n as f64),
            );
            spectrum.resize(m, 0.0);
        } else {
            spectrum.extend(acc.spectrum(n));
        }
        let stat = ctx.window_statistic(&spectrum, n, qsum, &mut buf);
        calls += 1;
        if stat >= best.0 {
            best = (stat, n);
        }
    }
    Some((best.0, best.1, calls))
}

/// GLR / window-limited GLR against a known pre-change law with the
/// post-change covariance re-estimated for every candidate change point.
#[derive(Debug, Clone)]
pub struct GlrDetector<'a> {
    c0: &'a RegularizedCov,
    ctx: ScanContext,
    window: SearchWindow,
    history: Vec<ChannelSample>,
    q0: Vec<f64>,
    /// Interval index of `history[0]`.
    first: usize,
    j: usize,
    acc: WindowAccumulator,
    estimator_calls: u64,
    last_calls: usize,
}

impl<'a> GlrDetector<'a> {
    pub fn new(c0: &'a RegularizedCov, estimator: Estimator, window: SearchWindow) -> Result<Self> {
        if let SearchWindow::Limited { far, near } = window {
            if near >= far {
                return Err(Error::invalid("xi_bar", "must be smaller than xi"));
            }
        }
        if let Estimator::Ml(b) = estimator {
            b.validate()?;
        }
        Ok(Self {
            c0,
            ctx: ScanContext::new(c0, estimator),
            window,
            history: Vec::new(),
            q0: Vec::new(),
            first: 1,
            j: 0,
            acc: WindowAccumulator::new(c0.dim()),
            estimator_calls: 0,
            last_calls: 0,
        })
    }

    pub fn full(c0: &'a RegularizedCov, bounds: MlBounds) -> Result<Self> {
        Self::new(c0, Estimator::Ml(bounds), SearchWindow::Full)
    }

    pub fn window_limited(c0: &'a RegularizedCov, xi: usize, xi_bar: usize, bounds: MlBounds) -> Result<Self> {
        Self::new(
            c0,
            Estimator::Ml(bounds),
            SearchWindow::Limited {
                far: xi,
                near: xi_bar,
            },
        )
    }

    /// Total covariance estimates formed so far.
    pub fn estimator_calls(&self) -> u64 {
        self.estimator_calls
    }

    /// Covariance estimates formed at the last interval.
    pub fn last_estimator_calls(&self) -> usize {
        self.last_calls
    }

    fn trim(&mut self) {
        if let SearchWindow::Limited { far, .. } = self.window {
            let keep = far + 1;
            if self.history.len() >= 2 * keep {
                let drop = self.history.len() - keep;
                self.history.drain(..drop);
                self.q0.drain(..drop);
                self.first += drop;
            }
        }
    }
}

impl OnlineDetector for GlrDetector<'_> {
    fn push(&mut self, h: &ChannelSample) -> Result<Step> {
        let q = self.c0.quadform(h)?;
        self.j += 1;
        self.history.push(h.clone());
        self.q0.push(q);
        self.trim();
        let j = self.j;
        let lo = self.window.first_p(j);
        let start = lo - self.first;
        let min_len = self.window.near() + 1;
        let scanned = scan_windows(
            &self.history[start..],
            &self.q0[start..],
            min_len,
            &self.ctx,
            &mut self.acc,
        );
        let Some((statistic, n, calls)) = scanned else {
            self.last_calls = 0;
            return Ok(Step {
                statistic: f64::NEG_INFINITY,
                candidate: j,
                armed: false,
            });
        };
        self.last_calls = calls;
        self.estimator_calls += calls as u64;
        Ok(Step {
            statistic,
            candidate: j + 1 - n,
            armed: self.window.armed(j),
        })
    }

    fn interval(&self) -> usize {
        self.j
    }
}

pub fn glr_detect(
    stream: &[ChannelSample],
    c0: &RegularizedCov,
    bounds: MlBounds,
    theta: f64,
    trace: Option<&mut Vec<TraceRecord>>,
) -> Result<DetectorVerdict> {
    if !(theta > 0.0) {
        return Err(Error::invalid("theta", "must be positive"));
    }
    let mut det = GlrDetector::full(c0, bounds)?;
    run_online(&mut det, stream, theta, trace)
}

pub fn wl_glr_detect(
    stream: &[ChannelSample],
    c0: &RegularizedCov,
    cfg: &WlGlrConfig,
    trace: Option<&mut Vec<TraceRecord>>,
) -> Result<DetectorVerdict> {
    cfg.validate()?;
    let mut det = GlrDetector::window_limited(c0, cfg.xi, cfg.xi_bar, cfg.bounds)?;
    run_online(&mut det, stream, cfg.theta, trace)
}
