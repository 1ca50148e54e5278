use rand::Rng;

use super::{run_trials, trial_rng, DetectorSpec, Experiment, SweepConfig, TradeoffPoint, TAG_DELAY, TAG_FAR};
use crate::detectors::{offline_statistic, CusumDetector, CusumState, GlrDetector, OnlineDetector, SearchWindow, Step, TraceRecord};
use crate::covest::Estimator;
use crate::error::{Error, Result};
use crate::likelihood::{ld_divergence, Law};
use crate::onering::{ChangePoint, ChannelSample};

/// First-passage bookkeeping for an ascending threshold list.
struct Passages<'t> {
    thetas: &'t [f64],
    hits: Vec<Option<usize>>,
    next: usize,
}

impl<'t> Passages<'t> {
    fn new(thetas: &'t [f64]) -> Self {
        Self {
            thetas,
            hits: vec![None; thetas.len()],
            next: 0,
        }
    }

    fn observe(&mut self, j: usize, step: Step) {
        if !step.armed {
            return;
        }
        while self.next < self.thetas.len() && step.statistic > self.thetas[self.next] {
            self.hits[self.next] = Some(j);
            self.next += 1;
        }
    }

    fn done(&self) -> bool {
        self.next == self.thetas.len()
    }
}

fn draw<R: Rng + ?Sized>(exp: &Experiment, j: usize, cp: ChangePoint, rng: &mut R) -> ChannelSample {
    exp.model.sample_at(j, cp, rng)
}

/// Alarm interval of one stream for every threshold, `None` if the stream
/// reached `cap` intervals first.
fn trial_passages<R: Rng + ?Sized>(
    spec: &DetectorSpec,
    exp: &Experiment,
    cp: ChangePoint,
    cap: usize,
    thetas: &[f64],
    rng: &mut R,
) -> Result<Vec<Option<usize>>> {
    let mut pass = Passages::new(thetas);
    if thetas.is_empty() {
        return Ok(pass.hits);
    }
    match spec {
        DetectorSpec::Cusum => {
            let mut state = CusumState::new();
            for j in 1..=cap {
                let law = if cp.is_post_change(j) { Law::Post } else { Law::Pre };
                state = state.step(exp.spectrum.sample(law, rng));
                pass.observe(
                    j,
                    Step {
                        statistic: state.w(),
                        candidate: state.candidate(),
                        armed: true,
                    },
                );
                if pass.done() {
                    break;
                }
            }
        }
        DetectorSpec::CusumDense => {
            let mut det = CusumDetector::new(&exp.model.pre, &exp.model.post)?;
            online_passages(&mut det, exp, cp, cap, &mut pass, rng)?;
        }
        DetectorSpec::Glr { bounds } => {
            let mut det = GlrDetector::full(&exp.model.pre, *bounds)?;
            online_passages(&mut det, exp, cp, cap, &mut pass, rng)?;
        }
        DetectorSpec::WlGlr { xi, xi_bar, bounds } => {
            let mut det = GlrDetector::window_limited(&exp.model.pre, *xi, *xi_bar, *bounds)?;
            online_passages(&mut det, exp, cp, cap, &mut pass, rng)?;
        }
        DetectorSpec::Offline {
            interval_len,
            estimator,
        } => {
            let len = *interval_len;
            let mut end = len;
            while end <= cap {
                let (stat, p) = offline_decision(exp, *estimator, end, len, cp, rng)?;
                pass.observe(
                    end,
                    Step {
                        statistic: stat,
                        candidate: p,
                        armed: true,
                    },
                );
                if pass.done() {
                    break;
                }
                end += len;
            }
        }
    }
    Ok(pass.hits)
}

fn offline_decision<R: Rng + ?Sized>(
    exp: &Experiment,
    estimator: Estimator,
    end: usize,
    len: usize,
    cp: ChangePoint,
    rng: &mut R,
) -> Result<(f64, usize)> {
    let start = end + 1 - len;
    let samples: Vec<ChannelSample> = (start..=end).map(|j| draw(exp, j, cp, rng)).collect();
    let (stat, p) = offline_statistic(&samples, &exp.model.pre, estimator)?;
    Ok((stat, start - 1 + p))
}

fn online_passages<D: OnlineDetector, R: Rng + ?Sized>(
    det: &mut D,
    exp: &Experiment,
    cp: ChangePoint,
    cap: usize,
    pass: &mut Passages<'_>,
    rng: &mut R,
) -> Result<()> {
    for j in 1..=cap {
        let h = draw(exp, j, cp, rng);
        let step = det.push(&h)?;
        pass.observe(j, step);
        if pass.done() {
            break;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FarEstimate {
    pub theta: f64,
    pub far: f64,
    pub neg_log_far: f64,
    /// Delta-method standard error of `far` from the run-length spread.
    pub stderr: f64,
    pub mean_run_length: f64,
    pub censored: usize,
    pub runs: usize,
}

fn far_batch(spec: &DetectorSpec, exp: &Experiment, cfg: &SweepConfig) -> Result<Vec<FarEstimate>> {
    let cap = cfg.max_run_length;
    let runs = run_trials(cfg.workers, cfg.trials_far, |t| {
        let mut rng = trial_rng(cfg.seed, TAG_FAR, t as u64);
        trial_passages(spec, exp, ChangePoint::Never, cap, &cfg.thetas, &mut rng)
    })?;
    let n = runs.len() as f64;
    Ok(cfg
        .thetas
        .iter()
        .enumerate()
        .map(|(k, &theta)| {
            let mut sum = 0.0;
            let mut sum_sq = 0.0;
            let mut censored = 0;
            for r in &runs {
                let len = match r[k] {
                    Some(j) => j as f64,
                    None => {
                        censored += 1;
                        cap as f64
                    }
                };
                sum += len;
                sum_sq += len * len;
            }
            let mean = sum / n;
            let var = ((sum_sq - n * mean * mean) / (n - 1.0)).max(0.0);
            let far = 1.0 / mean;
            FarEstimate {
                theta,
                far,
                neg_log_far: -far.ln(),
                stderr: var.sqrt() / (n.sqrt() * mean * mean),
                mean_run_length: mean,
                censored,
                runs: runs.len(),
            }
        })
        .collect())
}

/// Mean false-alarm rate at one threshold under the pre-change law.
pub fn estimate_far(spec: &DetectorSpec, exp: &Experiment, theta: f64, cfg: &SweepConfig) -> Result<FarEstimate> {
    spec.validate()?;
    let cfg = SweepConfig {
        thetas: vec![theta],
        ..cfg.clone()
    };
    cfg.validate()?;
    let est = far_batch(spec, exp, &cfg)?[0];
    if est.censored == est.runs {
        return Err(Error::AllCensored {
            theta,
            runs: est.runs,
            cap: cfg.max_run_length,
        });
    }
    Ok(est)
}

/// Delay statistics at one change point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NuDelay {
    /// Change point; 0 for the off-line average over positions within the
    /// first covariance interval.
    pub nu: usize,
    pub mean: f64,
    pub stderr: f64,
    pub accepted: usize,
    /// Trials discarded because they alarmed before the change.
    pub rejected: usize,
    pub censored: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CaddEstimate {
    pub theta: f64,
    /// Worst mean delay over change points with at least one accepted trial;
    /// NaN if there are none.
    pub cadd: f64,
    pub stderr: f64,
    pub worst_nu: Option<usize>,
    pub per_nu: Vec<NuDelay>,
}

fn summarize(nu: usize, delays: &[f64], rejected: usize, censored: usize) -> NuDelay {
    let n = delays.len();
    let mean = if n > 0 { delays.iter().sum::<f64>() / n as f64 } else { f64::NAN };
    let stderr = if n > 1 {
        let var = delays.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        (var / n as f64).sqrt()
    } else {
        f64::NAN
    };
    NuDelay {
        nu,
        mean,
        stderr,
        accepted: n,
        rejected,
        censored,
    }
}

fn cadd_batch(spec: &DetectorSpec, exp: &Experiment, cfg: &SweepConfig) -> Result<Vec<CaddEstimate>> {
    let k_count = cfg.thetas.len();
    let mut per_theta: Vec<Vec<NuDelay>> = vec![Vec::new(); k_count];
    if let DetectorSpec::Offline { interval_len, .. } = spec {
        // change position spread evenly over the first covariance interval;
        // a detection at the end of that interval costs L - nu + 1
        let len = *interval_len;
        let cap = cfg.max_run_length.max(len);
        let runs = run_trials(cfg.workers, cfg.trials_delay, |t| {
            let nu = 1 + t % len;
            let mut rng = trial_rng(cfg.seed, TAG_DELAY, t as u64);
            let hits = trial_passages(spec, exp, ChangePoint::At(nu), cap, &cfg.thetas, &mut rng)?;
            Ok((nu, hits))
        })?;
        for (k, slot) in per_theta.iter_mut().enumerate() {
            let mut delays = Vec::with_capacity(runs.len());
            let mut censored = 0;
            for (nu, hits) in &runs {
                let alarm = hits[k].unwrap_or_else(|| {
                    censored += 1;
                    cap
                });
                delays.push((alarm + 1 - nu) as f64);
            }
            slot.push(summarize(0, &delays, 0, censored));
        }
    } else {
        let warmup = spec.warmup();
        for (i, &nu) in cfg.nu_grid.iter().enumerate() {
            let nu_eff = nu + warmup;
            let cap = nu_eff - 1 + cfg.max_run_length;
            let runs = run_trials(cfg.workers, cfg.trials_delay, |t| {
                let mut rng = trial_rng(cfg.seed, TAG_DELAY + i as u64, t as u64);
                trial_passages(spec, exp, ChangePoint::At(nu_eff), cap, &cfg.thetas, &mut rng)
            })?;
            for (k, slot) in per_theta.iter_mut().enumerate() {
                let mut delays = Vec::with_capacity(runs.len());
                let mut rejected = 0;
                let mut censored = 0;
                for hits in &runs {
                    match hits[k] {
                        Some(j) if j < nu_eff => rejected += 1,
                        Some(j) => delays.push((j - nu_eff) as f64),
                        None => {
                            censored += 1;
                            delays.push((cap - nu_eff) as f64);
                        }
                    }
                }
                slot.push(summarize(nu, &delays, rejected, censored));
            }
        }
    }
    Ok(cfg
        .thetas
        .iter()
        .zip(per_theta)
        .map(|(&theta, per_nu)| {
            let worst = per_nu
                .iter()
                .filter(|d| d.accepted > 0)
                .max_by(|a, b| a.mean.total_cmp(&b.mean));
            CaddEstimate {
                theta,
                cadd: worst.map_or(f64::NAN, |d| d.mean),
                stderr: worst.map_or(f64::NAN, |d| d.stderr),
                worst_nu: worst.map(|d| d.nu),
                per_nu: per_nu.clone(),
            }
        })
        .collect())
}

/// Worst-case conditional delay at one threshold over the configured change
/// points. Off-line detectors average over change positions inside the first
/// covariance interval instead.
pub fn estimate_cadd(spec: &DetectorSpec, exp: &Experiment, theta: f64, cfg: &SweepConfig) -> Result<CaddEstimate> {
    spec.validate()?;
    let cfg = SweepConfig {
        thetas: vec![theta],
        ..cfg.clone()
    };
    cfg.validate()?;
    let est = cadd_batch(spec, exp, &cfg)?.remove(0);
    if let Some(empty) = est.per_nu.iter().find(|d| d.accepted == 0) {
        return Err(Error::EmptyConditioning {
            nu: empty.nu,
            runs: cfg.trials_delay,
        });
    }
    Ok(est)
}

/// FAR and CADD at every threshold of `cfg`, in threshold order.
pub fn sweep_tradeoff(spec: &DetectorSpec, exp: &Experiment, cfg: &SweepConfig) -> Result<Vec<TradeoffPoint>> {
    if cfg.thetas.is_empty() {
        return Ok(Vec::new());
    }
    spec.validate()?;
    cfg.validate()?;
    let far = far_batch(spec, exp, cfg)?;
    let cadd = cadd_batch(spec, exp, cfg)?;
    Ok(far
        .into_iter()
        .zip(cadd)
        .map(|(f, c)| TradeoffPoint {
            theta: f.theta,
            far: f.far,
            neg_log_far: f.neg_log_far,
            far_stderr: f.stderr,
            cadd: c.cadd,
            cadd_stderr: c.stderr,
            censored: f.censored,
            trials_far: cfg.trials_far,
            trials_delay: cfg.trials_delay,
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Theorem1Row {
    pub theta: f64,
    pub neg_log_far: f64,
    pub cadd: f64,
    /// `cadd / neg_log_far`
    pub ratio: f64,
    /// `1/Φ` of the two regularized laws.
    pub asymptote: f64,
    pub censored: usize,
}

/// Known-covariance CUSUM sweep compared against the asymptotic delay per
/// unit of `−log FAR`.
pub fn verify_theorem1(exp: &Experiment, cfg: &SweepConfig) -> Result<Vec<Theorem1Row>> {
    if let (Some(&lo), Some(&hi)) = (cfg.thetas.first(), cfg.thetas.last()) {
        if lo > 0.0 && hi < 10.0 * lo {
            return Err(Error::invalid("thetas", "must span at least a decade"));
        }
    }
    let phi = ld_divergence(&exp.model.post, &exp.model.pre)?;
    let points = sweep_tradeoff(&DetectorSpec::Cusum, exp, cfg)?;
    Ok(points
        .iter()
        .map(|p| Theorem1Row {
            theta: p.theta,
            neg_log_far: p.neg_log_far,
            cadd: p.cadd,
            ratio: p.cadd / p.neg_log_far,
            asymptote: 1.0 / phi,
            censored: p.censored,
        })
        .collect())
}

/// Statistic trajectory of one simulated stream.
pub fn trace_run(
    spec: &DetectorSpec,
    exp: &Experiment,
    cp: ChangePoint,
    horizon: usize,
    seed: u64,
) -> Result<Vec<TraceRecord>> {
    spec.validate()?;
    let mut rng = trial_rng(seed, TAG_DELAY, u64::MAX);
    let mut out = Vec::with_capacity(horizon);
    let mut record_online = |det: &mut dyn OnlineDetector, rng: &mut rand_chacha::ChaCha8Rng| -> Result<()> {
        for j in 1..=horizon {
            let h = draw(exp, j, cp, rng);
            let step = det.push(&h)?;
            out.push(TraceRecord {
                j,
                statistic: step.statistic,
                candidate: step.candidate,
            });
        }
        Ok(())
    };
    match spec {
        DetectorSpec::Cusum | DetectorSpec::CusumDense => {
            let mut det = CusumDetector::new(&exp.model.pre, &exp.model.post)?;
            record_online(&mut det, &mut rng)?;
        }
        DetectorSpec::Glr { bounds } => {
            let mut det = GlrDetector::full(&exp.model.pre, *bounds)?;
            record_online(&mut det, &mut rng)?;
        }
        DetectorSpec::WlGlr { xi, xi_bar, bounds } => {
            let mut det = GlrDetector::new(
                &exp.model.pre,
                Estimator::Ml(*bounds),
                SearchWindow::Limited { far: *xi, near: *xi_bar },
            )?;
            record_online(&mut det, &mut rng)?;
        }
        DetectorSpec::Offline {
            interval_len,
            estimator,
        } => {
            let mut end = *interval_len;
            while end <= horizon {
                let (stat, p) = offline_decision(exp, *estimator, end, *interval_len, cp, &mut rng)?;
                out.push(TraceRecord {
                    j: end,
                    statistic: stat,
                    candidate: p,
                });
                end += interval_len;
            }
        }
    }
    Ok(out)
}
