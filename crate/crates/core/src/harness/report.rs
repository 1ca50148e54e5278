use std::hint::black_box;
use std::io::{self, Write};
use std::time::Instant;

use super::{trial_rng, DetectorSpec, Experiment, Theorem1Row, TradeoffPoint, TAG_TIMING};
use crate::detectors::{offline_statistic, CusumDetector, GlrDetector, OnlineDetector};
use crate::error::{Error, Result};
use crate::onering::{ChangePoint, ChannelSample};

pub fn write_tradeoff_csv<W: Write>(
    mut out: W,
    points: &[TradeoffPoint],
    detector: &str,
    scenario_id: &str,
) -> io::Result<()> {
    writeln!(
        out,
        "theta,far,neg_log_far,far_stderr,cadd,cadd_stderr,censored,trials_far,trials_delay,detector,scenario_id"
    )?;
    for p in points {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            p.theta,
            p.far,
            p.neg_log_far,
            p.far_stderr,
            p.cadd,
            p.cadd_stderr,
            p.censored,
            p.trials_far,
            p.trials_delay,
            detector,
            scenario_id
        )?;
    }
    Ok(())
}

pub fn write_theorem1_csv<W: Write>(mut out: W, rows: &[Theorem1Row], scenario_id: &str) -> io::Result<()> {
    writeln!(out, "theta,neg_log_far,cadd,ratio,asymptote,censored,scenario_id")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.theta, r.neg_log_far, r.cadd, r.ratio, r.asymptote, r.censored, scenario_id
        )?;
    }
    Ok(())
}

/// CADD at `target` `−log FAR`, linear between the two bracketing sweep
/// points. `None` outside the swept range.
pub fn interpolate_cadd(points: &[TradeoffPoint], target: f64) -> Option<f64> {
    let mut pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|p| p.cadd.is_finite() && p.neg_log_far.is_finite())
        .map(|p| (p.neg_log_far, p.cadd))
        .collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    for w in pts.windows(2) {
        let (x0, y0) = w[0];
        let (x1, y1) = w[1];
        if x0 <= target && target <= x1 {
            if x1 == x0 {
                return Some(0.5 * (y0 + y1));
            }
            return Some(y0 + (y1 - y0) * (target - x0) / (x1 - x0));
        }
    }
    None
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimingRow {
    pub detector: String,
    /// Wall time per coherence interval; off-line decisions are amortized
    /// over their covariance interval.
    pub per_interval_secs: f64,
    /// Wall time per alarm decision.
    pub per_decision_secs: f64,
    pub intervals: usize,
}

pub fn write_timing_csv<W: Write>(mut out: W, rows: &[TimingRow]) -> io::Result<()> {
    writeln!(out, "detector,per_interval_seconds,per_decision_seconds,intervals")?;
    for r in rows {
        writeln!(
            out,
            "{},{:e},{:e},{}",
            r.detector, r.per_interval_secs, r.per_decision_secs, r.intervals
        )?;
    }
    Ok(())
}

fn time_online<D: OnlineDetector>(det: &mut D, stream: &[ChannelSample]) -> Result<f64> {
    let start = Instant::now();
    for h in stream {
        black_box(det.push(black_box(h))?);
    }
    Ok(start.elapsed().as_secs_f64())
}

/// Single-threaded wall time of each detector over identical pre-change
/// streams of `horizon` intervals. The first row is a no-op pass over the
/// same streams.
pub fn time_detectors(
    specs: &[DetectorSpec],
    exp: &Experiment,
    trials: usize,
    horizon: usize,
    seed: u64,
) -> Result<Vec<TimingRow>> {
    if trials < 50 {
        return Err(Error::invalid("trials", "must be at least 50"));
    }
    if horizon < 1 {
        return Err(Error::invalid("horizon", "must be at least 1"));
    }
    let streams: Vec<Vec<ChannelSample>> = (0..trials)
        .map(|t| {
            let mut rng = trial_rng(seed, TAG_TIMING, t as u64);
            (1..=horizon)
                .map(|j| exp.model.sample_at(j, ChangePoint::Never, &mut rng))
                .collect()
        })
        .collect();
    let total = trials * horizon;
    let mut rows = Vec::with_capacity(specs.len() + 1);
    let start = Instant::now();
    for s in &streams {
        for h in s {
            black_box(h.norm_sqr());
        }
    }
    let noop = start.elapsed().as_secs_f64() / total as f64;
    rows.push(TimingRow {
        detector: "noop".into(),
        per_interval_secs: noop,
        per_decision_secs: noop,
        intervals: total,
    });
    for spec in specs {
        spec.validate()?;
        let mut secs = 0.0;
        let row = match spec {
            DetectorSpec::Offline {
                interval_len,
                estimator,
            } => {
                let len = *interval_len;
                let mut decisions = 0;
                for s in &streams {
                    for chunk in s.chunks_exact(len) {
                        let start = Instant::now();
                        black_box(offline_statistic(black_box(chunk), &exp.model.pre, *estimator)?);
                        secs += start.elapsed().as_secs_f64();
                        decisions += 1;
                    }
                }
                if decisions == 0 {
                    return Err(Error::invalid("horizon", "shorter than the off-line interval"));
                }
                TimingRow {
                    detector: spec.name(),
                    per_interval_secs: secs / (decisions * len) as f64,
                    per_decision_secs: secs / decisions as f64,
                    intervals: decisions * len,
                }
            }
            _ => {
                for s in &streams {
                    secs += match spec {
                        DetectorSpec::Cusum | DetectorSpec::CusumDense => {
                            time_online(&mut CusumDetector::new(&exp.model.pre, &exp.model.post)?, s)?
                        }
                        DetectorSpec::Glr { bounds } => {
                            time_online(&mut GlrDetector::full(&exp.model.pre, *bounds)?, s)?
                        }
                        DetectorSpec::WlGlr { xi, xi_bar, bounds } => time_online(
                            &mut GlrDetector::window_limited(&exp.model.pre, *xi, *xi_bar, *bounds)?,
                            s,
                        )?,
                        DetectorSpec::Offline { .. } => unreachable!(),
                    };
                }
                TimingRow {
                    detector: spec.name(),
                    per_interval_secs: secs / total as f64,
                    per_decision_secs: secs / total as f64,
                    intervals: total,
                }
            }
        };
        rows.push(row);
    }
    Ok(rows)
}
