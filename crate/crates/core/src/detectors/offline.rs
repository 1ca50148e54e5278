use super::{scan_windows, Alarm, DetectorVerdict, ScanContext};
use crate::covest::{Estimator, WindowAccumulator};
use crate::error::{Error, Result};
use crate::likelihood::RegularizedCov;
use crate::onering::ChannelSample;

/// Maximum over `p ∈ [1, L]` of the windowed statistic for one covariance
/// interval of `L` samples, with the earliest maximizing `p`.
pub fn offline_statistic(
    samples: &[ChannelSample],
    c0: &RegularizedCov,
    estimator: Estimator,
) -> Result<(f64, usize)> {
    if samples.is_empty() {
        return Err(Error::EmptyWindow);
    }
    let ctx = ScanContext::new(c0, estimator);
    let q0 = samples
        .iter()
        .map(|h| c0.quadform(h))
        .collect::<Result<Vec<f64>>>()?;
    let mut acc = WindowAccumulator::new(c0.dim());
    let (stat, n, _) =
        scan_windows(samples, &q0, 1, &ctx, &mut acc).expect("non-empty window scans");
    Ok((stat, samples.len() + 1 - n))
}

/// Single end-of-interval decision over exactly `interval_len` samples.
pub fn offline_detect(
    samples: &[ChannelSample],
    interval_len: usize,
    c0: &RegularizedCov,
    estimator: Estimator,
    theta: f64,
) -> Result<DetectorVerdict> {
    if interval_len < 2 {
        return Err(Error::invalid("interval_len", "must be at least 2"));
    }
    if samples.len() != interval_len {
        return Err(Error::StreamLength {
            expected: interval_len,
            found: samples.len(),
        });
    }
    let (stat, p) = offline_statistic(samples, c0, estimator)?;
    let alarm = (stat > theta).then_some(Alarm {
        interval: interval_len,
        change_point: p,
        statistic: stat,
    });
    Ok(DetectorVerdict { alarm })
}
