//! On-line (CUSUM, GLR, window-limited GLR) and off-line change detectors.

mod cusum;
mod glr;
mod offline;

use std::io::{self, Write};

pub use cusum::{cusum_detect, cusum_detect_llrs, CusumDetector, CusumState};
pub use glr::{glr_detect, wl_glr_detect, GlrDetector, SearchWindow, WlGlrConfig};
pub use offline::{offline_detect, offline_statistic};

pub(crate) use glr::{scan_windows, ScanContext};

use crate::error::Result;
use crate::onering::ChannelSample;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Alarm {
    /// Interval `j` at which the statistic first exceeded the threshold.
    pub interval: usize,
    pub change_point: usize,
    pub statistic: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DetectorVerdict {
    pub alarm: Option<Alarm>,
}

impl DetectorVerdict {
    pub fn alarmed(&self) -> bool {
        self.alarm.is_some()
    }

    pub fn alarm_interval(&self) -> Option<usize> {
        self.alarm.map(|a| a.interval)
    }

    pub fn estimated_change_point(&self) -> Option<usize> {
        self.alarm.map(|a| a.change_point)
    }
}

/// Statistic after consuming one interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Step {
    pub statistic: f64,
    pub candidate: usize,
    /// False while the detector may not alarm (window warm-up).
    pub armed: bool,
}

impl Step {
    pub fn crosses(&self, theta: f64) -> bool {
        self.armed && self.statistic > theta
    }
}

/// A sequential statistic fed one estimated channel per coherence interval.
pub trait OnlineDetector {
    fn push(&mut self, h: &ChannelSample) -> Result<Step>;

    /// Number of intervals consumed so far.
    fn interval(&self) -> usize;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRecord {
    pub j: usize,
    pub statistic: f64,
    pub candidate: usize,
}

pub fn write_trace_csv<W: Write>(mut out: W, records: &[TraceRecord]) -> io::Result<()> {
    writeln!(out, "j,statistic,candidate_p")?;
    for r in records {
        writeln!(out, "{},{},{}", r.j, r.statistic, r.candidate)?;
    }
    Ok(())
}

/// Feeds `stream` until the first threshold crossing, optionally recording
/// every step.
pub fn run_online<'s, D, I>(
    detector: &mut D,
    stream: I,
    theta: f64,
    mut trace: Option<&mut Vec<TraceRecord>>,
) -> Result<DetectorVerdict>
where
    D: OnlineDetector + ?Sized,
    I: IntoIterator<Item = &'s ChannelSample>,
{
    for h in stream {
        let step = detector.push(h)?;
        let j = detector.interval();
        if let Some(t) = trace.as_deref_mut() {
            t.push(TraceRecord {
                j,
                statistic: step.statistic,
                candidate: step.candidate,
            });
        }
        if step.crosses(theta) {
            return Ok(DetectorVerdict {
                alarm: Some(Alarm {
                    interval: j,
                    change_point: step.candidate,
                    statistic: step.statistic,
                }),
            });
        }
    }
    Ok(DetectorVerdict::default())
}
