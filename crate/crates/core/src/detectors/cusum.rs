use super::{run_online, DetectorVerdict, OnlineDetector, Step, TraceRecord};
use crate::error::{Error, Result};
use crate::likelihood::{llr, RegularizedCov};
use crate::onering::ChannelSample;

/// Running CUSUM statistic `W_j = max(W_{j−1} + LLR_j, 0)` and the
/// change-point estimate it implies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CusumState {
    w: f64,
    candidate: usize,
    j: usize,
}

impl Default for CusumState {
    fn default() -> Self {
        Self::new()
    }
}

impl CusumState {
    pub fn new() -> Self {
        Self {
            w: 0.0,
            candidate: 1,
            j: 0,
        }
    }

    pub fn w(&self) -> f64 {
        self.w
    }

    /// First interval after the last reset; the earliest maximizer of the
    /// windowed LLR sum ending at `j`.
    pub fn candidate(&self) -> usize {
        self.candidate
    }

    pub fn j(&self) -> usize {
        self.j
    }

    #[must_use]
    pub fn step(self, llr_value: f64) -> Self {
        let j = self.j + 1;
        let sum = self.w + llr_value;
        if sum < 0.0 {
            Self {
                w: 0.0,
                candidate: j + 1,
                j,
            }
        } else {
            Self {
                w: sum,
                candidate: self.candidate,
                j,
            }
        }
    }
}

/// CUSUM over a precomputed LLR sequence.
pub fn cusum_detect_llrs(llrs: &[f64], theta: f64) -> DetectorVerdict {
    let mut state = CusumState::new();
    for &v in llrs {
        state = state.step(v);
        if state.w > theta {
            return DetectorVerdict {
                alarm: Some(super::Alarm {
                    interval: state.j,
                    change_point: state.candidate,
                    statistic: state.w,
                }),
            };
        }
    }
    DetectorVerdict::default()
}

/// CUSUM with known pre- and post-change laws.
#[derive(Debug, Clone)]
pub struct CusumDetector<'a> {
    c0: &'a RegularizedCov,
    c1: &'a RegularizedCov,
    state: CusumState,
}

impl<'a> CusumDetector<'a> {
    pub fn new(c0: &'a RegularizedCov, c1: &'a RegularizedCov) -> Result<Self> {
        if c0.dim() != c1.dim() {
            return Err(Error::DimensionMismatch {
                expected: c0.dim(),
                found: c1.dim(),
            });
        }
        Ok(Self {
            c0,
            c1,
            state: CusumState::new(),
        })
    }

    pub fn state(&self) -> CusumState {
        self.state
    }
}

impl OnlineDetector for CusumDetector<'_> {
    fn push(&mut self, h: &ChannelSample) -> Result<Step> {
        let v = llr(h, self.c0, self.c1)?;
        self.state = self.state.step(v);
        Ok(Step {
            statistic: self.state.w,
            candidate: self.state.candidate,
            armed: true,
        })
    }

    fn interval(&self) -> usize {
        self.state.j
    }
}

pub fn cusum_detect(
    stream: &[ChannelSample],
    c0: &RegularizedCov,
    c1: &RegularizedCov,
    theta: f64,
    trace: Option<&mut Vec<TraceRecord>>,
) -> Result<DetectorVerdict> {
    if !(theta > 0.0) {
        return Err(Error::invalid("theta", "must be positive"));
    }
    let mut det = CusumDetector::new(c0, c1)?;
    run_online(&mut det, stream, theta, trace)
}
