//! Monte Carlo estimation of false-alarm rate and detection delay, threshold
//! sweeps, the asymptotic delay check and detector timing.
//!
//! Every trial draws from its own ChaCha stream keyed by `(seed, purpose,
//! trial)`, and results are gathered in trial order before any reduction, so
//! output does not depend on the number of workers.

mod engine;
mod report;

pub use engine::{
    estimate_cadd, estimate_far, sweep_tradeoff, trace_run, verify_theorem1, CaddEstimate,
    FarEstimate, NuDelay, Theorem1Row,
};
pub use report::{
    interpolate_cadd, time_detectors, write_theorem1_csv, write_timing_csv, write_tradeoff_csv,
    TimingRow,
};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::covest::{Estimator, MlBounds};
use crate::error::{Error, Result};
use crate::likelihood::{LlrSpectrum, RegularizedCov};
use crate::onering::{ChannelModel, Scenario};

/// Change points used for worst-case delay when none are configured.
pub const DEFAULT_NU_GRID: [usize; 5] = [1, 5, 10, 25, 50];

/// Which detector a Monte Carlo experiment runs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DetectorSpec {
    /// Known-covariance CUSUM; LLRs drawn directly from their law.
    Cusum,
    /// Known-covariance CUSUM evaluated on simulated channel estimates.
    CusumDense,
    Glr { bounds: MlBounds },
    WlGlr { xi: usize, xi_bar: usize, bounds: MlBounds },
    Offline { interval_len: usize, estimator: Estimator },
}

impl DetectorSpec {
    pub fn name(&self) -> String {
        match self {
            DetectorSpec::Cusum | DetectorSpec::CusumDense => "cusum".into(),
            DetectorSpec::Glr { .. } => "glr".into(),
            DetectorSpec::WlGlr { .. } => "wlglr".into(),
            DetectorSpec::Offline { estimator, .. } => match estimator {
                Estimator::Ml(_) => "offline-ml".into(),
                Estimator::Shrinkage => "offline-shrinkage".into(),
            },
        }
    }

    /// Intervals during which the detector cannot alarm.
    pub fn warmup(&self) -> usize {
        match self {
            DetectorSpec::WlGlr { xi, .. } => *xi,
            _ => 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            DetectorSpec::Cusum | DetectorSpec::CusumDense => Ok(()),
            DetectorSpec::Glr { bounds } => bounds.validate(),
            DetectorSpec::WlGlr { xi, xi_bar, bounds } => {
                if xi_bar >= xi {
                    return Err(Error::invalid("xi_bar", "must be smaller than xi"));
                }
                bounds.validate()
            }
            DetectorSpec::Offline {
                interval_len,
                estimator,
            } => {
                if *interval_len < 2 {
                    return Err(Error::invalid("interval_len", "must be at least 2"));
                }
                if let Estimator::Ml(b) = estimator {
                    b.validate()?;
                }
                Ok(())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub thetas: Vec<f64>,
    pub trials_far: usize,
    pub trials_delay: usize,
    pub max_run_length: usize,
    #[serde(default = "default_nu_grid")]
    pub nu_grid: Vec<usize>,
    pub seed: u64,
    /// Worker threads; 0 uses every available core. Does not affect results.
    #[serde(default, skip_serializing)]
    pub workers: usize,
}

fn default_nu_grid() -> Vec<usize> {
    DEFAULT_NU_GRID.to_vec()
}

pub const MIN_TRIALS: usize = 100;
pub const MIN_RUN_LENGTH: usize = 1000;

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.thetas.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::invalid("thetas", "must be strictly increasing"));
        }
        if self.thetas.iter().any(|t| !t.is_finite()) {
            return Err(Error::invalid("thetas", "must be finite"));
        }
        if self.trials_far < MIN_TRIALS {
            return Err(Error::invalid("trials_far", format!("must be at least {MIN_TRIALS}")));
        }
        if self.trials_delay < MIN_TRIALS {
            return Err(Error::invalid("trials_delay", format!("must be at least {MIN_TRIALS}")));
        }
        if self.max_run_length < MIN_RUN_LENGTH {
            return Err(Error::invalid(
                "max_run_length",
                format!("must be at least {MIN_RUN_LENGTH}"),
            ));
        }
        if self.nu_grid.is_empty() || self.nu_grid.contains(&0) {
            return Err(Error::invalid("nu_grid", "must be non-empty and 1-based"));
        }
        Ok(())
    }
}

/// One point of the false-alarm / delay trade-off.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TradeoffPoint {
    pub theta: f64,
    pub far: f64,
    pub neg_log_far: f64,
    pub far_stderr: f64,
    /// NaN when every delay trial alarmed before the change at every `ν`.
    pub cadd: f64,
    pub cadd_stderr: f64,
    pub censored: usize,
    pub trials_far: usize,
    pub trials_delay: usize,
}

impl TradeoffPoint {
    pub fn all_censored(&self) -> bool {
        self.censored == self.trials_far
    }
}

/// Pre- and post-change laws plus the LLR spectrum used by the fast CUSUM.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub model: ChannelModel,
    pub spectrum: LlrSpectrum,
    pub scenario_id: String,
}

impl Experiment {
    pub fn new(model: ChannelModel, scenario_id: impl Into<String>) -> Result<Self> {
        let spectrum = LlrSpectrum::new(&model.pre, &model.post)?;
        Ok(Self {
            model,
            spectrum,
            scenario_id: scenario_id.into(),
        })
    }

    pub fn from_laws(pre: RegularizedCov, post: RegularizedCov, scenario_id: impl Into<String>) -> Result<Self> {
        Self::new(ChannelModel { pre, post }, scenario_id)
    }

    pub fn from_scenario(s: &Scenario, scenario_id: impl Into<String>) -> Result<Self> {
        s.validate()?;
        Self::new(s.model()?, scenario_id)
    }
}

pub(crate) const TAG_FAR: u64 = 0x66_6172;
pub(crate) const TAG_DELAY: u64 = 0x64_656c_6179;
pub(crate) const TAG_TIMING: u64 = 0x7469_6d65;

/// RNG for trial `index` of the experiment part named by `tag`.
pub fn trial_rng(seed: u64, tag: u64, index: u64) -> ChaCha8Rng {
    let key = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15).rotate_left(17);
    let mut rng = ChaCha8Rng::seed_from_u64(key);
    rng.set_stream(index);
    rng
}

/// Runs `f` for every index in `0..n` on `workers` threads, returning the
/// results in index order.
pub fn run_trials<T, F>(workers: usize, n: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    use rayon::prelude::*;
    if workers == 1 {
        return (0..n).map(f).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::invalid("workers", e.to_string()))?;
    pool.install(|| (0..n).into_par_iter().map(f).collect())
}
