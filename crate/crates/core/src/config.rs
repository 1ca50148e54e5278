//! Experiment configuration files and the shipped presets.

use serde::{Deserialize, Serialize};

use crate::covest::{Estimator, EstimatorKind, MlBounds};
use crate::error::{Error, Result};
use crate::harness::{DetectorSpec, SweepConfig, DEFAULT_NU_GRID};
use crate::onering::{ChangePoint, LinkBudget, OneRingParams, Scenario, DEFAULT_QUADRATURE_NODES};

pub const PRESETS: [(&str, &str); 6] = [
    ("fig4_theorem1", include_str!("../presets/fig4_theorem1.toml")),
    ("fig5_general_mimo", include_str!("../presets/fig5_general_mimo.toml")),
    ("fig6_wlglr", include_str!("../presets/fig6_wlglr.toml")),
    ("fig7_massive_offline", include_str!("../presets/fig7_massive_offline.toml")),
    ("table1_cpu", include_str!("../presets/table1_cpu.toml")),
    ("table2_online_offline", include_str!("../presets/table2_online_offline.toml")),
];

pub fn preset_text(name: &str) -> Result<&'static str> {
    PRESETS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, t)| *t)
        .ok_or_else(|| Error::UnknownPreset(name.to_string()))
}

pub fn preset(name: &str) -> Result<ExperimentConfig> {
    parse_config(preset_text(name)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    /// FAR/CADD trade-off curve per detector and angle shift.
    Sweep,
    /// Known-covariance CUSUM delay ratio against its asymptote.
    Theorem1,
    /// Per-interval wall time, plus a sweep for detectors with thresholds.
    Timing,
    /// Closed-form and Monte Carlo divergence per angle shift.
    Divergence,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub task: Task,
    pub seed: u64,
    /// File name stem for every artifact of the run.
    pub output: String,
    pub scenario: ScenarioConfig,
    #[serde(rename = "detector", default, skip_serializing_if = "Vec::is_empty")]
    pub detectors: Vec<DetectorConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub harness: Option<HarnessConfig>,
}

fn default_change_point() -> usize {
    1
}

fn default_horizon() -> usize {
    200
}

fn default_nodes() -> usize {
    DEFAULT_QUADRATURE_NODES
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub tx_antennas: usize,
    pub rx_antennas: usize,
    pub aod_deg: f64,
    pub spread_deg: f64,
    pub wavelength_m: f64,
    #[serde(default = "default_nodes")]
    pub quadrature_nodes: usize,
    /// One experiment per listed shift.
    pub delta_aod_deg: Vec<f64>,
    /// Used by `--trace` runs; sweeps take change points from the harness.
    #[serde(default = "default_change_point")]
    pub change_point: usize,
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    pub link: LinkBudget,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DetectorKind {
    Cusum,
    Glr,
    Wlglr,
    Offline,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThetaRange {
    pub start: f64,
    pub stop: f64,
    pub count: usize,
}

impl ThetaRange {
    pub fn values(&self) -> Vec<f64> {
        let step = (self.stop - self.start) / (self.count - 1) as f64;
        (0..self.count).map(|k| self.start + step * k as f64).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorConfig {
    pub kind: DetectorKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thetas: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta_range: Option<ThetaRange>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub xi: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub xi_bar: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta_l: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta_u: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interval_len: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub estimator: Option<EstimatorKind>,
}

fn default_nu_grid() -> Vec<usize> {
    DEFAULT_NU_GRID.to_vec()
}

fn default_kl_samples() -> usize {
    100_000
}

fn default_timing_trials() -> usize {
    50
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HarnessConfig {
    pub trials_far: usize,
    pub trials_delay: usize,
    pub max_run_length: usize,
    #[serde(default = "default_nu_grid")]
    pub nu_grid: Vec<usize>,
    #[serde(default = "default_kl_samples")]
    pub kl_samples: usize,
    #[serde(default = "default_timing_trials")]
    pub timing_trials: usize,
    #[serde(default = "default_horizon")]
    pub timing_horizon: usize,
}

fn value_error(key: impl Into<String>, message: impl Into<String>) -> Error {
    Error::ConfigValue {
        key: key.into(),
        message: message.into(),
    }
}

/// Rewrites a parameter error from a module validator under `prefix`.
fn under(prefix: &str, e: Error) -> Error {
    match e {
        Error::InvalidParameter { name, reason } => value_error(format!("{prefix}.{name}"), reason),
        other => other,
    }
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let col = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, col)
}

fn parse_error(text: &str, e: toml::de::Error) -> Error {
    let (line, column) = e.span().map_or((1, 1), |s| line_col(text, s.start));
    Error::ConfigParse {
        line,
        column,
        message: e.message().trim().to_string(),
    }
}

/// Parses and fully validates a configuration.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let table: toml::Table = toml::from_str(text).map_err(|e| parse_error(text, e))?;
    for section in ["scenario"] {
        if !table.contains_key(section) {
            return Err(value_error(section, format!("missing {section} section")));
        }
    }
    let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| parse_error(text, e))?;
    cfg.validate()?;
    Ok(cfg)
}

impl ExperimentConfig {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.output.is_empty() || self.output.contains(['/', '\\']) {
            return Err(value_error("output", "must be a non-empty file stem without separators"));
        }
        self.scenario.validate()?;
        for (i, d) in self.detectors.iter().enumerate() {
            d.validate(&format!("detector[{i}]"), self.task)?;
        }
        match self.task {
            Task::Sweep | Task::Theorem1 => {
                if self.detectors.is_empty() {
                    return Err(value_error("detector", "missing detector section"));
                }
            }
            Task::Timing => {
                if self.detectors.is_empty() {
                    return Err(value_error("detector", "missing detector section"));
                }
            }
            Task::Divergence => {}
        }
        if self.task == Task::Theorem1 {
            if let Some((i, _)) = self
                .detectors
                .iter()
                .enumerate()
                .find(|(_, d)| d.kind != DetectorKind::Cusum)
            {
                return Err(value_error(
                    format!("detector[{i}].kind"),
                    "theorem1 needs the known-covariance cusum detector",
                ));
            }
        }
        let needs_harness = matches!(self.task, Task::Sweep | Task::Theorem1)
            || self.detectors.iter().any(|d| d.has_thresholds());
        match &self.harness {
            Some(h) => h.validate()?,
            None if needs_harness => return Err(value_error("harness", "missing harness section")),
            None => {}
        }
        Ok(())
    }

    pub fn scenario_for(&self, delta_aod_deg: f64) -> Scenario {
        self.scenario.build(delta_aod_deg, self.seed)
    }

    pub fn harness_or_default(&self) -> HarnessConfig {
        self.harness.clone().unwrap_or(HarnessConfig {
            trials_far: 100,
            trials_delay: 100,
            max_run_length: 1000,
            nu_grid: default_nu_grid(),
            kl_samples: default_kl_samples(),
            timing_trials: default_timing_trials(),
            timing_horizon: default_horizon(),
        })
    }

    /// Harness settings for one detector's thresholds.
    pub fn sweep_config(&self, detector: &DetectorConfig, workers: usize) -> SweepConfig {
        let h = self.harness_or_default();
        SweepConfig {
            thetas: detector.theta_values(),
            trials_far: h.trials_far,
            trials_delay: h.trials_delay,
            max_run_length: h.max_run_length,
            nu_grid: h.nu_grid,
            seed: self.seed,
            workers,
        }
    }
}

impl ScenarioConfig {
    pub fn params(&self) -> OneRingParams {
        OneRingParams {
            tx_antennas: self.tx_antennas,
            rx_antennas: self.rx_antennas,
            aod_deg: self.aod_deg,
            spread_deg: self.spread_deg,
            wavelength_m: self.wavelength_m,
            quadrature_nodes: self.quadrature_nodes,
        }
    }

    pub fn build(&self, delta_aod_deg: f64, seed: u64) -> Scenario {
        Scenario {
            params_pre: self.params(),
            delta_aod_deg,
            link: self.link.clone(),
            change_point: ChangePoint::At(self.change_point),
            horizon: self.horizon,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        self.params().validate().map_err(|e| under("scenario", e))?;
        self.link
            .validate(self.tx_antennas)
            .map_err(|e| under("scenario.link", e))?;
        if self.delta_aod_deg.is_empty() {
            return Err(value_error("scenario.delta_aod_deg", "must list at least one shift"));
        }
        if self.delta_aod_deg.iter().any(|d| !d.is_finite()) {
            return Err(value_error("scenario.delta_aod_deg", "must be finite"));
        }
        if self.change_point < 1 {
            return Err(value_error("scenario.change_point", "is 1-based"));
        }
        if self.horizon < 1 {
            return Err(value_error("scenario.horizon", "must be at least 1"));
        }
        Ok(())
    }
}

impl DetectorConfig {
    pub fn has_thresholds(&self) -> bool {
        self.thetas.is_some() || self.theta_range.is_some()
    }

    pub fn theta_values(&self) -> Vec<f64> {
        match (&self.thetas, &self.theta_range) {
            (Some(t), _) => t.clone(),
            (None, Some(r)) => r.values(),
            (None, None) => Vec::new(),
        }
    }

    fn bounds(&self) -> Option<MlBounds> {
        Some(MlBounds {
            beta_l: self.beta_l?,
            beta_u: self.beta_u?,
        })
    }

    /// Runtime detector described by this block. Call after validation.
    pub fn spec(&self) -> DetectorSpec {
        let bounds = self.bounds();
        match self.kind {
            DetectorKind::Cusum => DetectorSpec::Cusum,
            DetectorKind::Glr => DetectorSpec::Glr {
                bounds: bounds.expect("validated"),
            },
            DetectorKind::Wlglr => DetectorSpec::WlGlr {
                xi: self.xi.expect("validated"),
                xi_bar: self.xi_bar.expect("validated"),
                bounds: bounds.expect("validated"),
            },
            DetectorKind::Offline => DetectorSpec::Offline {
                interval_len: self.interval_len.expect("validated"),
                estimator: match self.estimator.expect("validated") {
                    EstimatorKind::Ml => Estimator::Ml(bounds.expect("validated")),
                    EstimatorKind::Shrinkage => Estimator::Shrinkage,
                },
            },
        }
    }

    fn validate(&self, path: &str, task: Task) -> Result<()> {
        let key = |k: &str| format!("{path}.{k}");
        let needs_bounds = match self.kind {
            DetectorKind::Cusum => false,
            DetectorKind::Glr | DetectorKind::Wlglr => true,
            DetectorKind::Offline => self.estimator == Some(EstimatorKind::Ml),
        };
        let needs_window = self.kind == DetectorKind::Wlglr;
        let is_offline = self.kind == DetectorKind::Offline;
        let fields: [(&str, bool, bool); 6] = [
            ("xi", self.xi.is_some(), needs_window),
            ("xi_bar", self.xi_bar.is_some(), needs_window),
            ("beta_l", self.beta_l.is_some(), needs_bounds),
            ("beta_u", self.beta_u.is_some(), needs_bounds),
            ("interval_len", self.interval_len.is_some(), is_offline),
            ("estimator", self.estimator.is_some(), is_offline),
        ];
        for (name, present, needed) in fields {
            if needed && !present {
                return Err(value_error(key(name), "is required for this detector kind"));
            }
            if present && !needed {
                return Err(value_error(key(name), "is not used by this detector kind"));
            }
        }
        if needs_bounds {
            let (l, u) = (self.beta_l.unwrap_or(0.0), self.beta_u.unwrap_or(0.0));
            if !(l > 0.0) || !l.is_finite() {
                return Err(value_error(key("beta_l"), "must be positive and finite"));
            }
            if !(u > l) || !u.is_finite() {
                return Err(value_error(
                    key("beta_u"),
                    format!("{} = {u} must exceed {} = {l}", key("beta_u"), key("beta_l")),
                ));
            }
        }
        if needs_window && self.xi_bar >= self.xi {
            return Err(value_error(
                key("xi_bar"),
                format!("must be smaller than {}", key("xi")),
            ));
        }
        if is_offline && self.interval_len < Some(2) {
            return Err(value_error(key("interval_len"), "must be at least 2"));
        }
        match (&self.thetas, &self.theta_range) {
            (Some(_), Some(_)) => {
                return Err(value_error(key("thetas"), "give either thetas or theta_range, not both"))
            }
            (Some(t), None) => {
                if t.iter().any(|x| !x.is_finite()) || t.windows(2).any(|w| !(w[0] < w[1])) {
                    return Err(value_error(key("thetas"), "must be finite and strictly increasing"));
                }
            }
            (None, Some(r)) => {
                if r.count < 2 || !(r.stop > r.start) || !r.start.is_finite() || !r.stop.is_finite() {
                    return Err(value_error(
                        key("theta_range"),
                        "needs count >= 2 and finite start < stop",
                    ));
                }
            }
            (None, None) => {
                if matches!(task, Task::Sweep | Task::Theorem1) {
                    return Err(value_error(key("thetas"), "a sweep needs thetas or theta_range"));
                }
            }
        }
        Ok(())
    }
}

impl HarnessConfig {
    fn validate(&self) -> Result<()> {
        let probe = SweepConfig {
            thetas: Vec::new(),
            trials_far: self.trials_far,
            trials_delay: self.trials_delay,
            max_run_length: self.max_run_length,
            nu_grid: self.nu_grid.clone(),
            seed: 0,
            workers: 1,
        };
        probe.validate().map_err(|e| under("harness", e))?;
        if self.kl_samples < 1000 {
            return Err(value_error("harness.kl_samples", "must be at least 1000"));
        }
        if self.timing_trials < 50 {
            return Err(value_error("harness.timing_trials", "must be at least 50"));
        }
        if self.timing_horizon < 1 {
            return Err(value_error("harness.timing_horizon", "must be at least 1"));
        }
        Ok(())
    }
}
