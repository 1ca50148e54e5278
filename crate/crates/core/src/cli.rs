//! Command-line front end: loads a configuration, runs the requested task and
//! writes CSV artifacts plus a run manifest.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use sha2::{Digest, Sha256};

use crate::config::{self, ExperimentConfig, Task};
use crate::detectors::write_trace_csv;
use crate::error::Result;
use crate::harness::{
    self, sweep_tradeoff, time_detectors, trace_run, verify_theorem1, write_theorem1_csv,
    write_timing_csv, write_tradeoff_csv, Experiment,
};
use crate::likelihood::{kl_divergence_mc, ld_divergence};

#[derive(Debug, Parser)]
#[command(name = "covdetect", version, about = "Channel covariance change detection experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Worker threads for Monte Carlo trials (0 = all cores). Results do not depend on it.
    #[arg(long, global = true, default_value_t = 0)]
    pub workers: usize,

    /// Directory for CSV files and the run manifest.
    #[arg(long, global = true, default_value = ".")]
    pub output_dir: PathBuf,

    /// Also write one detector statistic trajectory per experiment.
    #[arg(long, global = true)]
    pub trace: bool,

    /// Replace the seed from the configuration.
    #[arg(long, global = true)]
    pub seed_override: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the task named in the configuration.
    Run { config: String },
    /// Run threshold sweeps for every configured detector.
    Sweep { config: String },
    /// Print the closed-form and Monte Carlo divergence per angle shift.
    Divergence { config: String },
    /// Compare the CUSUM delay ratio with its asymptote.
    VerifyTheorem1 { config: String },
    /// Inspect the shipped presets.
    Presets {
        #[command(subcommand)]
        action: PresetAction,
    },
}

#[derive(Debug, Subcommand)]
pub enum PresetAction {
    List,
    Show { name: String },
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub workers: usize,
    pub output_dir: PathBuf,
    pub trace: bool,
}

#[derive(Debug, Clone, Default)]
pub struct RunReport {
    pub files: Vec<PathBuf>,
    /// Some sweep point had every FAR run censored.
    pub all_censored: bool,
    /// Some divergence pair disagreed by more than four standard errors.
    pub divergence_mismatch: bool,
}

impl RunReport {
    pub fn success(&self) -> bool {
        !self.all_censored && !self.divergence_mismatch
    }
}

/// Accepts a file path or `preset:<name>`.
pub fn load_config(arg: &str) -> Result<ExperimentConfig> {
    match arg.strip_prefix("preset:") {
        Some(name) => config::preset(name),
        None => config::parse_config(&fs::read_to_string(arg)?),
    }
}

/// Writes through a temporary file in the same directory, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = dir.join(format!(".{name}.tmp-{}", std::process::id()));
    fs::write(&tmp, bytes)?;
    if let Err(e) = fs::rename(&tmp, path) {
        let _ = fs::remove_file(&tmp);
        return Err(e.into());
    }
    Ok(())
}

fn delta_tag(d: f64) -> String {
    format!("d{d}")
}

pub fn config_hash(cfg: &ExperimentConfig) -> String {
    let digest = Sha256::digest(cfg.to_toml().as_bytes());
    digest.iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// Unique file label per detector block, suffixed only when names repeat.
fn detector_labels(cfg: &ExperimentConfig) -> Vec<String> {
    let names: Vec<String> = cfg.detectors.iter().map(|d| d.spec().name()).collect();
    names
        .iter()
        .enumerate()
        .map(|(i, n)| {
            if names.iter().filter(|m| *m == n).count() > 1 {
                format!("{n}-{i}")
            } else {
                n.clone()
            }
        })
        .collect()
}

struct Runner<'a> {
    cfg: &'a ExperimentConfig,
    opts: &'a RunOptions,
    report: RunReport,
}

impl Runner<'_> {
    fn emit(&mut self, file: String, bytes: Vec<u8>) -> Result<()> {
        let path = self.opts.output_dir.join(file);
        write_atomic(&path, &bytes)?;
        self.report.files.push(path);
        Ok(())
    }

    fn experiment(&self, delta: f64) -> Result<Experiment> {
        let s = self.cfg.scenario_for(delta);
        let id = format!(
            "mt{}_mr{}_{}",
            s.params_pre.tx_antennas,
            s.params_pre.rx_antennas,
            delta_tag(delta)
        );
        Experiment::from_scenario(&s, id)
    }

    fn sweeps(&mut self, exp: &Experiment, delta: f64, only_with_thresholds: bool) -> Result<()> {
        let labels = detector_labels(self.cfg);
        for (d, label) in self.cfg.detectors.iter().zip(labels) {
            if only_with_thresholds && !d.has_thresholds() {
                continue;
            }
            let spec = d.spec();
            let sweep = self.cfg.sweep_config(d, self.opts.workers);
            let points = sweep_tradeoff(&spec, exp, &sweep)?;
            self.report.all_censored |= points.iter().any(|p| p.all_censored());
            let mut buf = Vec::new();
            write_tradeoff_csv(&mut buf, &points, &spec.name(), &exp.scenario_id)?;
            self.emit(format!("{}_{label}_{}.csv", self.cfg.output, delta_tag(delta)), buf)?;
        }
        Ok(())
    }

    fn traces(&mut self, exp: &Experiment, delta: f64) -> Result<()> {
        let labels = detector_labels(self.cfg);
        let s = &self.cfg.scenario;
        for (d, label) in self.cfg.detectors.iter().zip(labels) {
            let records = trace_run(
                &d.spec(),
                exp,
                crate::onering::ChangePoint::At(s.change_point),
                s.horizon,
                self.cfg.seed,
            )?;
            let mut buf = Vec::new();
            write_trace_csv(&mut buf, &records)?;
            self.emit(
                format!("{}_{label}_{}_trace.csv", self.cfg.output, delta_tag(delta)),
                buf,
            )?;
        }
        Ok(())
    }

    fn divergence(&mut self, exp: &Experiment, delta: f64, table: &mut String) -> Result<()> {
        let h = self.cfg.harness_or_default();
        let phi = ld_divergence(&exp.model.post, &exp.model.pre)?;
        let mut rng = harness::trial_rng(self.cfg.seed, 0x6b6c, delta.to_bits());
        let kl = kl_divergence_mc(&exp.model.post, &exp.model.pre, h.kl_samples, &mut rng)?;
        let z = if kl.stderr > 0.0 { (kl.estimate - phi) / kl.stderr } else { 0.0 };
        println!(
            "delta_aod_deg={delta} phi={phi} gamma={} stderr={} z={z:.3}",
            kl.estimate, kl.stderr
        );
        if z.abs() > 4.0 {
            self.report.divergence_mismatch = true;
        }
        let _ = writeln!(table, "{delta},{phi},{},{},{z}", kl.estimate, kl.stderr);
        Ok(())
    }
}

/// Runs `cfg.task` for every configured angle shift.
pub fn run_experiment(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<RunReport> {
    cfg.validate()?;
    let start = Instant::now();
    let mut run = Runner {
        cfg,
        opts,
        report: RunReport::default(),
    };
    let mut divergence_table = String::from("delta_aod_deg,phi,gamma,gamma_stderr,z\n");
    for &delta in &cfg.scenario.delta_aod_deg {
        let exp = run.experiment(delta)?;
        match cfg.task {
            Task::Sweep => run.sweeps(&exp, delta, false)?,
            Task::Theorem1 => {
                let sweep = cfg.sweep_config(&cfg.detectors[0], opts.workers);
                let rows = verify_theorem1(&exp, &sweep)?;
                run.report.all_censored |= rows.iter().any(|r| r.censored == sweep.trials_far);
                let mut buf = Vec::new();
                write_theorem1_csv(&mut buf, &rows, &exp.scenario_id)?;
                run.emit(format!("{}_theorem1_{}.csv", cfg.output, delta_tag(delta)), buf)?;
            }
            Task::Timing => {
                let h = cfg.harness_or_default();
                let specs: Vec<_> = cfg.detectors.iter().map(|d| d.spec()).collect();
                let rows = time_detectors(&specs, &exp, h.timing_trials, h.timing_horizon, cfg.seed)?;
                let mut buf = Vec::new();
                write_timing_csv(&mut buf, &rows)?;
                run.emit(format!("{}_timing_{}.csv", cfg.output, delta_tag(delta)), buf)?;
                run.sweeps(&exp, delta, true)?;
            }
            Task::Divergence => run.divergence(&exp, delta, &mut divergence_table)?,
        }
        if opts.trace {
            run.traces(&exp, delta)?;
        }
    }
    if cfg.task == Task::Divergence {
        run.emit(format!("{}_divergence.csv", cfg.output), divergence_table.into_bytes())?;
    }
    let manifest = format!(
        "config_sha256 = {}\nseed = {}\nversion = {}\ntask = {:?}\nwall_time_secs = {:.3}\nfiles = {}\n",
        config_hash(cfg),
        cfg.seed,
        env!("CARGO_PKG_VERSION"),
        cfg.task,
        start.elapsed().as_secs_f64(),
        run.report
            .files
            .iter()
            .filter_map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
            .collect::<Vec<_>>()
            .join(", ")
    );
    run.emit(format!("{}.manifest", cfg.output), manifest.into_bytes())?;
    Ok(run.report)
}

fn with_task(mut cfg: ExperimentConfig, task: Task) -> Result<ExperimentConfig> {
    cfg.task = task;
    cfg.validate()?;
    Ok(cfg)
}

/// Executes a parsed command line and returns the process exit code.
pub fn execute(cli: Cli) -> Result<i32> {
    let (arg, task) = match &cli.command {
        Command::Presets { action } => {
            match action {
                PresetAction::List => {
                    for (name, _) in config::PRESETS {
                        println!("{name}");
                    }
                }
                PresetAction::Show { name } => print!("{}", config::preset_text(name)?),
            }
            return Ok(0);
        }
        Command::Run { config } => (config, None),
        Command::Sweep { config } => (config, Some(Task::Sweep)),
        Command::Divergence { config } => (config, Some(Task::Divergence)),
        Command::VerifyTheorem1 { config } => (config, Some(Task::Theorem1)),
    };
    let mut cfg = load_config(arg)?;
    if let Some(seed) = cli.seed_override {
        cfg.seed = seed;
    }
    if let Some(task) = task {
        cfg = with_task(cfg, task)?;
    }
    let opts = RunOptions {
        workers: cli.workers,
        output_dir: cli.output_dir.clone(),
        trace: cli.trace,
    };
    let report = run_experiment(&cfg, &opts)?;
    for f in &report.files {
        eprintln!("wrote {}", f.display());
    }
    if report.all_censored {
        eprintln!("error: some threshold had every false-alarm run censored; raise max_run_length");
    }
    if report.divergence_mismatch {
        eprintln!("error: closed-form and Monte Carlo divergence disagree beyond 4 standard errors");
    }
    Ok(if report.success() { 0 } else { 2 })
}
