use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, ValueEnum};

use recstats::data::{CsvFormat, DetrendMode, LoadedPanel, StockPanel};
use recstats::distributions::{DistributionSpec, Family};
use recstats::processes::ProcessConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProcessChoice {
    Iid,
    #[value(name = "random_walk", alias = "rw")]
    RandomWalk,
    Ar1,
    #[value(name = "garch11", alias = "garch")]
    Garch11,
    #[value(name = "ar_garch")]
    ArGarch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum JumpChoice {
    Gaussian,
    Uniform,
    Laplace,
    Cauchy,
    #[value(name = "students_t", alias = "t")]
    StudentsT,
}

/// Process parameters shared by the simulating commands.
#[derive(Debug, Clone, Args)]
pub struct ProcessArgs {
    #[arg(long, value_enum, default_value = "random_walk")]
    pub process: ProcessChoice,
    /// Jump or innovation distribution.
    #[arg(long, value_enum, default_value = "gaussian")]
    pub jump: JumpChoice,
    /// Jump scale: standard deviation for gaussian, half-width for uniform,
    /// scale parameter otherwise.
    #[arg(long, default_value_t = 1.0)]
    pub sigma: f64,
    /// Student-t tail parameter (default 3).
    #[arg(long)]
    pub nu: Option<f64>,
    /// Rescale the jump distribution to unit variance.
    #[arg(long)]
    pub unit_variance: bool,
    /// Drift per step.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub c: f64,
    /// AR(1) coefficient.
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
    #[arg(long, default_value_t = 1.0)]
    pub alpha0: f64,
    #[arg(long, default_value_t = 0.0)]
    pub alpha1: f64,
    #[arg(long, default_value_t = 0.0)]
    pub beta1: f64,
}

impl ProcessArgs {
    pub fn jump(&self) -> Result<DistributionSpec> {
        let family = match self.jump {
            JumpChoice::Gaussian => Family::Gaussian,
            JumpChoice::Uniform => Family::Uniform,
            JumpChoice::Laplace => Family::Laplace,
            JumpChoice::Cauchy => Family::Cauchy,
            JumpChoice::StudentsT => Family::StudentsT,
        };
        let nu = (family == Family::StudentsT).then(|| self.nu.unwrap_or(3.0));
        let spec = DistributionSpec::new(family, self.sigma, nu)?;
        Ok(if self.unit_variance { spec.unit_variance()? } else { spec })
    }

    pub fn config(&self) -> Result<ProcessConfig> {
        let jump = self.jump()?;
        let cfg = match self.process {
            ProcessChoice::Iid => ProcessConfig::iid(jump).with_drift(self.c),
            ProcessChoice::RandomWalk => ProcessConfig::random_walk(jump, self.c),
            ProcessChoice::Ar1 => ProcessConfig::ar1(jump, self.alpha, self.c),
            ProcessChoice::Garch11 => ProcessConfig::garch11(jump, self.alpha0, self.alpha1, self.beta1).with_drift(self.c),
            ProcessChoice::ArGarch => {
                ProcessConfig::ar_garch(jump, self.c, self.alpha, self.alpha0, self.alpha1, self.beta1)
            }
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatChoice {
    Long,
    Wide,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DetrendChoice {
    None,
    #[value(name = "per_series")]
    PerSeries,
    #[value(name = "index_mean")]
    IndexMean,
}

impl From<DetrendChoice> for DetrendMode {
    fn from(d: DetrendChoice) -> Self {
        match d {
            DetrendChoice::None => DetrendMode::None,
            DetrendChoice::PerSeries => DetrendMode::PerSeries,
            DetrendChoice::IndexMean => DetrendMode::IndexMean,
        }
    }
}

/// Price-panel input and preprocessing.
#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// CSV file with daily closing prices.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value = "long")]
    pub format: FormatChoice,
    /// Interval length in trading days (default: the whole series).
    #[arg(long)]
    pub interval: Option<usize>,
    #[arg(long, value_enum, default_value = "none")]
    pub detrend: DetrendChoice,
    /// Rescale each interval's log returns to unit standard deviation.
    #[arg(long)]
    pub normalize: bool,
}

impl DataArgs {
    pub fn load(&self) -> Result<LoadedPanel> {
        let format = match self.format {
            FormatChoice::Long => CsvFormat::Long,
            FormatChoice::Wide => CsvFormat::Wide,
        };
        let loaded = StockPanel::load_csv(&self.input, format)
            .with_context(|| format!("loading {}", self.input.display()))?;
        for w in &loaded.warnings {
            log::warn!("{w}");
        }
        Ok(loaded)
    }

    pub fn preprocessing(&self, days: usize) -> recstats::data::Preprocessing {
        recstats::data::Preprocessing {
            interval: self.interval.unwrap_or(days),
            detrend: self.detrend.into(),
            normalize: self.normalize,
        }
    }
}

/// Options every command accepts.
#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// Master seed; identical seeds give identical outputs.
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long)]
    pub workers: Option<usize>,
    /// Directory for the CSV/JSON outputs and manifest.json.
    #[arg(long, default_value = "recstats-out")]
    pub out_dir: PathBuf,
}

/// Like [`DataArgs`] but optional: commands that simulate unless `--input` is given.
#[derive(Debug, Clone, Args)]
pub struct OptionalDataArgs {
    /// CSV file with daily closing prices; simulate when absent.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "long", requires = "input")]
    pub format: FormatChoice,
    /// Interval length in trading days (default: the whole series).
    #[arg(long, requires = "input")]
    pub interval: Option<usize>,
    #[arg(long, value_enum, default_value = "none", requires = "input")]
    pub detrend: DetrendChoice,
    /// Rescale each interval's log returns to unit standard deviation.
    #[arg(long, requires = "input")]
    pub normalize: bool,
}

impl OptionalDataArgs {
    pub fn get(&self) -> Option<DataArgs> {
        self.input.clone().map(|input| DataArgs {
            input,
            format: self.format,
            interval: self.interval,
            detrend: self.detrend,
            normalize: self.normalize,
        })
    }
}
