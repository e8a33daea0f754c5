use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::ValueEnum;

use recstats::montecarlo::{run as run_experiment, substream, Analysis, ExperimentConfig, RunError};
use recstats::records::RecordNumberHistogram;

use crate::args::{ProcessArgs, RunArgs};
use crate::output::Output;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AnalysisChoice {
    Rates,
    #[value(name = "record_numbers")]
    RecordNumbers,
    Conditional,
    Survival,
    Fpt,
}

impl From<AnalysisChoice> for Analysis {
    fn from(a: AnalysisChoice) -> Self {
        match a {
            AnalysisChoice::Rates => Analysis::RecordRates,
            AnalysisChoice::RecordNumbers => Analysis::RecordNumbers,
            AnalysisChoice::Conditional => Analysis::Conditional,
            AnalysisChoice::Survival => Analysis::Survival,
            AnalysisChoice::Fpt => Analysis::FirstPassage,
        }
    }
}

#[derive(Debug, clap::Args)]
pub struct Args {
    #[command(flatten)]
    pub process: ProcessArgs,
    /// Steps per trajectory.
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    #[arg(long, default_value_t = 10_000)]
    pub replicas: u64,
    /// Analyses to run (comma separated).
    #[arg(long, value_enum, value_delimiter = ',', default_values = ["rates", "record_numbers", "conditional"])]
    pub analyses: Vec<AnalysisChoice>,
    /// First-passage windows, e.g. 25,100,400 (implies the fpt analysis).
    #[arg(long, value_delimiter = ',')]
    pub fpt_windows: Option<Vec<usize>>,
    /// Look-ahead of the conditional record probability.
    #[arg(long, default_value_t = 1)]
    pub lag: usize,
    /// Stop after this many seconds and report the replicas finished so far.
    #[arg(long)]
    pub time_budget: Option<f64>,
    /// Experiment configuration as JSON; replaces the process and run flags.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Also write the trajectory of replica 0.
    #[arg(long)]
    pub sample_path: bool,
    #[command(flatten)]
    pub run: RunArgs,
}

fn histogram_csv(h: &RecordNumberHistogram) -> impl FnOnce(&mut std::io::BufWriter<std::fs::File>) -> std::io::Result<()> + '_ {
    move |w| h.write_csv(w)
}

pub fn run(a: Args, invocation: &str) -> Result<()> {
    let mut config = match &a.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            serde_json::from_str::<ExperimentConfig>(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        None => {
            let mut c = ExperimentConfig::new(a.process.config()?, a.n, a.replicas, a.run.seed);
            c.analyses = a.analyses.iter().map(|&x| x.into()).collect();
            if let Some(w) = &a.fpt_windows {
                c.fpt_windows = w.clone();
                c.analyses.insert(Analysis::FirstPassage);
            }
            c.lag = a.lag;
            c.time_budget_secs = a.time_budget;
            c
        }
    };
    if a.run.workers.is_some() {
        config.workers = a.run.workers;
    }
    if config.analyses.contains(&Analysis::FirstPassage) && config.fpt_windows.is_empty() {
        bail!("the fpt analysis needs --fpt-windows");
    }
    let report = match run_experiment(&config) {
        Ok(r) => r,
        Err(RunError::Partial(p)) => bail!("{p}; rerun with fewer replicas or a larger --time-budget"),
        Err(e) => return Err(e.into()),
    };
    let mut out = Output::new(a.run.out_dir.clone(), "simulate", invocation, config.master_seed)?;
    let mut stored = config.clone();
    stored.workers = None;
    out.json("config.json", &stored)?;
    out.json("report.json", &report)?;
    if let Some(c) = &report.upper {
        out.csv("rates_upper.csv", |w| c.write_csv(w))?;
    }
    if let Some(c) = &report.lower {
        out.csv("rates_lower.csv", |w| c.write_csv(w))?;
    }
    if let Some(h) = &report.upper_record_numbers {
        out.csv("record_numbers_upper.csv", histogram_csv(h))?;
    }
    if let Some(h) = &report.lower_record_numbers {
        out.csv("record_numbers_lower.csv", histogram_csv(h))?;
    }
    if let Some(s) = &report.survival {
        out.csv("survival.csv", |w| s.write_csv(w))?;
    }
    if !report.first_passage.is_empty() {
        out.csv("fpt.csv", |w| recstats::firstpassage::FptReport::write_csv(&report.first_passage, w))?;
    }
    if a.sample_path {
        let mut rng = substream(config.master_seed, 0);
        let t = config.process.generate(config.n, &mut rng)?;
        out.csv("sample_path.csv", |w| t.write_csv(w))?;
    }
    out.finish()
}
