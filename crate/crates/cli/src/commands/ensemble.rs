use anyhow::{bail, Result};
use serde::Serialize;

use recstats::analytics::{effective_gamma, ensemble_mean_records, ensemble_rate, EffectiveGamma};
use recstats::data::{prepare, DetrendMode};
use recstats::ensemble::{collapse_report, max_record_stats, EnsembleRunConfig, EnsembleSource, EnsembleStats};

use crate::args::{OptionalDataArgs, ProcessArgs, RunArgs};
use crate::output::Output;

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Ensemble sizes, e.g. 8,64,512.
    #[arg(long, value_delimiter = ',', required = true)]
    pub walkers: Vec<usize>,
    /// Steps (default: 1000 when simulating, interval length - 1 for data).
    #[arg(long)]
    pub n: Option<usize>,
    /// Replicas when simulating, random subsets per ensemble size for data.
    #[arg(long, default_value_t = 10_000)]
    pub replicas: u64,
    /// First step entering the collapse spread.
    #[arg(long, default_value_t = 50)]
    pub collapse_from: usize,
    #[command(flatten)]
    pub process: ProcessArgs,
    #[command(flatten)]
    pub data: OptionalDataArgs,
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Debug, Serialize)]
struct SizeSummary {
    walkers: usize,
    steps: usize,
    draws: u64,
    end_rate: f64,
    end_rate_stderr: f64,
    end_mean_records: f64,
    end_mean_records_stderr: f64,
    asymptotic_rate: Option<f64>,
    asymptotic_mean_records: Option<f64>,
    effective_gamma: Option<EffectiveGamma>,
}

#[derive(Debug, Serialize)]
struct Summary {
    source: &'static str,
    sizes: Vec<SizeSummary>,
    collapse_max_spread: Option<f64>,
    collapse_from: usize,
}

pub fn run(a: Args, invocation: &str) -> Result<()> {
    let walkers: Vec<usize> = a.walkers.clone();
    if walkers.is_empty() {
        bail!("--walkers needs at least one ensemble size");
    }
    let mut out = Output::new(a.run.out_dir.clone(), "ensemble", invocation, a.run.seed)?;
    let (source, n, label) = match &a.data.get() {
        Some(d) => {
            let loaded = d.load()?;
            out.warnings(&loaded.warnings);
            let mut pre = d.preprocessing(loaded.panel.days());
            if pre.detrend != DetrendMode::IndexMean || !pre.normalize {
                out.warn("ensemble data runs use index-mean detrending and unit-variance normalization");
                pre.detrend = DetrendMode::IndexMean;
                pre.normalize = true;
            }
            let prepared = prepare(&loaded.panel, pre)?;
            out.warnings(&prepared.warnings);
            let n = a.n.unwrap_or(prepared.scheme.length - 1);
            let groups = prepared.intervals.into_iter().map(|iv| iv.paths).collect();
            (EnsembleSource::Panel(groups), n, "data")
        }
        None => (EnsembleSource::Simulated(a.process.config()?), a.n.unwrap_or(1000), "simulation"),
    };
    let mut stats: Vec<EnsembleStats> = Vec::new();
    for (k, &w) in walkers.iter().enumerate() {
        let cfg = EnsembleRunConfig {
            walkers: w,
            steps: n,
            source: source.clone(),
            draws: a.replicas,
            // a separate stream family per ensemble size
            seed: a.run.seed.wrapping_add(k as u64),
            workers: a.run.workers,
        };
        let s = max_record_stats(&cfg)?;
        out.csv(&format!("ensemble_N{w}.csv"), |f| s.write_csv(f))?;
        stats.push(s);
    }
    let curves: Vec<(usize, Vec<f64>)> = stats.iter().map(|s| (s.walkers, s.mean_records().to_vec())).collect();
    let distinct = {
        let mut v: Vec<usize> = walkers.iter().copied().filter(|&w| w >= 2).collect();
        v.sort_unstable();
        v.dedup();
        v.len()
    };
    let collapse = if distinct >= 2 {
        let r = collapse_report(&curves, a.collapse_from)?;
        out.warnings(&r.warnings);
        out.csv("collapse.csv", |f| r.write_csv(f))?;
        Some(r.max_spread)
    } else {
        None
    };
    let sizes = stats
        .iter()
        .map(|s| {
            let (rate, rate_se) = s.end_rate();
            let (mean, mean_se) = s.end_mean();
            let (nn, ww) = (s.steps as u64, s.walkers as u64);
            SizeSummary {
                walkers: s.walkers,
                steps: s.steps,
                draws: s.draws,
                end_rate: rate,
                end_rate_stderr: rate_se,
                end_mean_records: mean,
                end_mean_records_stderr: mean_se,
                asymptotic_rate: ensemble_rate(nn, ww).ok(),
                asymptotic_mean_records: ensemble_mean_records(nn, ww).ok(),
                effective_gamma: effective_gamma(rate, nn, ww).ok(),
            }
        })
        .collect();
    out.json(
        "summary.json",
        &Summary {
            source: label,
            sizes,
            collapse_max_spread: collapse,
            collapse_from: a.collapse_from,
        },
    )?;
    out.finish()
}
