use anyhow::{bail, Result};
use serde::Serialize;

use recstats::analytics::fpt_symmetric;
use recstats::data::prepare;
use recstats::firstpassage::{average_intervals, pooled_fpt, survival_curve, FptReport, IntervalFptAverage};
use recstats::montecarlo::{run as run_experiment, Analysis, ExperimentConfig, RunError};

use crate::args::{OptionalDataArgs, ProcessArgs, RunArgs};
use crate::output::Output;

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Passage windows N, e.g. 25,100,400.
    #[arg(long, value_delimiter = ',', required = true)]
    pub windows: Vec<usize>,
    /// Steps per simulated trajectory (default: largest window).
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, default_value_t = 100_000)]
    pub replicas: u64,
    #[command(flatten)]
    pub process: ProcessArgs,
    #[command(flatten)]
    pub data: OptionalDataArgs,
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Debug, Serialize)]
struct WindowSummary {
    window: usize,
    mean_positive: Option<f64>,
    mean_negative: Option<f64>,
    partial_mean_positive: Option<f64>,
    partial_mean_negative: Option<f64>,
    symmetric_walk: f64,
}

pub fn run(a: Args, invocation: &str) -> Result<()> {
    let windows: Vec<usize> = a.windows.clone();
    if windows.is_empty() {
        bail!("--windows needs at least one window");
    }
    let mut out = Output::new(a.run.out_dir.clone(), "fpt", invocation, a.run.seed)?;
    let summary: Vec<WindowSummary> = match &a.data.get() {
        Some(d) => {
            let loaded = d.load()?;
            out.warnings(&loaded.warnings);
            let prepared = prepare(&loaded.panel, d.preprocessing(loaded.panel.days()))?;
            out.warnings(&prepared.warnings);
            let mut averages: Vec<IntervalFptAverage> = Vec::new();
            let mut per_interval: Vec<(usize, FptReport)> = Vec::new();
            for &w in &windows {
                let reports = prepared
                    .intervals
                    .iter()
                    .map(|iv| pooled_fpt(&iv.paths, w))
                    .collect::<Result<Vec<_>, _>>()?;
                per_interval.extend(prepared.intervals.iter().map(|iv| iv.index).zip(reports.iter().copied()));
                averages.push(average_intervals(&reports)?);
            }
            out.csv("fpt_intervals.csv", |f| {
                use std::io::Write;
                writeln!(f, "interval,{}", FptReport::CSV_HEADER)?;
                for (k, r) in &per_interval {
                    writeln!(f, "{k},{}", r.csv_row())?;
                }
                Ok(())
            })?;
            let paths = prepared.all_paths();
            let surv = survival_curve(&paths)?;
            out.csv("survival.csv", |f| surv.write_csv(f))?;
            averages
                .iter()
                .map(|v| WindowSummary {
                    window: v.window,
                    mean_positive: v.mean_positive,
                    mean_negative: v.mean_negative,
                    partial_mean_positive: v.partial_mean_positive,
                    partial_mean_negative: v.partial_mean_negative,
                    symmetric_walk: fpt_symmetric(v.window as u64),
                })
                .collect()
        }
        None => {
            let n = a.n.unwrap_or_else(|| windows.iter().copied().max().unwrap_or(1));
            let mut cfg = ExperimentConfig::new(a.process.config()?, n, a.replicas, a.run.seed);
            cfg.analyses = [Analysis::FirstPassage, Analysis::Survival, Analysis::RecordRates]
                .into_iter()
                .collect();
            cfg.fpt_windows = windows.clone();
            cfg.workers = a.run.workers;
            let report = match run_experiment(&cfg) {
                Ok(r) => r,
                Err(RunError::Partial(p)) => bail!("{p}"),
                Err(e) => return Err(e.into()),
            };
            if let Some(s) = &report.survival {
                out.csv("survival.csv", |f| s.write_csv(f))?;
            }
            if let Some(c) = &report.upper {
                out.csv("rates_upper.csv", |f| c.write_csv(f))?;
            }
            report
                .first_passage
                .iter()
                .map(|r| WindowSummary {
                    window: r.window,
                    mean_positive: r.positive.mean,
                    mean_negative: r.negative.mean,
                    partial_mean_positive: r.positive.partial_mean,
                    partial_mean_negative: r.negative.partial_mean,
                    symmetric_walk: fpt_symmetric(r.window as u64),
                })
                .collect()
        }
    };
    out.csv("fpt.csv", |f| {
        use std::io::Write;
        writeln!(
            f,
            "window,mean_pos,mean_neg,partial_mean_pos,partial_mean_neg,symmetric_walk"
        )?;
        let o = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for s in &summary {
            writeln!(
                f,
                "{},{},{},{},{},{}",
                s.window,
                o(s.mean_positive),
                o(s.mean_negative),
                o(s.partial_mean_positive),
                o(s.partial_mean_negative),
                s.symmetric_walk
            )?;
        }
        Ok(())
    })?;
    out.json("summary.json", &summary)?;
    out.finish()
}
