use std::io::Write;

use anyhow::{bail, Result};
use clap::ValueEnum;
use serde::Serialize;

use recstats::data::prepare;
use recstats::estimation::{fit, FitOptions, FitResult, InnovationMode, DEFAULT_NU};

use crate::args::{DataArgs, RunArgs};
use crate::output::Output;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InnovationChoice {
    /// Unit-variance Student-t with fixed --nu.
    T,
    /// Unit-variance Student-t with nu estimated.
    #[value(name = "free_t")]
    FreeT,
    Gaussian,
}

#[derive(Debug, clap::Args)]
pub struct Args {
    #[command(flatten)]
    pub data: DataArgs,
    /// Fit only this ticker (default: every ticker).
    #[arg(long)]
    pub ticker: Option<String>,
    #[arg(long, value_enum, default_value = "t")]
    pub innovation: InnovationChoice,
    #[arg(long, default_value_t = DEFAULT_NU)]
    pub nu: f64,
    /// Hold the AR coefficient fixed.
    #[arg(long)]
    pub fixed_alpha: Option<f64>,
    /// Constant volatility (alpha1 = beta1 = 0).
    #[arg(long)]
    pub no_garch: bool,
    #[arg(long, default_value_t = 100_000)]
    pub max_evaluations: usize,
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Debug, Serialize)]
struct Entry<'a> {
    ticker: &'a str,
    interval: usize,
    start_date: String,
    #[serde(flatten)]
    result: &'a FitResult,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn run(a: Args, invocation: &str) -> Result<()> {
    let loaded = a.data.load()?;
    let mut panel = loaded.panel;
    if let Some(t) = &a.ticker {
        let Some(i) = panel.ticker_index(t) else {
            bail!("ticker `{t}` not in {}", a.data.input.display());
        };
        panel = panel.select(&[i]);
    }
    let options = FitOptions {
        innovation: match a.innovation {
            InnovationChoice::T => InnovationMode::FixedT { nu: a.nu },
            InnovationChoice::FreeT => InnovationMode::FreeT,
            InnovationChoice::Gaussian => InnovationMode::Gaussian,
        },
        fixed_alpha: a.fixed_alpha,
        garch: !a.no_garch,
        max_evaluations: a.max_evaluations,
        ..FitOptions::default()
    };
    let prepared = prepare(&panel, a.data.preprocessing(panel.days()))?;
    let mut results = Vec::new();
    for iv in &prepared.intervals {
        for (path, &t) in iv.paths.iter().zip(&iv.tickers) {
            results.push((panel.tickers()[t].clone(), iv.index, iv.dates[0], fit(path, None, &options)?));
        }
    }
    let mut out = Output::new(a.run.out_dir.clone(), "fit", invocation, a.run.seed)?;
    out.warnings(&loaded.warnings);
    out.warnings(&prepared.warnings);
    let entries: Vec<Entry> = results
        .iter()
        .map(|(t, k, d, r)| Entry {
            ticker: t,
            interval: *k,
            start_date: d.to_string(),
            result: r,
        })
        .collect();
    for e in &entries {
        if !e.result.converged {
            out.warn(format!("{} interval {}: evaluation limit reached", e.ticker, e.interval));
        }
    }
    out.json("fits.json", &entries)?;
    out.csv("fits.csv", |w| {
        writeln!(
            w,
            "ticker,interval,c,alpha,alpha0,alpha1,beta1,nu,se_c,se_alpha,se_alpha0,se_alpha1,se_beta1,se_nu,loglik,converged"
        )?;
        for e in &entries {
            let p = &e.result.params;
            let se = e.result.standard_errors;
            let s = |f: fn(&recstats::estimation::StandardErrors) -> Option<f64>| fmt_opt(se.as_ref().and_then(f));
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                e.ticker,
                e.interval,
                p.c,
                p.alpha,
                p.alpha0,
                p.alpha1,
                p.beta1,
                fmt_opt(p.nu),
                s(|x| x.c),
                s(|x| x.alpha),
                s(|x| x.alpha0),
                s(|x| x.alpha1),
                s(|x| x.beta1),
                s(|x| x.nu),
                e.result.loglik,
                e.result.converged
            )?;
        }
        Ok(())
    })?;
    out.finish()
}
