use std::collections::BTreeMap;
use std::io::Write;

use anyhow::{bail, Result};
use serde::Serialize;

use recstats::analytics::{
    biased_mean_records_small_drift, biased_rate_small_drift, iid_mean_records, iid_rate, small_drift_is_valid,
};
use chrono::NaiveDate;
use recstats::data::{estimate_drift, prepare, PreparedPanel};
use recstats::records::{
    normalized_return_rate, top_record_days, Direction, Proportion, RecordAccumulator, RecordDay, RecordRateCurve,
};

use crate::args::{DataArgs, RunArgs};
use crate::output::Output;

#[derive(Debug, clap::Args)]
pub struct Args {
    #[command(flatten)]
    pub data: DataArgs,
    /// Bin length of the normalized record rate n p_n (default: min(250, interval)).
    #[arg(long)]
    pub bin: Option<usize>,
    /// Number of top record days to list.
    #[arg(long, default_value_t = 10)]
    pub top: usize,
    /// Look-ahead of the conditional record probability.
    #[arg(long, default_value_t = 1)]
    pub lag: usize,
    #[command(flatten)]
    pub run: RunArgs,
}

/// Model curve evaluated at step `n`: (upper rate, lower rate, upper mean, lower mean).
type Model<'a> = &'a dyn Fn(u64) -> Option<[f64; 4]>;

fn write_records<W: Write>(w: &mut W, up: &RecordRateCurve, lo: &RecordRateCurve, model: Model) -> std::io::Result<()> {
    writeln!(
        w,
        "n,upper_rate,upper_rate_stderr,lower_rate,lower_rate_stderr,upper_mean,upper_mean_stderr,\
         lower_mean,lower_mean_stderr,model_upper_rate,model_lower_rate,model_upper_mean,model_lower_mean"
    )?;
    for n in 0..up.rate.len() {
        let m = model(n as u64)
            .map(|v| v.map(|x| x.to_string()).join(","))
            .unwrap_or_else(|| ",,,".to_string());
        writeln!(
            w,
            "{n},{},{},{},{},{},{},{},{},{m}",
            up.rate[n],
            up.stderr[n],
            lo.rate[n],
            lo.stderr[n],
            up.mean_records[n],
            up.mean_records_stderr[n],
            lo.mean_records[n],
            lo.mean_records_stderr[n]
        )?;
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct Conditional {
    lag: usize,
    upper_after_upper: Option<Proportion>,
    lower_after_lower: Option<Proportion>,
    lower_after_upper: Option<Proportion>,
    upper_after_lower: Option<Proportion>,
}

impl Conditional {
    fn from(acc: &RecordAccumulator, lag: usize) -> Self {
        use Direction::{Lower, Upper};
        Self {
            lag,
            upper_after_upper: acc.conditional(Upper, Upper),
            lower_after_lower: acc.conditional(Lower, Lower),
            lower_after_upper: acc.conditional(Upper, Lower),
            upper_after_lower: acc.conditional(Lower, Upper),
        }
    }
}

#[derive(Debug, Serialize)]
struct ChannelSummary {
    series: u64,
    steps: usize,
    upper_mean_records: f64,
    upper_mean_records_stderr: f64,
    lower_mean_records: f64,
    lower_mean_records_stderr: f64,
    model_upper_mean_records: Option<f64>,
    model_lower_mean_records: Option<f64>,
    conditional: Conditional,
}

#[derive(Debug, Serialize)]
struct DriftSummary {
    /// Averages over (ticker, interval) before detrending and normalization.
    raw_c: f64,
    raw_sigma: f64,
    raw_c_over_sigma: f64,
    /// Averages over the processed paths that the record analysis sees.
    c: f64,
    sigma: f64,
    small_drift_valid: bool,
}

#[derive(Debug, Serialize)]
struct Summary {
    tickers: usize,
    days: usize,
    interval: usize,
    intervals: usize,
    detrend: recstats::data::DetrendMode,
    normalize: bool,
    drift: DriftSummary,
    price: ChannelSummary,
    returns: ChannelSummary,
    warnings: Vec<String>,
}

fn accumulate<'a>(paths: impl Iterator<Item = &'a [f64]>, len: usize, lag: usize) -> Result<RecordAccumulator> {
    let mut acc = RecordAccumulator::new(len, lag);
    for p in paths {
        acc.try_observe(p)?;
    }
    Ok(acc)
}

fn summarize(acc: &RecordAccumulator, lag: usize, model_end: Option<[f64; 4]>) -> ChannelSummary {
    let up = acc.curve(Direction::Upper);
    let lo = acc.curve(Direction::Lower);
    let n = up.mean_records.len() - 1;
    ChannelSummary {
        series: acc.replicas(),
        steps: n,
        upper_mean_records: up.mean_records[n],
        upper_mean_records_stderr: up.mean_records_stderr[n],
        lower_mean_records: lo.mean_records[n],
        lower_mean_records_stderr: lo.mean_records_stderr[n],
        model_upper_mean_records: model_end.map(|m| m[2]),
        model_lower_mean_records: model_end.map(|m| m[3]),
        conditional: Conditional::from(acc, lag),
    }
}

/// Days with the most records summed over intervals, top `k`, chronological.
fn top_days(prepared: &PreparedPanel, direction: Direction, k: usize) -> Result<Vec<RecordDay>> {
    let mut per_day: BTreeMap<NaiveDate, (usize, usize)> = BTreeMap::new();
    for iv in &prepared.intervals {
        for d in top_record_days(&iv.return_series(), &iv.dates, direction, usize::MAX)? {
            let e = per_day.entry(d.date).or_insert((iv.start + d.index, 0));
            e.1 += d.count;
        }
    }
    let mut days: Vec<RecordDay> = per_day
        .into_iter()
        .map(|(date, (index, count))| RecordDay { date, index, count })
        .collect();
    days.sort_by(|a, b| b.count.cmp(&a.count).then(a.date.cmp(&b.date)));
    days.truncate(k);
    days.sort_by_key(|d| d.date);
    Ok(days)
}

fn write_days<W: Write>(w: &mut W, days: &[RecordDay]) -> std::io::Result<()> {
    writeln!(w, "date,index,count")?;
    for d in days {
        writeln!(w, "{},{},{}", d.date, d.index, d.count)?;
    }
    Ok(())
}

pub fn run(a: Args, invocation: &str) -> Result<()> {
    if a.lag == 0 {
        bail!("--lag must be positive");
    }
    let loaded = a.data.load()?;
    let panel = &loaded.panel;
    let pre = a.data.preprocessing(panel.days());
    let prepared = prepare(panel, pre)?;
    let len = prepared.scheme.length;
    let paths: Vec<&[f64]> = prepared.all_paths();
    if paths.is_empty() {
        bail!("no series left after preprocessing");
    }
    let returns: Vec<Vec<f64>> = prepared.intervals.iter().flat_map(|iv| iv.return_series()).collect();

    let (raw_c, raw_sigma, raw_ratio) = prepared.average_fit();
    let fits = paths.iter().map(|p| estimate_drift(p)).collect::<Result<Vec<_>, _>>();
    let (c, sigma) = match fits {
        Ok(f) => {
            let k = f.len() as f64;
            (f.iter().map(|e| e.c).sum::<f64>() / k, f.iter().map(|e| e.sigma).sum::<f64>() / k)
        }
        Err(_) => (0.0, 0.0),
    };
    let steps = (len - 1) as u64;
    let price_model = |n: u64| -> Option<[f64; 4]> {
        if n == 0 {
            return Some([1.0, 1.0, 1.0, 1.0]);
        }
        Some([
            biased_rate_small_drift(n, c, sigma, Direction::Upper).ok()?,
            biased_rate_small_drift(n, c, sigma, Direction::Lower).ok()?,
            biased_mean_records_small_drift(n, c, sigma, Direction::Upper).ok()?,
            biased_mean_records_small_drift(n, c, sigma, Direction::Lower).ok()?,
        ])
    };
    let iid_model = |n: u64| -> Option<[f64; 4]> {
        let (r, m) = (iid_rate(n), iid_mean_records(n));
        Some([r, r, m, m])
    };

    let price = accumulate(paths.iter().copied(), len, a.lag)?;
    let ret = accumulate(returns.iter().map(Vec::as_slice), len, a.lag)?;

    let mut out = Output::new(a.run.out_dir.clone(), "analyze", invocation, a.run.seed)?;
    out.warnings(&loaded.warnings);
    out.warnings(&prepared.warnings);
    if sigma > 0.0 && !small_drift_is_valid(steps, c, sigma) {
        out.warn(format!(
            "c/sigma = {:.4} with n = {steps} is outside the small-drift regime",
            c / sigma
        ));
    }

    let (pu, pl) = (price.curve(Direction::Upper), price.curve(Direction::Lower));
    out.csv("price_records.csv", |w| write_records(w, &pu, &pl, &price_model))?;
    let (ru, rl) = (ret.curve(Direction::Upper), ret.curve(Direction::Lower));
    out.csv("return_records.csv", |w| write_records(w, &ru, &rl, &iid_model))?;
    for (channel, acc) in [("price", &price), ("return", &ret)] {
        for d in Direction::BOTH {
            let h = acc.record_numbers(d);
            out.csv(&format!("record_numbers_{channel}_{}.csv", d.as_str()), |w| h.write_csv(w))?;
        }
    }
    let bin = a.bin.unwrap_or(len.min(250));
    for d in Direction::BOTH {
        let report = normalized_return_rate(&returns, bin, d)?;
        out.csv(&format!("np_n_{}.csv", d.as_str()), |w| report.write_csv(w))?;
        let days = top_days(&prepared, d, a.top)?;
        out.csv(&format!("top_days_{}.csv", d.as_str()), |w| write_days(w, &days))?;
    }

    let mut warnings = loaded.warnings.clone();
    warnings.extend(prepared.warnings.iter().cloned());
    let summary = Summary {
        tickers: panel.width(),
        days: panel.days(),
        interval: len,
        intervals: prepared.scheme.count,
        detrend: pre.detrend,
        normalize: pre.normalize,
        drift: DriftSummary {
            raw_c,
            raw_sigma,
            raw_c_over_sigma: raw_ratio,
            c,
            sigma,
            small_drift_valid: sigma > 0.0 && small_drift_is_valid(steps, c, sigma),
        },
        price: summarize(&price, a.lag, price_model(steps)),
        returns: summarize(&ret, a.lag, iid_model(steps)),
        warnings,
    };
    out.json("summary.json", &summary)?;
    out.finish()
}
