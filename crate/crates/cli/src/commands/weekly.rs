use anyhow::Result;
use clap::ValueEnum;
use serde::Serialize;

use recstats::data::prepare;
use recstats::records::{detect_records, Direction, WeeklyRecordHistogram, WEEKDAY_NAMES};

use crate::args::{DataArgs, RunArgs};
use crate::output::Output;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SeriesChoice {
    /// Records of the log price.
    Price,
    /// Records of the daily log return.
    Returns,
}

#[derive(Debug, clap::Args)]
pub struct Args {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, value_enum, default_value = "price")]
    pub series: SeriesChoice,
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Debug, Serialize)]
struct Summary {
    weekdays: [&'static str; 5],
    histogram: WeeklyRecordHistogram,
    upper_ratios: Option<[f64; 5]>,
    upper_ratio_stderr: Option<[f64; 5]>,
    lower_ratios: Option<[f64; 5]>,
    lower_ratio_stderr: Option<[f64; 5]>,
}

pub fn run(a: Args, invocation: &str) -> Result<()> {
    let loaded = a.data.load()?;
    let prepared = prepare(&loaded.panel, a.data.preprocessing(loaded.panel.days()))?;
    let mut hist = WeeklyRecordHistogram::default();
    for iv in &prepared.intervals {
        let series = match a.series {
            SeriesChoice::Price => iv.paths.clone(),
            SeriesChoice::Returns => iv.return_series(),
        };
        for s in &series {
            hist.add(&detect_records(s)?, &iv.dates)?;
        }
    }
    let mut out = Output::new(a.run.out_dir.clone(), "weekly", invocation, a.run.seed)?;
    out.warnings(&loaded.warnings);
    out.warnings(&prepared.warnings);
    out.csv("weekly.csv", |w| hist.write_csv(w))?;
    let summary = Summary {
        weekdays: WEEKDAY_NAMES,
        upper_ratios: hist.ratios(Direction::Upper),
        upper_ratio_stderr: hist.ratio_stderr(Direction::Upper),
        lower_ratios: hist.ratios(Direction::Lower),
        lower_ratio_stderr: hist.ratio_stderr(Direction::Lower),
        histogram: hist,
    };
    out.json("summary.json", &summary)?;
    out.finish()
}
