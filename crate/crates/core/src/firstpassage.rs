//! Windowed first-passage times and survival probabilities.
//!
//! From every start index `t`, the positive (negative) first-passage time is
//! the first `j` in `1..=N` with `values[t + j]` strictly above (below)
//! `values[t]`. Starts closer than `N` to the end of the series are skipped,
//! so every start has the same window.

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::montecarlo::Accumulator;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FptError {
    #[error("window must be at least 1")]
    ZeroWindow,
    #[error("window {window} needs more than {len} entries")]
    WindowTooLong { window: usize, len: usize },
    #[error("no trajectories supplied")]
    NoTrajectories,
    #[error("trajectory {index} has {found} entries, expected {expected}")]
    Ragged {
        index: usize,
        expected: usize,
        found: usize,
    },
    #[error("reports for different windows cannot be combined")]
    MixedWindows,
}

/// Passage statistics in one direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FptSide {
    /// Mean over starts whose crossing happened within the window.
    pub mean: Option<f64>,
    /// Sum of uncensored passage times divided by all starts, i.e.
    /// `E[T; T <= N]`.
    pub partial_mean: Option<f64>,
    pub events: u64,
    pub censored: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FptReport {
    pub window: usize,
    pub starts: u64,
    pub positive: FptSide,
    pub negative: FptSide,
}

impl FptReport {
    pub const CSV_HEADER: &'static str =
        "window,mean_pos,mean_neg,censored_pos,censored_neg,partial_mean_pos,partial_mean_neg,starts";

    pub fn csv_row(&self) -> String {
        let f = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{}",
            self.window,
            f(self.positive.mean),
            f(self.negative.mean),
            self.positive.censored,
            self.negative.censored,
            f(self.positive.partial_mean),
            f(self.negative.partial_mean),
            self.starts
        )
    }

    pub fn write_csv<W: Write>(reports: &[FptReport], mut out: W) -> std::io::Result<()> {
        writeln!(out, "{}", Self::CSV_HEADER)?;
        for r in reports {
            writeln!(out, "{}", r.csv_row())?;
        }
        Ok(())
    }
}

/// Exact integer sums behind an [`FptReport`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FptAccumulator {
    window: usize,
    starts: u64,
    sum: [u64; 2],
    events: [u64; 2],
    stack: Vec<usize>,
}

impl FptAccumulator {
    pub fn new(window: usize) -> Result<Self, FptError> {
        if window == 0 {
            return Err(FptError::ZeroWindow);
        }
        Ok(Self {
            window,
            starts: 0,
            sum: [0; 2],
            events: [0; 2],
            stack: Vec::new(),
        })
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn try_observe(&mut self, values: &[f64]) -> Result<(), FptError> {
        if values.len() <= self.window {
            return Err(FptError::WindowTooLong {
                window: self.window,
                len: values.len(),
            });
        }
        self.observe_unchecked(values);
        Ok(())
    }

    fn observe_unchecked(&mut self, values: &[f64]) {
        let last_start = values.len() - 1 - self.window;
        self.starts += last_start as u64 + 1;
        self.scan(values, last_start, 0, |a, b| a > b);
        self.scan(values, last_start, 1, |a, b| a < b);
    }

    /// Next-crossing search with a monotone stack: each index is pushed and
    /// popped once, and popping `t` at `j` means `j` is the first crossing.
    fn scan(&mut self, values: &[f64], last_start: usize, side: usize, crosses: fn(f64, f64) -> bool) {
        self.stack.clear();
        for (j, &x) in values.iter().enumerate() {
            while let Some(&t) = self.stack.last() {
                if !crosses(x, values[t]) {
                    break;
                }
                self.stack.pop();
                let wait = j - t;
                if t <= last_start && wait <= self.window {
                    self.sum[side] += wait as u64;
                    self.events[side] += 1;
                }
            }
            self.stack.push(j);
        }
    }

    pub fn report(&self) -> FptReport {
        let side = |s: usize| {
            let events = self.events[s];
            FptSide {
                mean: (events > 0).then(|| self.sum[s] as f64 / events as f64),
                partial_mean: (self.starts > 0).then(|| self.sum[s] as f64 / self.starts as f64),
                events,
                censored: self.starts - events,
            }
        };
        FptReport {
            window: self.window,
            starts: self.starts,
            positive: side(0),
            negative: side(1),
        }
    }
}

impl Accumulator for FptAccumulator {
    fn observe(&mut self, values: &[f64]) {
        if values.len() > self.window {
            self.observe_unchecked(values);
        }
    }

    fn merge(&mut self, other: Self) {
        assert_eq!(self.window, other.window, "merging different fpt windows");
        self.starts += other.starts;
        for s in 0..2 {
            self.sum[s] += other.sum[s];
            self.events[s] += other.events[s];
        }
    }
}

pub fn windowed_fpt(values: &[f64], window: usize) -> Result<FptReport, FptError> {
    let mut acc = FptAccumulator::new(window)?;
    acc.try_observe(values)?;
    Ok(acc.report())
}

/// Pools several series (e.g. all stocks in one interval), weighting each
/// passage event equally.
pub fn pooled_fpt<T: AsRef<[f64]>>(series: &[T], window: usize) -> Result<FptReport, FptError> {
    if series.is_empty() {
        return Err(FptError::NoTrajectories);
    }
    let mut acc = FptAccumulator::new(window)?;
    for s in series {
        acc.try_observe(s.as_ref())?;
    }
    Ok(acc.report())
}

/// Interval average: each interval's pooled report counts equally.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntervalFptAverage {
    pub window: usize,
    pub intervals: usize,
    pub mean_positive: Option<f64>,
    pub mean_negative: Option<f64>,
    pub partial_mean_positive: Option<f64>,
    pub partial_mean_negative: Option<f64>,
}

pub fn average_intervals(reports: &[FptReport]) -> Result<IntervalFptAverage, FptError> {
    let first = reports.first().ok_or(FptError::NoTrajectories)?;
    if reports.iter().any(|r| r.window != first.window) {
        return Err(FptError::MixedWindows);
    }
    let avg = |get: &dyn Fn(&FptReport) -> Option<f64>| {
        let vals: Vec<f64> = reports.iter().filter_map(get).collect();
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    };
    Ok(IntervalFptAverage {
        window: first.window,
        intervals: reports.len(),
        mean_positive: avg(&|r| r.positive.mean),
        mean_negative: avg(&|r| r.negative.mean),
        partial_mean_positive: avg(&|r| r.positive.partial_mean),
        partial_mean_negative: avg(&|r| r.negative.partial_mean),
    })
}

/// Fraction of trajectories with `values[1..=n]` all strictly above
/// `values[0]`, per `n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalCurve {
    pub replicas: u64,
    pub counts: Vec<u64>,
    pub probability: Vec<f64>,
    pub stderr: Vec<f64>,
}

impl SurvivalCurve {
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "n,count,survival,stderr")?;
        for i in 0..self.counts.len() {
            writeln!(out, "{i},{},{},{}", self.counts[i], self.probability[i], self.stderr[i])?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SurvivalAccumulator {
    counts: Vec<u64>,
    replicas: u64,
}

impl SurvivalAccumulator {
    pub fn new(len: usize) -> Self {
        Self {
            counts: vec![0; len],
            replicas: 0,
        }
    }

    pub fn curve(&self) -> SurvivalCurve {
        let m = self.replicas.max(1) as f64;
        let probability: Vec<f64> = self.counts.iter().map(|&c| c as f64 / m).collect();
        let stderr = probability.iter().map(|p| (p * (1.0 - p) / m).sqrt()).collect();
        SurvivalCurve {
            replicas: self.replicas,
            counts: self.counts.clone(),
            probability,
            stderr,
        }
    }
}

impl Accumulator for SurvivalAccumulator {
    fn observe(&mut self, values: &[f64]) {
        let Some(&origin) = values.first() else {
            return;
        };
        self.replicas += 1;
        for (i, &x) in values.iter().enumerate().take(self.counts.len()) {
            if i > 0 && x <= origin {
                break;
            }
            self.counts[i] += 1;
        }
    }

    fn merge(&mut self, other: Self) {
        crate::records::add_into(&mut self.counts, &other.counts);
        self.replicas += other.replicas;
    }
}

pub fn survival_curve<T: AsRef<[f64]>>(trajectories: &[T]) -> Result<SurvivalCurve, FptError> {
    let first = trajectories.first().ok_or(FptError::NoTrajectories)?;
    let len = first.as_ref().len();
    let mut acc = SurvivalAccumulator::new(len);
    for (index, t) in trajectories.iter().enumerate() {
        let t = t.as_ref();
        if t.len() != len {
            return Err(FptError::Ragged {
                index,
                expected: len,
                found: t.len(),
            });
        }
        acc.observe(t);
    }
    Ok(acc.curve())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::DistributionSpec;
    use crate::montecarlo::substream;
    use crate::processes::ProcessConfig;
    use crate::records::{Direction, RecordAccumulator};
    use proptest::prelude::*;

    /// Direct double loop, used as the reference for the stack scan.
    fn brute(values: &[f64], window: usize) -> ([u64; 2], [u64; 2], u64) {
        let mut sum = [0; 2];
        let mut events = [0; 2];
        let starts = values.len() - window;
        for t in 0..starts {
            for (side, cross) in [(0, 1.0), (1, -1.0)] {
                if let Some(j) = (1..=window).find(|&j| cross * (values[t + j] - values[t]) > 0.0) {
                    sum[side] += j as u64;
                    events[side] += 1;
                }
            }
        }
        (sum, events, starts as u64)
    }

    #[test]
    fn increasing_sequence() {
        let v: Vec<f64> = (0..20).map(f64::from).collect();
        let r = windowed_fpt(&v, 5).unwrap();
        assert_eq!(r.positive.mean, Some(1.0));
        assert_eq!(r.negative.mean, None);
        assert_eq!(r.negative.censored, r.starts);
        assert_eq!(r.starts, 15);
    }

    #[test]
    fn alternating_sequence() {
        let v: Vec<f64> = (0..12).map(|i| (i % 2) as f64).collect();
        let r = windowed_fpt(&v, 2).unwrap();
        assert_eq!(r.positive.mean, Some(1.0));
        assert_eq!(r.negative.mean, Some(1.0));
        // only the low points cross upwards and only the high points downwards
        assert_eq!(r.positive.events + r.negative.events, r.starts);
    }

    #[test]
    fn errors() {
        assert_eq!(windowed_fpt(&[0.0, 1.0], 0), Err(FptError::ZeroWindow));
        assert!(matches!(windowed_fpt(&[0.0, 1.0], 2), Err(FptError::WindowTooLong { .. })));
    }

    #[test]
    fn symmetric_walk_partial_mean() {
        let window = 100;
        let gen = ProcessConfig::random_walk(DistributionSpec::standard_normal(), 0.0)
            .generator()
            .unwrap();
        let mut acc = FptAccumulator::new(window).unwrap();
        let mut buf = Vec::new();
        for r in 0..20_000 {
            gen.fill(window, &mut substream(4, r), &mut buf);
            acc.observe(&buf);
        }
        let rep = acc.report();
        let target = crate::analytics::fpt_symmetric(window as u64);
        for side in [rep.positive, rep.negative] {
            let pm = side.partial_mean.unwrap();
            assert!((pm / target - 1.0).abs() < 0.05, "{pm} vs {target}");
            // conditional mean sits above: N Q_N / (1 - Q_N)
            let q = crate::analytics::rw_rate(window as u64);
            let cond = window as f64 * q / (1.0 - q);
            assert!((side.mean.unwrap() / cond - 1.0).abs() < 0.05);
        }
    }

    #[test]
    fn survival_matches_record_rate() {
        let gen = ProcessConfig::random_walk(DistributionSpec::laplace(1.0).unwrap(), 0.0)
            .generator()
            .unwrap();
        let mut surv = SurvivalAccumulator::new(31);
        let mut rec = RecordAccumulator::new(31, 1);
        let mut buf = Vec::new();
        for r in 0..100_000 {
            gen.fill(30, &mut substream(8, r), &mut buf);
            surv.observe(&buf);
            gen.fill(30, &mut substream(9, r), &mut buf);
            rec.observe(&buf);
        }
        let s = surv.curve();
        let c = rec.curve(Direction::Upper);
        assert_eq!(s.probability[0], 1.0);
        assert!((s.probability[1] - 0.5).abs() < 3.0 * s.stderr[1]);
        assert!((s.probability[2] - 0.375).abs() < 3.0 * s.stderr[2]);
        for n in 1..=30 {
            let joint = (s.stderr[n].powi(2) + c.stderr[n].powi(2)).sqrt();
            assert!((s.probability[n] - c.rate[n]).abs() < 4.0 * joint, "n={n}");
        }
    }

    #[test]
    fn dominant_drift_survives() {
        let t: Vec<Vec<f64>> = (0..10)
            .map(|r| {
                ProcessConfig::random_walk(DistributionSpec::gaussian(0.01).unwrap(), 1.0)
                    .generate(50, &mut substream(1, r))
                    .unwrap()
                    .values
            })
            .collect();
        let s = survival_curve(&t).unwrap();
        assert!(s.probability.iter().all(|&p| p == 1.0));
    }

    #[test]
    fn interval_average_weights_intervals_equally() {
        // two starts crossing after 1 step, versus one start crossing after 2
        let a = windowed_fpt(&[0.0, 1.0, 2.0, 3.0], 2).unwrap();
        let b = windowed_fpt(&[0.0, 0.0, 1.0], 2).unwrap();
        let avg = average_intervals(&[a, b]).unwrap();
        assert_eq!(avg.mean_positive, Some(1.5));
        assert_eq!(
            average_intervals(&[a, windowed_fpt(&[0.0, 1.0, 2.0], 1).unwrap()]),
            Err(FptError::MixedWindows)
        );
    }

    proptest! {
        #[test]
        fn stack_scan_matches_double_loop(v in prop::collection::vec(-5i32..5, 2..120), w in 1usize..20) {
            let v: Vec<f64> = v.into_iter().map(f64::from).collect();
            prop_assume!(v.len() > w);
            let mut acc = FptAccumulator::new(w).unwrap();
            acc.try_observe(&v).unwrap();
            let (sum, events, starts) = brute(&v, w);
            prop_assert_eq!(acc.sum, sum);
            prop_assert_eq!(acc.events, events);
            prop_assert_eq!(acc.starts, starts);
        }

        #[test]
        fn negation_swaps_sides(v in prop::collection::vec(-1e3f64..1e3, 2..200), w in 1usize..30) {
            prop_assume!(v.len() > w);
            let r = windowed_fpt(&v, w).unwrap();
            let neg: Vec<f64> = v.iter().map(|x| -x).collect();
            let s = windowed_fpt(&neg, w).unwrap();
            prop_assert_eq!(r.positive, s.negative);
            prop_assert_eq!(r.negative, s.positive);
        }
    }
}
