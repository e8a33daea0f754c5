//! Records of the running maximum of N walkers or stocks.

use std::io::Write;

use rand::seq::index;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::montecarlo::{run_replicas, Accumulator, PartialRun, RunOptions};
use crate::processes::{ProcessConfig, ProcessError};
use crate::records::{Direction, RecordAccumulator, RecordRateCurve};

#[derive(Debug, Error)]
pub enum EnsembleError {
    #[error("ensemble size must be at least 1")]
    NoWalkers,
    #[error("ensemble of {walkers} exceeds the {available} available series")]
    TooManyWalkers { walkers: usize, available: usize },
    #[error("series have {available} points, {needed} needed")]
    SeriesTooShort { needed: usize, available: usize },
    #[error("no series supplied")]
    NoSeries,
    #[error("number of steps must be positive")]
    ZeroSteps,
    #[error("at least one draw is required")]
    NoDraws,
    #[error("collapse needs at least two ensemble sizes N >= 2, got {0}")]
    TooFewSizes(usize),
    #[error("curves have different lengths")]
    Ragged,
    #[error(transparent)]
    Process(#[from] ProcessError),
    #[error("time budget exhausted after {completed} of {requested} draws")]
    Partial { completed: u64, requested: u64 },
}

impl<A> From<PartialRun<A>> for EnsembleError {
    fn from(p: PartialRun<A>) -> Self {
        Self::Partial {
            completed: p.completed,
            requested: p.requested,
        }
    }
}

/// Where the walkers come from.
#[derive(Debug, Clone, PartialEq)]
pub enum EnsembleSource {
    /// Fresh independent trajectories for every replica.
    Simulated(ProcessConfig),
    /// Groups of preprocessed series observed over the same days; each draw
    /// takes a random subset of one group, cycling through the groups.
    Panel(Vec<Vec<Vec<f64>>>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleRunConfig {
    pub walkers: usize,
    pub steps: usize,
    pub source: EnsembleSource,
    /// Replicas when simulating, subset draws for panels.
    pub draws: u64,
    pub seed: u64,
    pub workers: Option<usize>,
}

impl EnsembleRunConfig {
    pub fn validate(&self) -> Result<(), EnsembleError> {
        if self.walkers == 0 {
            return Err(EnsembleError::NoWalkers);
        }
        if self.steps == 0 {
            return Err(EnsembleError::ZeroSteps);
        }
        if self.draws == 0 {
            return Err(EnsembleError::NoDraws);
        }
        match &self.source {
            EnsembleSource::Simulated(p) => p.validate()?,
            EnsembleSource::Panel(groups) => {
                if groups.is_empty() || groups.iter().any(Vec::is_empty) {
                    return Err(EnsembleError::NoSeries);
                }
                let available = groups.iter().map(Vec::len).min().unwrap_or(0);
                if self.walkers > available {
                    return Err(EnsembleError::TooManyWalkers {
                        walkers: self.walkers,
                        available,
                    });
                }
                let shortest = groups.iter().flatten().map(Vec::len).min().unwrap_or(0);
                if shortest < self.steps + 1 {
                    return Err(EnsembleError::SeriesTooShort {
                        needed: self.steps + 1,
                        available: shortest,
                    });
                }
            }
        }
        Ok(())
    }

    fn options(&self) -> RunOptions {
        RunOptions {
            replicas: self.draws,
            master_seed: self.seed,
            workers: self.workers,
            time_budget: None,
        }
    }
}

/// Record statistics of the ensemble maximum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleStats {
    pub walkers: usize,
    pub steps: usize,
    pub draws: u64,
    /// Upper records of the maximum path, indexed by step.
    pub curve: RecordRateCurve,
}

impl EnsembleStats {
    pub fn mean_records(&self) -> &[f64] {
        &self.curve.mean_records
    }

    pub fn end_rate(&self) -> (f64, f64) {
        let n = self.steps;
        (self.curve.rate[n], self.curve.stderr[n])
    }

    pub fn end_mean(&self) -> (f64, f64) {
        let n = self.steps;
        (self.curve.mean_records[n], self.curve.mean_records_stderr[n])
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "walkers,n,rate,stderr,mean_records,mean_records_stderr")?;
        let c = &self.curve;
        for n in 0..c.rate.len() {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                self.walkers, n, c.rate[n], c.stderr[n], c.mean_records[n], c.mean_records_stderr[n]
            )?;
        }
        Ok(())
    }
}

/// Element-wise maximum of `path` into `max`.
fn raise(max: &mut [f64], path: &[f64]) {
    for (m, v) in max.iter_mut().zip(path) {
        if *v > *m {
            *m = *v;
        }
    }
}

struct Buffers {
    path: Vec<f64>,
    max: Vec<f64>,
}

thread_local! {
    static BUFFERS: std::cell::RefCell<Buffers> = const {
        std::cell::RefCell::new(Buffers { path: Vec::new(), max: Vec::new() })
    };
}

/// Runs the ensemble: in every replica the element-wise maximum over the
/// walkers is scanned for records, so a record happens when any walker beats
/// the highest value seen by all walkers so far.
pub fn max_record_stats(config: &EnsembleRunConfig) -> Result<EnsembleStats, EnsembleError> {
    config.validate()?;
    let n = config.steps;
    let make = || RecordAccumulator::new(n + 1, 1);
    let acc = match &config.source {
        EnsembleSource::Simulated(process) => {
            let gen = process.generator()?;
            run_replicas(&config.options(), make, |acc, rng, _| {
                BUFFERS.with(|b| {
                    let b = &mut *b.borrow_mut();
                    b.max.clear();
                    b.max.resize(n + 1, f64::NEG_INFINITY);
                    for _ in 0..config.walkers {
                        gen.fill(n, rng, &mut b.path);
                        raise(&mut b.max, &b.path);
                    }
                    acc.observe(&b.max);
                })
            })?
        }
        EnsembleSource::Panel(groups) => run_replicas(&config.options(), make, |acc, rng, draw| {
            let group = &groups[(draw % groups.len() as u64) as usize];
            let picked = index::sample(rng, group.len(), config.walkers);
            BUFFERS.with(|b| {
                let b = &mut *b.borrow_mut();
                b.max.clear();
                b.max.resize(n + 1, f64::NEG_INFINITY);
                for i in picked.iter() {
                    raise(&mut b.max, &group[i][..=n]);
                }
                acc.observe(&b.max);
            })
        })?,
    };
    Ok(EnsembleStats {
        walkers: config.walkers,
        steps: n,
        draws: acc.replicas(),
        curve: acc.curve(Direction::Upper),
    })
}

/// Record statistics of the maximum of a fixed set of series.
pub fn fixed_ensemble<T: AsRef<[f64]>>(series: &[T]) -> Result<EnsembleStats, EnsembleError> {
    let first = series.first().ok_or(EnsembleError::NoSeries)?.as_ref().len();
    if first < 2 {
        return Err(EnsembleError::ZeroSteps);
    }
    let mut max = vec![f64::NEG_INFINITY; first];
    for s in series {
        let s = s.as_ref();
        if s.len() != first {
            return Err(EnsembleError::Ragged);
        }
        raise(&mut max, s);
    }
    let mut acc = RecordAccumulator::new(first, 1);
    acc.observe(&max);
    Ok(EnsembleStats {
        walkers: series.len(),
        steps: first - 1,
        draws: 1,
        curve: acc.curve(Direction::Upper),
    })
}

/// Mean-record curves divided by `sqrt(ln N)`, one column per ensemble size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollapseReport {
    pub walkers: Vec<usize>,
    pub normalized: Vec<Vec<f64>>,
    /// `(max - min) / min` across ensemble sizes at each step.
    pub spread: Vec<f64>,
    /// First step included in `max_spread`.
    pub from_step: usize,
    pub max_spread: f64,
    pub warnings: Vec<String>,
}

impl CollapseReport {
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        write!(out, "n")?;
        for w in &self.walkers {
            write!(out, ",N{w}")?;
        }
        writeln!(out, ",spread")?;
        for n in 0..self.spread.len() {
            write!(out, "{n}")?;
            for col in &self.normalized {
                write!(out, ",{}", col[n])?;
            }
            writeln!(out, ",{}", self.spread[n])?;
        }
        Ok(())
    }
}

/// Compares mean-record curves for different N after dividing by
/// `sqrt(ln N)`. N = 1 cannot be normalized and is dropped with a warning.
pub fn collapse_report(curves: &[(usize, Vec<f64>)], from_step: usize) -> Result<CollapseReport, EnsembleError> {
    let mut warnings = Vec::new();
    let mut kept: Vec<&(usize, Vec<f64>)> = Vec::new();
    for c in curves {
        if c.0 < 2 {
            let w = format!("ensemble size {} cannot be normalized by ln N and was left out", c.0);
            log::warn!("{w}");
            warnings.push(w);
        } else {
            kept.push(c);
        }
    }
    let mut distinct: Vec<usize> = kept.iter().map(|c| c.0).collect();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < 2 {
        return Err(EnsembleError::TooFewSizes(distinct.len()));
    }
    let len = kept[0].1.len();
    if kept.iter().any(|c| c.1.len() != len) {
        return Err(EnsembleError::Ragged);
    }
    let normalized: Vec<Vec<f64>> = kept
        .iter()
        .map(|(w, c)| {
            let s = (*w as f64).ln().sqrt();
            c.iter().map(|v| v / s).collect()
        })
        .collect();
    let spread: Vec<f64> = (0..len)
        .map(|n| {
            let (lo, hi) = normalized
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), c| (lo.min(c[n]), hi.max(c[n])));
            (hi - lo) / lo
        })
        .collect();
    let max_spread = spread.iter().skip(from_step).fold(0.0f64, |m, s| m.max(*s));
    Ok(CollapseReport {
        walkers: kept.iter().map(|c| c.0).collect(),
        normalized,
        spread,
        from_step,
        max_spread,
        warnings,
    })
}
