//! Reproducible parallel replica runs.
//!
//! Replica `r` always draws from `substream(master_seed, r)`, replicas are
//! grouped into fixed-size chunks, and chunk results are merged in a fixed
//! pairwise tree. The outcome therefore does not depend on the number of
//! worker threads or on scheduling.

use std::collections::BTreeSet;
use std::fmt;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::firstpassage::{FptAccumulator, FptError, FptReport, SurvivalAccumulator, SurvivalCurve};
use crate::processes::{ProcessConfig, ProcessError};
use crate::records::{Direction, Proportion, RecordAccumulator, RecordNumberHistogram, RecordRateCurve};

pub type RandomStream = Xoshiro256PlusPlus;

pub const SCHEMA_VERSION: u32 = 1;
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Replicas per chunk. Fixed so that the merge tree never depends on the
/// worker count.
pub const CHUNK: u64 = 512;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent generator for replica `index` of a run seeded with
/// `master_seed`.
pub fn substream(master_seed: u64, index: u64) -> RandomStream {
    let key = splitmix64(master_seed ^ splitmix64(index.wrapping_add(0x6A09_E667_F3BC_C909)));
    RandomStream::seed_from_u64(key)
}

/// Per-replica statistic that can be combined exactly.
pub trait Accumulator: Send + Sized {
    fn observe(&mut self, values: &[f64]);
    fn merge(&mut self, other: Self);
}

/// Replica count, seed, parallelism and time budget of a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions {
    pub replicas: u64,
    pub master_seed: u64,
    /// `None` uses the global thread pool.
    pub workers: Option<usize>,
    pub time_budget: Option<Duration>,
}

impl RunOptions {
    pub fn new(replicas: u64, master_seed: u64) -> Self {
        Self {
            replicas,
            master_seed,
            workers: None,
            time_budget: None,
        }
    }

    pub fn with_workers(mut self, workers: usize) -> Self {
        self.workers = Some(workers);
        self
    }
}

/// The time budget ran out; `partial` holds every finished chunk.
pub struct PartialRun<A> {
    pub completed: u64,
    pub requested: u64,
    pub partial: Option<A>,
}

impl<A> fmt::Debug for PartialRun<A> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PartialRun({} of {} replicas)", self.completed, self.requested)
    }
}

impl<A> fmt::Display for PartialRun<A> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "time budget exhausted after {} of {} replicas",
            self.completed, self.requested
        )
    }
}

impl<A> std::error::Error for PartialRun<A> {}

/// Merges in a balanced binary tree over the input order.
pub fn tree_merge<A: Accumulator>(mut parts: Vec<A>) -> Option<A> {
    while parts.len() > 1 {
        let mut next = Vec::with_capacity(parts.len().div_ceil(2));
        let mut it = parts.into_iter();
        while let Some(mut a) = it.next() {
            if let Some(b) = it.next() {
                a.merge(b);
            }
            next.push(a);
        }
        parts = next;
    }
    parts.pop()
}

/// Runs `body(acc, rng, replica)` for every replica and merges the results.
pub fn run_replicas<A, M, F>(opts: &RunOptions, make: M, body: F) -> Result<A, PartialRun<A>>
where
    A: Accumulator,
    M: Fn() -> A + Sync,
    F: Fn(&mut A, &mut RandomStream, u64) + Sync,
{
    let deadline = opts.time_budget.map(|d| Instant::now() + d);
    let chunks = opts.replicas.div_ceil(CHUNK);
    let work = || -> Vec<Option<(A, u64)>> {
        (0..chunks)
            .into_par_iter()
            .map(|c| {
                if deadline.is_some_and(|d| Instant::now() > d) {
                    return None;
                }
                let mut acc = make();
                let start = c * CHUNK;
                let end = (start + CHUNK).min(opts.replicas);
                for r in start..end {
                    let mut rng = substream(opts.master_seed, r);
                    body(&mut acc, &mut rng, r);
                }
                Some((acc, end - start))
            })
            .collect()
    };
    let results = match opts.workers {
        Some(w) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(w.max(1))
                .build()
                .expect("thread pool");
            pool.install(work)
        }
        None => work(),
    };
    let complete = results.iter().all(Option::is_some);
    let completed: u64 = results.iter().flatten().map(|(_, k)| k).sum();
    let merged = tree_merge(results.into_iter().flatten().map(|(a, _)| a).collect());
    if complete {
        Ok(merged.unwrap_or_else(make))
    } else {
        Err(PartialRun {
            completed,
            requested: opts.replicas,
            partial: merged,
        })
    }
}

/// Generates one trajectory per replica with `config` and feeds it to `A`.
pub fn simulate<A, M>(config: &ProcessConfig, steps: usize, opts: &RunOptions, make: M) -> Result<A, RunError<A>>
where
    A: Accumulator,
    M: Fn() -> A + Sync,
{
    let gen = config.generator()?;
    if steps == 0 {
        return Err(RunError::Process(ProcessError::ZeroSteps));
    }
    run_replicas(opts, make, |acc, rng, _| {
        thread_local! {
            static BUF: std::cell::RefCell<Vec<f64>> = const { std::cell::RefCell::new(Vec::new()) };
        }
        BUF.with(|b| {
            let mut b = b.borrow_mut();
            gen.fill(steps, rng, &mut b);
            acc.observe(&b);
        });
    })
    .map_err(RunError::Partial)
}

#[derive(Debug, Error)]
pub enum RunError<A> {
    #[error(transparent)]
    Process(#[from] ProcessError),
    #[error(transparent)]
    Fpt(#[from] FptError),
    #[error("replicas must be at least 1")]
    NoReplicas,
    #[error("{0}")]
    Partial(PartialRun<A>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Analysis {
    RecordRates,
    RecordNumbers,
    Conditional,
    Survival,
    FirstPassage,
}

fn default_analyses() -> BTreeSet<Analysis> {
    [Analysis::RecordRates, Analysis::RecordNumbers, Analysis::Conditional]
        .into_iter()
        .collect()
}

fn default_lag() -> usize {
    1
}

/// A complete simulation experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub process: ProcessConfig,
    pub n: usize,
    pub replicas: u64,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "default_analyses")]
    pub analyses: BTreeSet<Analysis>,
    /// Windows for the first-passage analysis.
    #[serde(default)]
    pub fpt_windows: Vec<usize>,
    /// Look-ahead of the conditional record probability.
    #[serde(default = "default_lag")]
    pub lag: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_budget_secs: Option<f64>,
}

impl ExperimentConfig {
    pub fn new(process: ProcessConfig, n: usize, replicas: u64, master_seed: u64) -> Self {
        Self {
            process,
            n,
            replicas,
            master_seed,
            analyses: default_analyses(),
            fpt_windows: Vec::new(),
            lag: 1,
            workers: None,
            time_budget_secs: None,
        }
    }

    fn options(&self) -> RunOptions {
        RunOptions {
            replicas: self.replicas,
            master_seed: self.master_seed,
            workers: self.workers,
            time_budget: self.time_budget_secs.map(Duration::from_secs_f64),
        }
    }

    fn wants(&self, a: Analysis) -> bool {
        self.analyses.contains(&a)
    }
}

/// Everything the requested analyses need, merged over replicas.
#[derive(Debug, Clone)]
pub struct ExperimentAccumulator {
    records: Option<RecordAccumulator>,
    survival: Option<SurvivalAccumulator>,
    fpt: Vec<FptAccumulator>,
}

impl Accumulator for ExperimentAccumulator {
    fn observe(&mut self, values: &[f64]) {
        if let Some(r) = &mut self.records {
            r.observe(values);
        }
        if let Some(s) = &mut self.survival {
            s.observe(values);
        }
        for f in &mut self.fpt {
            f.observe(values);
        }
    }

    fn merge(&mut self, other: Self) {
        if let (Some(a), Some(b)) = (&mut self.records, other.records) {
            a.merge(b);
        }
        if let (Some(a), Some(b)) = (&mut self.survival, other.survival) {
            a.merge(b);
        }
        for (a, b) in self.fpt.iter_mut().zip(other.fpt) {
            a.merge(b);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub schema_version: u32,
    pub version: String,
    pub master_seed: u64,
    pub replicas: u64,
    pub n: usize,
    pub process: ProcessConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionalSummary {
    pub lag: usize,
    pub upper_after_upper: Option<Proportion>,
    pub lower_after_lower: Option<Proportion>,
    pub lower_after_upper: Option<Proportion>,
    pub upper_after_lower: Option<Proportion>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub metadata: ReportMetadata,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub upper: Option<RecordRateCurve>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lower: Option<RecordRateCurve>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub upper_record_numbers: Option<RecordNumberHistogram>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lower_record_numbers: Option<RecordNumberHistogram>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub conditional: Option<ConditionalSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub survival: Option<SurvivalCurve>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub first_passage: Vec<FptReport>,
}

/// Runs every requested analysis over `config.replicas` trajectories.
pub fn run(config: &ExperimentConfig) -> Result<ExperimentReport, RunError<ExperimentAccumulator>> {
    if config.replicas == 0 {
        return Err(RunError::NoReplicas);
    }
    config.process.validate()?;
    let len = config.n + 1;
    let need_records = [Analysis::RecordRates, Analysis::RecordNumbers, Analysis::Conditional]
        .iter()
        .any(|a| config.wants(*a));
    let windows: Vec<usize> = if config.wants(Analysis::FirstPassage) {
        config.fpt_windows.clone()
    } else {
        Vec::new()
    };
    for &w in &windows {
        if w >= len {
            return Err(FptError::WindowTooLong { window: w, len }.into());
        }
        FptAccumulator::new(w)?;
    }
    let make = || ExperimentAccumulator {
        records: need_records.then(|| RecordAccumulator::new(len, config.lag)),
        survival: config.wants(Analysis::Survival).then(|| SurvivalAccumulator::new(len)),
        fpt: windows.iter().map(|&w| FptAccumulator::new(w).expect("checked")).collect(),
    };
    let acc = simulate(&config.process, config.n, &config.options(), make)?;
    let rec = acc.records.as_ref();
    let pick = |a: Analysis, f: &dyn Fn(&RecordAccumulator) -> _| if config.wants(a) { rec.map(f) } else { None };
    Ok(ExperimentReport {
        metadata: ReportMetadata {
            schema_version: SCHEMA_VERSION,
            version: VERSION.to_string(),
            master_seed: config.master_seed,
            replicas: config.replicas,
            n: config.n,
            process: config.process,
        },
        upper: pick(Analysis::RecordRates, &|r| r.curve(Direction::Upper)),
        lower: pick(Analysis::RecordRates, &|r| r.curve(Direction::Lower)),
        upper_record_numbers: config
            .wants(Analysis::RecordNumbers)
            .then(|| rec.map(|r| r.record_numbers(Direction::Upper)))
            .flatten(),
        lower_record_numbers: config
            .wants(Analysis::RecordNumbers)
            .then(|| rec.map(|r| r.record_numbers(Direction::Lower)))
            .flatten(),
        conditional: config
            .wants(Analysis::Conditional)
            .then(|| {
                rec.map(|r| ConditionalSummary {
                    lag: config.lag,
                    upper_after_upper: r.conditional(Direction::Upper, Direction::Upper),
                    lower_after_lower: r.conditional(Direction::Lower, Direction::Lower),
                    lower_after_upper: r.conditional(Direction::Upper, Direction::Lower),
                    upper_after_lower: r.conditional(Direction::Lower, Direction::Upper),
                })
            })
            .flatten(),
        survival: acc.survival.as_ref().map(SurvivalAccumulator::curve),
        first_passage: acc.fpt.iter().map(FptAccumulator::report).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::DistributionSpec;
    use crate::records::rate_curve;
    use rand::Rng;
    use std::collections::HashSet;

    fn walk() -> ProcessConfig {
        ProcessConfig::random_walk(DistributionSpec::standard_normal(), 0.0)
    }

    #[test]
    fn substreams_do_not_collide() {
        let mut seen = HashSet::new();
        for r in 0..10_000 {
            let mut rng = substream(7, r);
            let quad: [u64; 4] = std::array::from_fn(|_| rng.random());
            assert!(seen.insert(quad), "replica {r} repeats an earlier stream");
        }
        let a: u64 = substream(1, 0).random();
        let b: u64 = substream(2, 0).random();
        assert_ne!(a, b);
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let mut cfg = ExperimentConfig::new(walk(), 200, 3000, 99);
        cfg.analyses.insert(Analysis::Survival);
        cfg.analyses.insert(Analysis::FirstPassage);
        cfg.fpt_windows = vec![10];
        cfg.workers = Some(1);
        let one = run(&cfg).unwrap();
        cfg.workers = Some(8);
        let eight = run(&cfg).unwrap();
        assert_eq!(one, eight);
        assert_eq!(one.upper_record_numbers, eight.upper_record_numbers);
    }

    #[test]
    fn single_replica_matches_direct_analysis() {
        let cfg = ExperimentConfig::new(walk(), 50, 1, 5);
        let rep = run(&cfg).unwrap();
        let t = walk().generate(50, &mut substream(5, 0)).unwrap();
        assert_eq!(rep.upper.unwrap(), rate_curve(std::slice::from_ref(&t.values), Direction::Upper).unwrap());
        assert_eq!(rep.lower.unwrap(), rate_curve(&[t.values], Direction::Lower).unwrap());
    }

    #[test]
    fn stderr_shrinks_with_replicas() {
        let mut small = ExperimentConfig::new(walk(), 100, 20_000, 3);
        small.analyses = [Analysis::RecordRates].into_iter().collect();
        let mut large = small.clone();
        large.replicas = 40_000;
        let a = run(&small).unwrap().upper.unwrap();
        let b = run(&large).unwrap().upper.unwrap();
        for n in [10, 50, 100] {
            let ratio = a.stderr[n] / b.stderr[n];
            assert!((ratio / 2f64.sqrt() - 1.0).abs() < 0.1, "n={n}: {ratio}");
        }
    }

    #[test]
    fn time_budget_returns_partial_result() {
        let mut cfg = ExperimentConfig::new(walk(), 1000, 1_000_000, 1);
        cfg.time_budget_secs = Some(0.0);
        match run(&cfg) {
            Err(RunError::Partial(p)) => {
                assert_eq!(p.requested, 1_000_000);
                assert!(p.completed < 1_000_000);
            }
            other => panic!("expected a partial run, got {:?}", other.map(|r| r.metadata)),
        }
    }

    #[test]
    fn invalid_configs() {
        let cfg = ExperimentConfig::new(walk(), 10, 0, 1);
        assert!(matches!(run(&cfg), Err(RunError::NoReplicas)));
        let mut cfg = ExperimentConfig::new(walk(), 10, 10, 1);
        cfg.analyses.insert(Analysis::FirstPassage);
        cfg.fpt_windows = vec![11];
        assert!(matches!(run(&cfg), Err(RunError::Fpt(_))));
    }

    #[test]
    fn config_round_trips_through_json() {
        let cfg = ExperimentConfig::new(ProcessConfig::ar1(DistributionSpec::standard_normal(), 0.99, 0.0), 250, 100, 7);
        let js = serde_json::to_string(&cfg).unwrap();
        let back: ExperimentConfig = serde_json::from_str(&js).unwrap();
        assert_eq!(cfg, back);
        let minimal: ExperimentConfig =
            serde_json::from_str(r#"{"process":{"kind":"random_walk"},"n":10,"replicas":5}"#).unwrap();
        assert_eq!(minimal.analyses, default_analyses());
    }

    #[test]
    fn ar1_family_shapes() {
        // small alpha settles onto the 1/n law, alpha near one follows the walk
        let n = 2000;
        let rate = |alpha: f64| {
            let mut cfg = ExperimentConfig::new(ProcessConfig::ar1(DistributionSpec::standard_normal(), alpha, 0.0), n, 20_000, 11);
            cfg.analyses = [Analysis::RecordRates].into_iter().collect();
            run(&cfg).unwrap().upper.unwrap()
        };
        let iid_like = rate(0.1);
        let walk_like = rate(0.999);
        let tail = |c: &RecordRateCurve| (n - 200..=n).map(|i| c.rate[i]).sum::<f64>() / 201.0;
        let iid_tail: f64 = (n - 200..=n).map(|i| 1.0 / i as f64).sum::<f64>() / 201.0;
        assert!((tail(&iid_like) / iid_tail - 1.0).abs() < 0.25, "{}", tail(&iid_like));
        for i in [5usize, 20, 50] {
            let rw = crate::analytics::rw_rate(i as u64);
            assert!((walk_like.rate[i] - rw).abs() < 4.0 * walk_like.stderr[i], "i={i}");
        }
    }
}
