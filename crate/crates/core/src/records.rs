//! Upper and lower record detection and the record statistics built on it.
//!
//! An entry is an upper (lower) record when it is strictly larger (smaller)
//! than every earlier entry. Index 0 counts as a record of both kinds, so a
//! sequence of i.i.d. continuous values has record rate `1/(n+1)` at step `n`.

use std::io::Write;

use chrono::{Datelike, NaiveDate, Weekday};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::montecarlo::Accumulator;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RecordError {
    #[error("sequence is empty")]
    Empty,
    #[error("sequence contains a non-finite value at index {0}")]
    NonFinite(usize),
    #[error("trajectory {index} has {found} entries, expected {expected}")]
    Ragged {
        index: usize,
        expected: usize,
        found: usize,
    },
    #[error("no trajectories supplied")]
    NoTrajectories,
    #[error("bin length {bin} does not fit into a series of {len} entries")]
    BinTooLong { bin: usize, len: usize },
    #[error("lag must be at least 1")]
    ZeroLag,
    #[error("{dates} dates for {values} values")]
    DateMismatch { dates: usize, values: usize },
    #[error("{0} falls on a weekend")]
    Weekend(NaiveDate),
    #[error("rescale factor must be positive and finite, got {0}")]
    InvalidScale(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Upper,
    Lower,
}

impl Direction {
    pub const BOTH: [Direction; 2] = [Direction::Upper, Direction::Lower];

    pub fn opposite(self) -> Self {
        match self {
            Direction::Upper => Direction::Lower,
            Direction::Lower => Direction::Upper,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Upper => "upper",
            Direction::Lower => "lower",
        }
    }

    fn slot(self) -> usize {
        self as usize
    }
}

/// Per-index record indicators of one sequence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordSeries {
    pub upper_flags: Vec<bool>,
    pub lower_flags: Vec<bool>,
    pub upper_count: usize,
    pub lower_count: usize,
}

impl RecordSeries {
    pub fn flags(&self, direction: Direction) -> &[bool] {
        match direction {
            Direction::Upper => &self.upper_flags,
            Direction::Lower => &self.lower_flags,
        }
    }

    pub fn count(&self, direction: Direction) -> usize {
        match direction {
            Direction::Upper => self.upper_count,
            Direction::Lower => self.lower_count,
        }
    }

    pub fn indices(&self, direction: Direction) -> Vec<usize> {
        self.flags(direction)
            .iter()
            .enumerate()
            .filter_map(|(i, f)| f.then_some(i))
            .collect()
    }
}

/// Calls `visit(i, upper, lower)` for every index, without allocating.
#[inline]
pub fn scan_records<F: FnMut(usize, bool, bool)>(values: &[f64], mut visit: F) {
    let Some(&first) = values.first() else {
        return;
    };
    let (mut hi, mut lo) = (first, first);
    visit(0, true, true);
    for (i, &x) in values.iter().enumerate().skip(1) {
        let up = x > hi;
        let down = x < lo;
        if up {
            hi = x;
        }
        if down {
            lo = x;
        }
        visit(i, up, down);
    }
}

pub fn detect_records(values: &[f64]) -> Result<RecordSeries, RecordError> {
    if values.is_empty() {
        return Err(RecordError::Empty);
    }
    if let Some(i) = values.iter().position(|v| v.is_nan()) {
        return Err(RecordError::NonFinite(i));
    }
    let mut out = RecordSeries {
        upper_flags: vec![false; values.len()],
        lower_flags: vec![false; values.len()],
        upper_count: 0,
        lower_count: 0,
    };
    scan_records(values, |i, up, down| {
        out.upper_flags[i] = up;
        out.lower_flags[i] = down;
        out.upper_count += up as usize;
        out.lower_count += down as usize;
    });
    Ok(out)
}

/// A proportion with its binomial standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Proportion {
    pub value: f64,
    pub stderr: f64,
    pub successes: u64,
    pub trials: u64,
}

impl Proportion {
    pub fn from_counts(successes: u64, trials: u64) -> Option<Self> {
        if trials == 0 {
            return None;
        }
        let p = successes as f64 / trials as f64;
        Some(Self {
            value: p,
            stderr: (p * (1.0 - p) / trials as f64).sqrt(),
            successes,
            trials,
        })
    }
}

/// Record rate and mean record number per step, estimated over replicas.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordRateCurve {
    pub direction: Direction,
    pub replicas: u64,
    pub counts: Vec<u64>,
    pub rate: Vec<f64>,
    pub stderr: Vec<f64>,
    pub mean_records: Vec<f64>,
    pub mean_records_stderr: Vec<f64>,
}

impl RecordRateCurve {
    /// `counts[i]`: replicas with a record at step `i`; `running_sq[i]`: sum
    /// over replicas of the squared record number up to step `i`.
    pub fn from_counts(direction: Direction, counts: Vec<u64>, running_sq: &[u64], replicas: u64) -> Self {
        let m = replicas.max(1) as f64;
        let rate: Vec<f64> = counts.iter().map(|&k| k as f64 / m).collect();
        let stderr = rate.iter().map(|p| (p * (1.0 - p) / m).sqrt()).collect();
        let mut running = 0u64;
        let mut mean_records = Vec::with_capacity(counts.len());
        let mut mean_records_stderr = Vec::with_capacity(counts.len());
        for (i, &k) in counts.iter().enumerate() {
            running += k;
            let mean = running as f64 / m;
            mean_records.push(mean);
            let se = match running_sq.get(i) {
                Some(&sq) if replicas > 1 => {
                    let var = (sq as f64 - running as f64 * mean) / (m - 1.0);
                    (var.max(0.0) / m).sqrt()
                }
                _ => 0.0,
            };
            mean_records_stderr.push(se);
        }
        Self {
            direction,
            replicas,
            counts,
            rate,
            stderr,
            mean_records,
            mean_records_stderr,
        }
    }

    /// Largest step index covered.
    pub fn steps(&self) -> usize {
        self.counts.len().saturating_sub(1)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "n,count,rate,stderr,mean_records,mean_records_stderr")?;
        for i in 0..self.counts.len() {
            writeln!(
                out,
                "{i},{},{},{},{},{}",
                self.counts[i], self.rate[i], self.stderr[i], self.mean_records[i], self.mean_records_stderr[i]
            )?;
        }
        Ok(())
    }
}

/// Distribution of the total record number at the final step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordNumberHistogram {
    pub direction: Direction,
    pub steps: usize,
    /// `counts[m]` replicas ended with exactly `m` records.
    pub counts: Vec<u64>,
    pub total: u64,
}

/// Density histogram over explicit bin edges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinnedDensity {
    pub edges: Vec<f64>,
    pub probability: Vec<f64>,
    pub density: Vec<f64>,
}

impl BinnedDensity {
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "lower_edge,upper_edge,probability,density")?;
        for (i, (p, d)) in self.probability.iter().zip(&self.density).enumerate() {
            writeln!(out, "{},{},{p},{d}", self.edges[i], self.edges[i + 1])?;
        }
        Ok(())
    }
}

impl RecordNumberHistogram {
    pub fn pmf(&self, m: usize) -> f64 {
        if self.total == 0 {
            return 0.0;
        }
        self.counts.get(m).copied().unwrap_or(0) as f64 / self.total as f64
    }

    pub fn pmf_stderr(&self, m: usize) -> f64 {
        let p = self.pmf(m);
        (p * (1.0 - p) / self.total.max(1) as f64).sqrt()
    }

    /// Smallest most-frequent record number.
    pub fn mode(&self) -> Option<usize> {
        let max = *self.counts.iter().max()?;
        if max == 0 {
            return None;
        }
        self.counts.iter().position(|&c| c == max)
    }

    pub fn mean(&self) -> f64 {
        let s: f64 = self.counts.iter().enumerate().map(|(m, &c)| m as f64 * c as f64).sum();
        s / self.total.max(1) as f64
    }

    /// Groups `m / scale` into bins of `bin_width`, starting at 0.
    pub fn rescaled(&self, scale: f64, bin_width: f64) -> Result<BinnedDensity, RecordError> {
        let pmf: Vec<f64> = (0..self.counts.len()).map(|m| self.pmf(m)).collect();
        coarse_grain(&pmf, scale, bin_width)
    }

    /// Total-variation distance to a model pmf on integer record numbers
    /// `1..`, after grouping both into bins of `bin_width` in `m / scale`.
    pub fn total_variation<F: Fn(usize) -> f64>(
        &self,
        model: F,
        scale: f64,
        bin_width: f64,
    ) -> Result<f64, RecordError> {
        let data = self.rescaled(scale, bin_width)?;
        // model support runs past the observed range; cover its mass too
        let len = (self.counts.len() * 4).max(self.steps + 2);
        let model_pmf: Vec<f64> = (0..len).map(|m| if m == 0 { 0.0 } else { model(m) }).collect();
        let model_binned = coarse_grain(&model_pmf, scale, bin_width)?;
        let bins = data.probability.len().max(model_binned.probability.len());
        let get = |v: &Vec<f64>, i: usize| v.get(i).copied().unwrap_or(0.0);
        let tv = (0..bins)
            .map(|i| (get(&data.probability, i) - get(&model_binned.probability, i)).abs())
            .sum::<f64>()
            / 2.0;
        Ok(tv)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "records,count,probability")?;
        for (m, &c) in self.counts.iter().enumerate() {
            writeln!(out, "{m},{c},{}", self.pmf(m))?;
        }
        Ok(())
    }
}

fn coarse_grain(pmf: &[f64], scale: f64, bin_width: f64) -> Result<BinnedDensity, RecordError> {
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(RecordError::InvalidScale(scale));
    }
    if !(bin_width > 0.0 && bin_width.is_finite()) {
        return Err(RecordError::InvalidScale(bin_width));
    }
    let last = pmf.iter().rposition(|&p| p > 0.0).unwrap_or(0);
    let nbins = ((last as f64 / scale) / bin_width).floor() as usize + 1;
    let mut probability = vec![0.0; nbins];
    for (m, &p) in pmf.iter().enumerate().take(last + 1) {
        let b = ((m as f64 / scale) / bin_width).floor() as usize;
        probability[b.min(nbins - 1)] += p;
    }
    let edges = (0..=nbins).map(|i| i as f64 * bin_width).collect();
    let density = probability.iter().map(|p| p / bin_width).collect();
    Ok(BinnedDensity {
        edges,
        probability,
        density,
    })
}

/// Integer-count accumulator for record statistics over many equal-length
/// sequences. Merging is exact, so results do not depend on how replicas are
/// split across workers.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordAccumulator {
    len: usize,
    lag: usize,
    replicas: u64,
    counts: [Vec<u64>; 2],
    running_sq: [Vec<u64>; 2],
    totals: [Vec<u64>; 2],
    /// `follow[d][f] = (records of d with a complete window, followed by f)`
    follow: [[(u64, u64); 2]; 2],
    flags: [Vec<bool>; 2],
}

impl RecordAccumulator {
    /// For sequences of `len` entries (steps `0..len`), conditional
    /// statistics looking `lag` steps ahead.
    pub fn new(len: usize, lag: usize) -> Self {
        let z = || vec![0u64; len];
        Self {
            len,
            lag: lag.max(1),
            replicas: 0,
            counts: [z(), z()],
            running_sq: [z(), z()],
            totals: [vec![0; len + 1], vec![0; len + 1]],
            follow: [[(0, 0); 2]; 2],
            flags: [vec![false; len], vec![false; len]],
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.replicas == 0
    }

    pub fn replicas(&self) -> u64 {
        self.replicas
    }

    pub fn try_observe(&mut self, values: &[f64]) -> Result<(), RecordError> {
        if values.len() != self.len {
            return Err(RecordError::Ragged {
                index: self.replicas as usize,
                expected: self.len,
                found: values.len(),
            });
        }
        self.observe_unchecked(values);
        Ok(())
    }

    fn observe_unchecked(&mut self, values: &[f64]) {
        let [cu, cl] = &mut self.counts;
        let [su, sl] = &mut self.running_sq;
        let [fu, fl] = &mut self.flags;
        let (mut ru, mut rl) = (0u64, 0u64);
        scan_records(values, |i, up, down| {
            ru += up as u64;
            rl += down as u64;
            cu[i] += up as u64;
            cl[i] += down as u64;
            su[i] += ru * ru;
            sl[i] += rl * rl;
            fu[i] = up;
            fl[i] = down;
        });
        self.totals[0][ru as usize] += 1;
        self.totals[1][rl as usize] += 1;
        self.replicas += 1;
        self.count_followers();
    }

    fn count_followers(&mut self) {
        let n = self.len;
        let lag = self.lag;
        if n <= lag {
            return;
        }
        for f in 0..2 {
            // distance to the next record of direction f, scanning backwards
            let mut next: Option<usize> = None;
            for i in (0..n).rev() {
                if i + lag < n {
                    let followed = next.is_some_and(|j| j - i <= lag);
                    for d in 0..2 {
                        if self.flags[d][i] {
                            self.follow[d][f].0 += 1;
                            self.follow[d][f].1 += followed as u64;
                        }
                    }
                }
                if self.flags[f][i] {
                    next = Some(i);
                }
            }
        }
    }

    pub fn curve(&self, direction: Direction) -> RecordRateCurve {
        let d = direction.slot();
        RecordRateCurve::from_counts(direction, self.counts[d].clone(), &self.running_sq[d], self.replicas)
    }

    pub fn record_numbers(&self, direction: Direction) -> RecordNumberHistogram {
        let d = direction.slot();
        let mut counts = self.totals[d].clone();
        while counts.len() > 1 && counts.last() == Some(&0) {
            counts.pop();
        }
        RecordNumberHistogram {
            direction,
            steps: self.len.saturating_sub(1),
            counts,
            total: self.replicas,
        }
    }

    /// Fraction of `direction` records followed by a `follow` record within
    /// the configured lag.
    pub fn conditional(&self, direction: Direction, follow: Direction) -> Option<Proportion> {
        let (events, hits) = self.follow[direction.slot()][follow.slot()];
        Proportion::from_counts(hits, events)
    }
}

impl Accumulator for RecordAccumulator {
    fn observe(&mut self, values: &[f64]) {
        debug_assert_eq!(values.len(), self.len);
        self.observe_unchecked(values);
    }

    fn merge(&mut self, other: Self) {
        assert_eq!(self.len, other.len, "merging accumulators of different length");
        for d in 0..2 {
            add_into(&mut self.counts[d], &other.counts[d]);
            add_into(&mut self.running_sq[d], &other.running_sq[d]);
            add_into(&mut self.totals[d], &other.totals[d]);
            for f in 0..2 {
                self.follow[d][f].0 += other.follow[d][f].0;
                self.follow[d][f].1 += other.follow[d][f].1;
            }
        }
        self.replicas += other.replicas;
    }
}

pub(crate) fn add_into(acc: &mut [u64], other: &[u64]) {
    for (a, b) in acc.iter_mut().zip(other) {
        *a += b;
    }
}

fn accumulate<T: AsRef<[f64]>>(trajectories: &[T], lag: usize) -> Result<RecordAccumulator, RecordError> {
    let first = trajectories.first().ok_or(RecordError::NoTrajectories)?;
    let len = first.as_ref().len();
    if len == 0 {
        return Err(RecordError::Empty);
    }
    let mut acc = RecordAccumulator::new(len, lag);
    for (index, t) in trajectories.iter().enumerate() {
        let t = t.as_ref();
        if t.len() != len {
            return Err(RecordError::Ragged {
                index,
                expected: len,
                found: t.len(),
            });
        }
        acc.observe_unchecked(t);
    }
    Ok(acc)
}

pub fn rate_curve<T: AsRef<[f64]>>(trajectories: &[T], direction: Direction) -> Result<RecordRateCurve, RecordError> {
    Ok(accumulate(trajectories, 1)?.curve(direction))
}

/// Probability that a `direction` record is followed by a `follow` record
/// within `lag` steps. `None` when no record has a complete window.
pub fn conditional_record_prob<T: AsRef<[f64]>>(
    trajectories: &[T],
    direction: Direction,
    follow: Direction,
    lag: usize,
) -> Result<Option<Proportion>, RecordError> {
    if lag == 0 {
        return Err(RecordError::ZeroLag);
    }
    Ok(accumulate(trajectories, lag)?.conditional(direction, follow))
}

pub fn record_number_distribution<T: AsRef<[f64]>>(
    trajectories: &[T],
    direction: Direction,
) -> Result<RecordNumberHistogram, RecordError> {
    Ok(accumulate(trajectories, 1)?.record_numbers(direction))
}

/// One bin of the normalized record rate `n p_n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizedRateBin {
    pub start: usize,
    pub end: usize,
    pub value: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizedRateReport {
    pub direction: Direction,
    pub bin_length: usize,
    pub series: usize,
    pub bins: Vec<NormalizedRateBin>,
}

impl NormalizedRateReport {
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "direction,start,end,value,stderr")?;
        for b in &self.bins {
            writeln!(out, "{},{},{},{},{}", self.direction.as_str(), b.start, b.end, b.value, b.stderr)?;
        }
        Ok(())
    }
}

/// Binned normalized record rate. For the bin `[s, s+L)` each series
/// contributes `sum_{n in bin} n * [record at n] / L`; the bin value is the
/// average over series, with the standard error of that average. An i.i.d.
/// sequence gives values near 1.
pub fn normalized_return_rate<T: AsRef<[f64]>>(
    series: &[T],
    bin_length: usize,
    direction: Direction,
) -> Result<NormalizedRateReport, RecordError> {
    let first = series.first().ok_or(RecordError::NoTrajectories)?;
    let len = first.as_ref().len();
    if bin_length == 0 || bin_length > len {
        return Err(RecordError::BinTooLong { bin: bin_length, len });
    }
    let nbins = len / bin_length;
    let mut sums = vec![0.0; nbins];
    let mut sq = vec![0.0; nbins];
    let mut per_bin = vec![0.0; nbins];
    for (index, s) in series.iter().enumerate() {
        let s = s.as_ref();
        if s.len() != len {
            return Err(RecordError::Ragged {
                index,
                expected: len,
                found: s.len(),
            });
        }
        per_bin.iter_mut().for_each(|v| *v = 0.0);
        scan_records(s, |i, up, down| {
            let hit = match direction {
                Direction::Upper => up,
                Direction::Lower => down,
            };
            let b = i / bin_length;
            if hit && b < nbins {
                per_bin[b] += i as f64;
            }
        });
        for b in 0..nbins {
            let v = per_bin[b] / bin_length as f64;
            sums[b] += v;
            sq[b] += v * v;
        }
    }
    let m = series.len() as f64;
    let bins = (0..nbins)
        .map(|b| {
            let mean = sums[b] / m;
            let stderr = if series.len() > 1 {
                ((sq[b] - m * mean * mean).max(0.0) / (m - 1.0) / m).sqrt()
            } else {
                0.0
            };
            NormalizedRateBin {
                start: b * bin_length,
                end: (b + 1) * bin_length,
                value: mean,
                stderr,
            }
        })
        .collect();
    Ok(NormalizedRateReport {
        direction,
        bin_length,
        series: series.len(),
        bins,
    })
}

/// A trading day and how many series set a record on it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordDay {
    pub date: NaiveDate,
    pub index: usize,
    pub count: usize,
}

/// The `k` days on which most series set a record (index 0 excluded),
/// listed chronologically. Ties in count prefer the earlier day.
pub fn top_record_days<T: AsRef<[f64]>>(
    series: &[T],
    dates: &[NaiveDate],
    direction: Direction,
    k: usize,
) -> Result<Vec<RecordDay>, RecordError> {
    let mut per_day = vec![0usize; dates.len()];
    for s in series {
        let s = s.as_ref();
        if s.len() != dates.len() {
            return Err(RecordError::DateMismatch {
                dates: dates.len(),
                values: s.len(),
            });
        }
        scan_records(s, |i, up, down| {
            let hit = match direction {
                Direction::Upper => up,
                Direction::Lower => down,
            };
            if hit && i > 0 {
                per_day[i] += 1;
            }
        });
    }
    let mut order: Vec<usize> = (1..dates.len()).filter(|&i| per_day[i] > 0).collect();
    order.sort_by(|&a, &b| per_day[b].cmp(&per_day[a]).then(a.cmp(&b)));
    order.truncate(k);
    order.sort_unstable();
    Ok(order
        .into_iter()
        .map(|i| RecordDay {
            date: dates[i],
            index: i,
            count: per_day[i],
        })
        .collect())
}

/// Record counts per weekday (Monday to Friday).
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WeeklyRecordHistogram {
    pub upper: [u64; 5],
    pub lower: [u64; 5],
}

pub const WEEKDAY_NAMES: [&str; 5] = ["Monday", "Tuesday", "Wednesday", "Thursday", "Friday"];

fn weekday_slot(date: NaiveDate) -> Result<usize, RecordError> {
    match date.weekday() {
        Weekday::Sat | Weekday::Sun => Err(RecordError::Weekend(date)),
        w => Ok(w.num_days_from_monday() as usize),
    }
}

impl WeeklyRecordHistogram {
    /// Adds the records of one series (index 0 excluded).
    pub fn add(&mut self, records: &RecordSeries, dates: &[NaiveDate]) -> Result<(), RecordError> {
        if records.upper_flags.len() != dates.len() {
            return Err(RecordError::DateMismatch {
                dates: dates.len(),
                values: records.upper_flags.len(),
            });
        }
        let slots = dates.iter().map(|d| weekday_slot(*d)).collect::<Result<Vec<_>, _>>()?;
        for (i, slot) in slots.into_iter().enumerate().skip(1) {
            self.upper[slot] += records.upper_flags[i] as u64;
            self.lower[slot] += records.lower_flags[i] as u64;
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &Self) {
        add_into(&mut self.upper, &other.upper);
        add_into(&mut self.lower, &other.lower);
    }

    pub fn counts(&self, direction: Direction) -> &[u64; 5] {
        match direction {
            Direction::Upper => &self.upper,
            Direction::Lower => &self.lower,
        }
    }

    /// Counts divided by the Monday count; `None` when Monday has none.
    pub fn ratios(&self, direction: Direction) -> Option<[f64; 5]> {
        let c = self.counts(direction);
        if c[0] == 0 {
            return None;
        }
        Some(c.map(|x| x as f64 / c[0] as f64))
    }

    /// Poisson-style standard error of each Monday-relative ratio.
    pub fn ratio_stderr(&self, direction: Direction) -> Option<[f64; 5]> {
        let c = self.counts(direction);
        let r = self.ratios(direction)?;
        Some(std::array::from_fn(|i| {
            if c[i] == 0 {
                0.0
            } else {
                r[i] * (1.0 / c[i] as f64 + 1.0 / c[0] as f64).sqrt()
            }
        }))
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "weekday,upper,lower,upper_ratio,lower_ratio")?;
        let ru = self.ratios(Direction::Upper);
        let rl = self.ratios(Direction::Lower);
        let fmt = |r: Option<[f64; 5]>, i: usize| r.map(|r| r[i].to_string()).unwrap_or_default();
        for (i, name) in WEEKDAY_NAMES.iter().enumerate() {
            writeln!(out, "{name},{},{},{},{}", self.upper[i], self.lower[i], fmt(ru, i), fmt(rl, i))?;
        }
        Ok(())
    }
}

pub fn weekly_histogram(records: &RecordSeries, dates: &[NaiveDate]) -> Result<WeeklyRecordHistogram, RecordError> {
    let mut h = WeeklyRecordHistogram::default();
    h.add(records, dates)?;
    Ok(h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::DistributionSpec;
    use crate::montecarlo::substream;
    use crate::processes::ProcessConfig;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn spec_examples() {
        let r = detect_records(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(r.indices(Direction::Upper), vec![0, 1, 2]);
        assert_eq!(r.indices(Direction::Lower), vec![0]);
        let r = detect_records(&[3.0, 1.0, 2.0]).unwrap();
        assert_eq!((r.upper_count, r.lower_count), (1, 2));
        assert_eq!(r.indices(Direction::Lower), vec![0, 1]);
        let r = detect_records(&[5.0, 5.0, 5.0]).unwrap();
        assert_eq!((r.upper_count, r.lower_count), (1, 1));
        assert_eq!(detect_records(&[]), Err(RecordError::Empty));
        assert_eq!(detect_records(&[0.0, f64::NAN]), Err(RecordError::NonFinite(1)));
    }

    #[test]
    fn ragged_input_rejected() {
        let t = vec![vec![0.0, 1.0], vec![0.0]];
        assert!(matches!(rate_curve(&t, Direction::Upper), Err(RecordError::Ragged { index: 1, .. })));
        let empty: Vec<Vec<f64>> = vec![];
        assert_eq!(rate_curve(&empty, Direction::Upper), Err(RecordError::NoTrajectories));
    }

    #[test]
    fn single_trajectory_rate_at_zero_is_one() {
        let c = rate_curve(&[vec![0.0, -1.0, 2.0]], Direction::Upper).unwrap();
        assert_eq!(c.rate, vec![1.0, 0.0, 1.0]);
        assert_eq!(c.mean_records, vec![1.0, 1.0, 2.0]);
    }

    #[test]
    fn iid_rate_matches_inverse_index() {
        let cfg = ProcessConfig::iid(DistributionSpec::standard_normal());
        let gen = cfg.generator().unwrap();
        let mut acc = RecordAccumulator::new(101, 1);
        let mut buf = Vec::new();
        for r in 0..200_000 {
            gen.fill(100, &mut substream(11, r), &mut buf);
            acc.observe(&buf);
        }
        for dir in Direction::BOTH {
            let c = acc.curve(dir);
            let mut inside = 0;
            for n in 0..=100 {
                let exact = 1.0 / (n as f64 + 1.0);
                let se = (exact * (1.0 - exact) / 200_000.0).sqrt();
                if (c.rate[n] - exact).abs() <= 3.0 * se {
                    inside += 1;
                }
            }
            assert!(inside >= 97, "{dir:?}: {inside}/101 within 3 stderr");
        }
    }

    #[test]
    fn walk_rate_at_two_matches_survival_enumeration() {
        // second estimate from uniform jumps on an unrelated generator
        let mut rng = rand::rngs::StdRng::seed_from_u64(2024);
        let m = 400_000u64;
        let mut direct = 0u64;
        for _ in 0..m {
            let a: f64 = rng.random::<f64>() - 0.5;
            let b: f64 = rng.random::<f64>() - 0.5;
            if a + b > a.max(0.0) {
                direct += 1;
            }
        }
        let gen = ProcessConfig::random_walk(DistributionSpec::standard_normal(), 0.0)
            .generator()
            .unwrap();
        let mut acc = RecordAccumulator::new(3, 1);
        let mut buf = Vec::new();
        for r in 0..m {
            gen.fill(2, &mut substream(5, r), &mut buf);
            acc.observe(&buf);
        }
        let c = acc.curve(Direction::Upper);
        let se = (0.375f64 * 0.625 / m as f64).sqrt();
        assert!((c.rate[2] - 0.375).abs() < 3.0 * se, "{}", c.rate[2]);
        assert!((direct as f64 / m as f64 - 0.375).abs() < 3.0 * se);
        assert!((c.rate[1] - 0.5).abs() < 3.0 * (0.25 / m as f64).sqrt());
    }

    use rand::SeedableRng;

    #[test]
    fn conditional_examples() {
        let inc: Vec<f64> = (0..50).map(|i| i as f64).collect();
        let p = conditional_record_prob(&[inc], Direction::Upper, Direction::Upper, 1)
            .unwrap()
            .unwrap();
        assert_eq!(p.value, 1.0);
        // lag longer than the series: no complete window
        assert_eq!(
            conditional_record_prob(&[vec![0.0, 1.0]], Direction::Upper, Direction::Upper, 3).unwrap(),
            None
        );
        assert_eq!(
            conditional_record_prob(&[vec![0.0, 1.0]], Direction::Upper, Direction::Upper, 0),
            Err(RecordError::ZeroLag)
        );
    }

    #[test]
    fn conditional_with_lag_counts_window() {
        // records at 0, 2, 5 (upper); window of 2 after 0 reaches 2, after 2 misses 5
        let v = vec![0.0, -1.0, 1.0, 0.5, 0.2, 3.0, 2.0, 2.5];
        let p = conditional_record_prob(&[v], Direction::Upper, Direction::Upper, 2)
            .unwrap()
            .unwrap();
        assert_eq!((p.successes, p.trials), (1, 3));
    }

    #[test]
    fn biased_walk_conditional_probability() {
        let c = 0.02;
        let gen = ProcessConfig::random_walk(DistributionSpec::standard_normal(), c)
            .generator()
            .unwrap();
        let mut acc = RecordAccumulator::new(101, 1);
        let mut buf = Vec::new();
        for r in 0..100_000 {
            gen.fill(100, &mut substream(77, r), &mut buf);
            acc.observe(&buf);
        }
        let p = acc.conditional(Direction::Upper, Direction::Upper).unwrap();
        let target = 0.5 + c / (2.0 * std::f64::consts::PI).sqrt();
        assert!((p.value - target).abs() < 3.0 * p.stderr, "{} vs {target} ± {}", p.value, p.stderr);
    }

    #[test]
    fn one_step_walk_record_numbers() {
        let gen = ProcessConfig::random_walk(DistributionSpec::standard_normal(), 0.0)
            .generator()
            .unwrap();
        let mut acc = RecordAccumulator::new(2, 1);
        let mut buf = Vec::new();
        for r in 0..100_000 {
            gen.fill(1, &mut substream(3, r), &mut buf);
            acc.observe(&buf);
        }
        let h = acc.record_numbers(Direction::Upper);
        assert_eq!(h.counts[0], 0);
        assert_eq!(h.counts[1] + h.counts[2], 100_000);
        assert!((h.pmf(1) - 0.5).abs() < 4.0 * h.pmf_stderr(1));
    }

    #[test]
    fn coarse_grained_tv_of_exact_pmf_is_zero() {
        let h = RecordNumberHistogram {
            direction: Direction::Upper,
            steps: 3,
            counts: vec![0, 2, 1, 1],
            total: 4,
        };
        let model = |m: usize| [0.0, 0.5, 0.25, 0.25].get(m).copied().unwrap_or(0.0);
        assert!(h.total_variation(model, 1.0, 1.0).unwrap() < 1e-15);
        let off = |m: usize| if m == 1 { 1.0 } else { 0.0 };
        assert!((h.total_variation(off, 1.0, 1.0).unwrap() - 0.5).abs() < 1e-15);
        let d = h.rescaled(2.0, 1.0).unwrap();
        assert_eq!(d.edges, vec![0.0, 1.0, 2.0]);
        assert_eq!(d.probability, vec![0.5, 0.5]);
        assert_eq!(h.mode(), Some(1));
    }

    #[test]
    fn normalized_rate_on_constructed_panel() {
        // each series has its only in-bin upper record on day 180 of bin [0, 200)
        let len = 400;
        let d = 180;
        let series: Vec<Vec<f64>> = (0..3)
            .map(|_| (0..len).map(|i| if i >= d { 1.0 } else { -1.0 }).collect())
            .collect();
        let rep = normalized_return_rate(&series, 200, Direction::Upper).unwrap();
        assert_eq!(rep.bins.len(), 2);
        assert_eq!(rep.bins[0].value, d as f64 / 200.0);
        assert_eq!(rep.bins[0].stderr, 0.0);
        assert_eq!(rep.bins[1].value, 0.0);
        assert!(matches!(
            normalized_return_rate(&series, 401, Direction::Upper),
            Err(RecordError::BinTooLong { .. })
        ));
    }

    #[test]
    fn normalized_rate_iid_baseline() {
        let spec = DistributionSpec::standard_normal();
        let mut series = Vec::new();
        for r in 0..2000 {
            let mut rng = substream(21, r);
            let mut s = vec![0.0];
            s.extend((0..1000).map(|_| spec.sample(&mut rng)));
            series.push(s);
        }
        let rep = normalized_return_rate(&series, 250, Direction::Upper).unwrap();
        for b in &rep.bins[1..] {
            assert!((b.value - 1.0).abs() < 3.0 * b.stderr, "{b:?}");
        }
    }

    fn weekdays(start: NaiveDate, n: usize) -> Vec<NaiveDate> {
        start
            .iter_days()
            .filter(|d| !matches!(d.weekday(), Weekday::Sat | Weekday::Sun))
            .take(n)
            .collect()
    }

    #[test]
    fn weekly_examples() {
        let monday = NaiveDate::from_ymd_opt(2024, 1, 1).unwrap();
        let dates = weekdays(monday, 15);
        // upper records only on Mondays (indices 5, 10)
        let v: Vec<f64> = (0..15).map(|i| (i / 5) as f64).collect();
        let r = detect_records(&v).unwrap();
        let h = weekly_histogram(&r, &dates).unwrap();
        assert_eq!(h.ratios(Direction::Upper).unwrap(), [1.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(h.ratios(Direction::Lower), None);

        // Friday half of Monday: 4 Monday records, 2 Friday records
        let dates = weekdays(monday, 25);
        let mut flags = vec![false; 25];
        for i in [5, 10, 15, 20, 4, 9] {
            flags[i] = true;
        }
        let rs = RecordSeries {
            upper_count: 7,
            lower_count: 1,
            upper_flags: flags,
            lower_flags: vec![false; 25],
        };
        let h = weekly_histogram(&rs, &dates).unwrap();
        assert_eq!(h.ratios(Direction::Upper).unwrap()[4], 0.5);

        let sat = NaiveDate::from_ymd_opt(2024, 1, 6).unwrap();
        let r = detect_records(&[0.0, 1.0]).unwrap();
        assert_eq!(weekly_histogram(&r, &[monday, sat]), Err(RecordError::Weekend(sat)));
        assert!(matches!(weekly_histogram(&r, &[monday]), Err(RecordError::DateMismatch { .. })));
    }

    #[test]
    fn weekly_iid_is_flat() {
        // start dates rotate through the week so every weekday sees every
        // position in the series equally often
        let monday = NaiveDate::from_ymd_opt(2001, 1, 1).unwrap();
        let spec = DistributionSpec::standard_normal();
        let mut h = WeeklyRecordHistogram::default();
        for r in 0..20_000u64 {
            let start = monday + chrono::Days::new(r % 5);
            let dates = weekdays(start, 250);
            let mut rng = substream(1, r);
            let v: Vec<f64> = (0..250).map(|_| spec.sample(&mut rng)).collect();
            h.add(&detect_records(&v).unwrap(), &dates).unwrap();
        }
        for dir in Direction::BOTH {
            let r = h.ratios(dir).unwrap();
            let se = h.ratio_stderr(dir).unwrap();
            for i in 1..5 {
                assert!((r[i] - 1.0).abs() < 4.0 * se[i], "{dir:?} {i}: {} ± {}", r[i], se[i]);
            }
        }
    }

    #[test]
    fn top_days_are_chronological() {
        let d0 = NaiveDate::from_ymd_opt(2024, 1, 1).unwrap();
        let dates = weekdays(d0, 6);
        let series = vec![
            vec![0.0, 1.0, 0.5, 2.0, 1.0, 3.0],
            vec![0.0, -1.0, 0.5, 2.0, 1.0, 3.0],
            vec![0.0, -1.0, -1.0, -1.0, -1.0, 3.0],
        ];
        let top = top_record_days(&series, &dates, Direction::Upper, 2).unwrap();
        let idx: Vec<usize> = top.iter().map(|d| d.index).collect();
        assert_eq!(idx, vec![3, 5]);
        assert_eq!(top[1].count, 3);
    }

    proptest! {
        #[test]
        fn negation_swaps_directions(v in prop::collection::vec(-1e6f64..1e6, 1..200)) {
            let r = detect_records(&v).unwrap();
            let neg: Vec<f64> = v.iter().map(|x| -x).collect();
            let s = detect_records(&neg).unwrap();
            prop_assert_eq!(&r.upper_flags, &s.lower_flags);
            prop_assert_eq!(&r.lower_flags, &s.upper_flags);
        }

        #[test]
        fn monotone_transform_keeps_flags(v in prop::collection::vec(0.001f64..1e6, 1..200)) {
            let r = detect_records(&v).unwrap();
            let logged: Vec<f64> = v.iter().map(|x| x.ln()).collect();
            prop_assert_eq!(r, detect_records(&logged).unwrap());
        }

        #[test]
        fn count_bound(v in prop::collection::vec(-10i32..10, 1..300)) {
            let v: Vec<f64> = v.into_iter().map(f64::from).collect();
            let r = detect_records(&v).unwrap();
            prop_assert!(r.upper_count + r.lower_count <= v.len() + 1);
        }

        #[test]
        fn cumulative_rate_is_mean_count(seed in 0u64..1000, reps in 1usize..40, len in 1usize..60) {
            let mut rng = substream(seed, 0);
            let ts: Vec<Vec<f64>> = (0..reps)
                .map(|_| (0..len).map(|_| rng.random_range(-3i32..=3) as f64).collect())
                .collect();
            for dir in Direction::BOTH {
                let c = rate_curve(&ts, dir).unwrap();
                let total: usize = ts.iter().map(|t| detect_records(t).unwrap().count(dir)).sum();
                prop_assert_eq!(*c.mean_records.last().unwrap(), total as f64 / reps as f64);
                let h = record_number_distribution(&ts, dir).unwrap();
                prop_assert!((h.mean() - total as f64 / reps as f64).abs() < 1e-12);
            }
        }
    }
}
