//! Daily closing-price panels: CSV input and output, log prices and returns,
//! interval segmentation, detrending and volatility normalization.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DATE_FORMAT: &str = "%Y-%m-%d";

/// A problem with one input row; rows are numbered from 1 at the header.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowIssue {
    pub row: usize,
    pub message: String,
}

impl fmt::Display for RowIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "row {}: {}", self.row, self.message)
    }
}

fn list_issues(issues: &[RowIssue]) -> String {
    const SHOWN: usize = 10;
    let mut s: Vec<String> = issues.iter().take(SHOWN).map(|i| i.to_string()).collect();
    if issues.len() > SHOWN {
        s.push(format!("... and {} more", issues.len() - SHOWN));
    }
    s.join("; ")
}

#[derive(Debug, Error)]
pub enum DataError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("{} invalid row(s): {}", .0.len(), list_issues(.0))]
    Rows(Vec<RowIssue>),
    #[error("missing column `{0}` in header")]
    MissingColumn(&'static str),
    #[error("panel has no complete series")]
    Empty,
    #[error("duplicate ticker `{0}`")]
    DuplicateTicker(String),
    #[error("ticker `{ticker}` has {found} prices for {expected} dates")]
    Ragged {
        ticker: String,
        expected: usize,
        found: usize,
    },
    #[error("price {value} of `{ticker}` on day {day} is not positive and finite")]
    InvalidPrice { ticker: String, day: usize, value: f64 },
    #[error("dates are not strictly increasing at position {0}")]
    NonMonotoneDates(usize),
    #[error("series needs at least {needed} points, has {found}")]
    TooShort { needed: usize, found: usize },
    #[error("interval length {length} does not fit into {total} days")]
    IntervalTooLong { length: usize, total: usize },
    #[error("unknown {kind} `{value}`")]
    UnknownOption { kind: &'static str, value: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CsvFormat {
    /// `date,ticker,close`, one row per observation.
    Long,
    /// `date,<ticker>,<ticker>,...`, one row per date.
    Wide,
}

impl FromStr for CsvFormat {
    type Err = DataError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "long" => Ok(Self::Long),
            "wide" => Ok(Self::Wide),
            _ => Err(DataError::UnknownOption {
                kind: "csv format",
                value: s.to_string(),
            }),
        }
    }
}

/// Tickers sharing one grid of trading dates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StockPanel {
    tickers: Vec<String>,
    dates: Vec<NaiveDate>,
    /// `closes[ticker][day]`
    closes: Vec<Vec<f64>>,
}

/// A loaded panel plus the non-fatal problems found while loading.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedPanel {
    pub panel: StockPanel,
    pub warnings: Vec<String>,
}

fn parse_date(s: &str) -> Result<NaiveDate, String> {
    NaiveDate::parse_from_str(s.trim(), DATE_FORMAT).map_err(|e| format!("bad date `{s}`: {e}"))
}

fn parse_price(s: &str) -> Result<f64, String> {
    let v: f64 = s.trim().parse().map_err(|_| format!("bad price `{s}`"))?;
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(format!("price {v} is not positive"))
    }
}

impl StockPanel {
    pub fn new(tickers: Vec<String>, dates: Vec<NaiveDate>, closes: Vec<Vec<f64>>) -> Result<Self, DataError> {
        if tickers.is_empty() || dates.is_empty() {
            return Err(DataError::Empty);
        }
        if let Some(i) = dates.windows(2).position(|w| w[1] <= w[0]) {
            return Err(DataError::NonMonotoneDates(i + 1));
        }
        let mut seen = std::collections::HashSet::new();
        for t in &tickers {
            if !seen.insert(t) {
                return Err(DataError::DuplicateTicker(t.clone()));
            }
        }
        if closes.len() != tickers.len() {
            return Err(DataError::Ragged {
                ticker: "<panel>".into(),
                expected: tickers.len(),
                found: closes.len(),
            });
        }
        for (t, c) in tickers.iter().zip(&closes) {
            if c.len() != dates.len() {
                return Err(DataError::Ragged {
                    ticker: t.clone(),
                    expected: dates.len(),
                    found: c.len(),
                });
            }
            if let Some(day) = c.iter().position(|v| !(*v > 0.0 && v.is_finite())) {
                return Err(DataError::InvalidPrice {
                    ticker: t.clone(),
                    day,
                    value: c[day],
                });
            }
        }
        Ok(Self { tickers, dates, closes })
    }

    pub fn tickers(&self) -> &[String] {
        &self.tickers
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn closes(&self, ticker: usize) -> &[f64] {
        &self.closes[ticker]
    }

    pub fn width(&self) -> usize {
        self.tickers.len()
    }

    pub fn days(&self) -> usize {
        self.dates.len()
    }

    pub fn ticker_index(&self, name: &str) -> Option<usize> {
        self.tickers.iter().position(|t| t == name)
    }

    /// Keeps only the listed tickers, in the given order.
    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            tickers: indices.iter().map(|&i| self.tickers[i].clone()).collect(),
            dates: self.dates.clone(),
            closes: indices.iter().map(|&i| self.closes[i].clone()).collect(),
        }
    }

    /// `s_n = ln(S_n / S_0)`.
    pub fn log_prices(&self, ticker: usize) -> Vec<f64> {
        let c = &self.closes[ticker];
        let l0 = c[0].ln();
        c.iter().map(|v| v.ln() - l0).collect()
    }

    /// `delta_n = ln(S_n / S_{n-1})`, one shorter than the price series.
    pub fn log_returns(&self, ticker: usize) -> Vec<f64> {
        self.closes[ticker].windows(2).map(|w| (w[1] / w[0]).ln()).collect()
    }

    /// `Delta_n = S_n - S_{n-1}`.
    pub fn price_differences(&self, ticker: usize) -> Vec<f64> {
        self.closes[ticker].windows(2).map(|w| w[1] - w[0]).collect()
    }

    pub fn read_csv<R: Read>(reader: R, format: CsvFormat) -> Result<LoadedPanel, DataError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        match format {
            CsvFormat::Long => read_long(&mut rdr),
            CsvFormat::Wide => read_wide(&mut rdr),
        }
    }

    pub fn load_csv<P: AsRef<Path>>(path: P, format: CsvFormat) -> Result<LoadedPanel, DataError> {
        let file = std::fs::File::open(path)?;
        Self::read_csv(std::io::BufReader::new(file), format)
    }

    /// Prices are written with the shortest representation that parses back
    /// to the same `f64`, so reading the output reproduces the panel exactly.
    pub fn write_csv<W: Write>(&self, out: W, format: CsvFormat) -> Result<(), DataError> {
        let mut w = csv::Writer::from_writer(out);
        match format {
            CsvFormat::Long => {
                w.write_record(["date", "ticker", "close"])?;
                for (d, date) in self.dates.iter().enumerate() {
                    let ds = date.format(DATE_FORMAT).to_string();
                    for (t, name) in self.tickers.iter().enumerate() {
                        w.write_record([ds.as_str(), name.as_str(), &self.closes[t][d].to_string()])?;
                    }
                }
            }
            CsvFormat::Wide => {
                let mut header = vec!["date".to_string()];
                header.extend(self.tickers.iter().cloned());
                w.write_record(&header)?;
                for (d, date) in self.dates.iter().enumerate() {
                    let mut row = vec![date.format(DATE_FORMAT).to_string()];
                    row.extend(self.closes.iter().map(|c| c[d].to_string()));
                    w.write_record(&row)?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }
}

fn read_long<R: Read>(rdr: &mut csv::Reader<R>) -> Result<LoadedPanel, DataError> {
    let headers = rdr.headers()?.clone();
    let col = |name: &'static str| {
        headers
            .iter()
            .position(|h| h.eq_ignore_ascii_case(name))
            .ok_or(DataError::MissingColumn(name))
    };
    let (dc, tc, cc) = (col("date")?, col("ticker")?, col("close")?);
    let mut issues = Vec::new();
    let mut by_ticker: BTreeMap<String, Vec<(NaiveDate, f64)>> = BTreeMap::new();
    let mut order: Vec<String> = Vec::new();
    let mut seen: HashMap<(String, NaiveDate), usize> = HashMap::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 2;
        let rec = rec?;
        let date = match parse_date(rec.get(dc).unwrap_or("")) {
            Ok(d) => d,
            Err(m) => {
                issues.push(RowIssue { row, message: m });
                continue;
            }
        };
        let ticker = rec.get(tc).unwrap_or("").to_string();
        if ticker.is_empty() {
            issues.push(RowIssue {
                row,
                message: "empty ticker".into(),
            });
            continue;
        }
        let price = match parse_price(rec.get(cc).unwrap_or("")) {
            Ok(p) => p,
            Err(m) => {
                issues.push(RowIssue { row, message: m });
                continue;
            }
        };
        if let Some(first) = seen.insert((ticker.clone(), date), row) {
            issues.push(RowIssue {
                row,
                message: format!("duplicate ({date}, {ticker}), first seen in row {first}"),
            });
            continue;
        }
        let entry = by_ticker.entry(ticker.clone()).or_insert_with(|| {
            order.push(ticker.clone());
            Vec::new()
        });
        if let Some(&(last, _)) = entry.last() {
            if date <= last {
                issues.push(RowIssue {
                    row,
                    message: format!("date {date} of {ticker} is not after {last}"),
                });
                continue;
            }
        }
        entry.push((date, price));
    }
    if !issues.is_empty() {
        return Err(DataError::Rows(issues));
    }
    let mut grid: Vec<NaiveDate> = by_ticker.values().flatten().map(|(d, _)| *d).collect();
    grid.sort_unstable();
    grid.dedup();
    let mut warnings = Vec::new();
    let mut tickers = Vec::new();
    let mut closes = Vec::new();
    for t in order {
        let obs = &by_ticker[&t];
        if obs.len() != grid.len() {
            let w = format!("dropping `{t}`: {} of {} dates present", obs.len(), grid.len());
            log::warn!("{w}");
            warnings.push(w);
            continue;
        }
        closes.push(obs.iter().map(|(_, p)| *p).collect());
        tickers.push(t);
    }
    Ok(LoadedPanel {
        panel: StockPanel::new(tickers, grid, closes)?,
        warnings,
    })
}

fn read_wide<R: Read>(rdr: &mut csv::Reader<R>) -> Result<LoadedPanel, DataError> {
    let headers = rdr.headers()?.clone();
    if !headers.get(0).is_some_and(|h| h.eq_ignore_ascii_case("date")) {
        return Err(DataError::MissingColumn("date"));
    }
    let names: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
    let mut issues = Vec::new();
    let mut dates = Vec::new();
    let mut cols: Vec<Vec<Option<f64>>> = vec![Vec::new(); names.len()];
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 2;
        let rec = rec?;
        if rec.len() != names.len() + 1 {
            issues.push(RowIssue {
                row,
                message: format!("{} fields, expected {}", rec.len(), names.len() + 1),
            });
            continue;
        }
        let date = match parse_date(&rec[0]) {
            Ok(d) => d,
            Err(m) => {
                issues.push(RowIssue { row, message: m });
                continue;
            }
        };
        if let Some(&last) = dates.last() {
            if date <= last {
                issues.push(RowIssue {
                    row,
                    message: format!("date {date} is not after {last}"),
                });
                continue;
            }
        }
        let mut cells = Vec::with_capacity(names.len());
        let mut bad = false;
        for (k, cell) in rec.iter().skip(1).enumerate() {
            if cell.is_empty() {
                cells.push(None);
                continue;
            }
            match parse_price(cell) {
                Ok(p) => cells.push(Some(p)),
                Err(m) => {
                    issues.push(RowIssue {
                        row,
                        message: format!("{}: {m}", names[k]),
                    });
                    bad = true;
                }
            }
        }
        if bad {
            continue;
        }
        dates.push(date);
        for (c, v) in cols.iter_mut().zip(cells) {
            c.push(v);
        }
    }
    if !issues.is_empty() {
        return Err(DataError::Rows(issues));
    }
    let mut warnings = Vec::new();
    let mut tickers = Vec::new();
    let mut closes = Vec::new();
    for (name, col) in names.into_iter().zip(cols) {
        match col.into_iter().collect::<Option<Vec<f64>>>() {
            Some(c) => {
                tickers.push(name);
                closes.push(c);
            }
            None => {
                let w = format!("dropping `{name}`: gaps in the date grid");
                log::warn!("{w}");
                warnings.push(w);
            }
        }
    }
    Ok(LoadedPanel {
        panel: StockPanel::new(tickers, dates, closes)?,
        warnings,
    })
}

/// Least-squares line `y ~ intercept + slope * i` over `i = 0..len`.
pub fn ols_line(y: &[f64]) -> (f64, f64) {
    let n = y.len() as f64;
    let mean_x = (n - 1.0) / 2.0;
    let mean_y = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for (i, v) in y.iter().enumerate() {
        let dx = i as f64 - mean_x;
        sxy += dx * (v - mean_y);
        sxx += dx * dx;
    }
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    (mean_y - slope * mean_x, slope)
}

/// Sample standard deviation (n - 1 denominator).
pub fn sample_std(x: &[f64]) -> f64 {
    if x.len() < 2 {
        return 0.0;
    }
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// Drift and volatility of a log-price path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftEstimate {
    /// Least-squares slope of the path against the day index.
    pub c: f64,
    /// Sample standard deviation of the increments.
    pub sigma: f64,
}

impl DriftEstimate {
    pub fn is_constant(&self) -> bool {
        self.sigma == 0.0
    }

    pub fn normalized_drift(&self) -> Option<f64> {
        (self.sigma > 0.0).then(|| self.c / self.sigma)
    }
}

pub fn estimate_drift(path: &[f64]) -> Result<DriftEstimate, DataError> {
    if path.len() < 3 {
        return Err(DataError::TooShort {
            needed: 3,
            found: path.len(),
        });
    }
    let (_, c) = ols_line(path);
    let inc: Vec<f64> = path.windows(2).map(|w| w[1] - w[0]).collect();
    let sigma = sample_std(&inc);
    if sigma == 0.0 {
        log::warn!("constant increments: sigma = 0");
    }
    Ok(DriftEstimate { c, sigma })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetrendMode {
    None,
    /// Subtract each series' own least-squares trend.
    PerSeries,
    /// Subtract the trend averaged over all series.
    IndexMean,
}

impl FromStr for DetrendMode {
    type Err = DataError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "none" => Ok(Self::None),
            "per_series" => Ok(Self::PerSeries),
            "index_mean" => Ok(Self::IndexMean),
            _ => Err(DataError::UnknownOption {
                kind: "detrend mode",
                value: s.to_string(),
            }),
        }
    }
}

/// Subtracts `slope * i` from each path: its own slope, or the mean slope of
/// all paths. Returns the slopes removed.
pub fn detrend(paths: &mut [Vec<f64>], mode: DetrendMode) -> Result<Vec<f64>, DataError> {
    if mode == DetrendMode::None {
        return Ok(vec![0.0; paths.len()]);
    }
    if let Some(p) = paths.iter().find(|p| p.len() < 3) {
        return Err(DataError::TooShort {
            needed: 3,
            found: p.len(),
        });
    }
    let slopes: Vec<f64> = paths.iter().map(|p| ols_line(p).1).collect();
    let removed = match mode {
        DetrendMode::PerSeries => slopes,
        DetrendMode::IndexMean => {
            let m = slopes.iter().sum::<f64>() / slopes.len().max(1) as f64;
            vec![m; paths.len()]
        }
        DetrendMode::None => unreachable!(),
    };
    for (p, s) in paths.iter_mut().zip(&removed) {
        for (i, v) in p.iter_mut().enumerate() {
            *v -= s * i as f64;
        }
    }
    Ok(removed)
}

/// Rescales a path so its increments have sample standard deviation 1.
/// Returns the divisor, or `None` (path untouched) when the increments are
/// constant.
pub fn normalize_unit_std(path: &mut [f64]) -> Option<f64> {
    let inc: Vec<f64> = path.windows(2).map(|w| w[1] - w[0]).collect();
    let sigma = sample_std(&inc);
    if !(sigma > 0.0) {
        log::warn!("skipping normalization of a path with constant increments");
        return None;
    }
    let origin = path.first().copied().unwrap_or(0.0);
    for v in path.iter_mut() {
        *v = origin + (*v - origin) / sigma;
    }
    Some(sigma)
}

/// Consecutive non-overlapping intervals of `length` days.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntervalScheme {
    pub length: usize,
    pub count: usize,
}

impl IntervalScheme {
    /// As many whole intervals as fit into `total` days.
    pub fn fit(total: usize, length: usize) -> Result<Self, DataError> {
        if length == 0 || length > total {
            return Err(DataError::IntervalTooLong { length, total });
        }
        Ok(Self {
            length,
            count: total / length,
        })
    }

    pub fn start(&self, k: usize) -> usize {
        k * self.length
    }
}

/// Preprocessing choices applied per interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Preprocessing {
    pub interval: usize,
    pub detrend: DetrendMode,
    pub normalize: bool,
}

/// One interval of the panel after preprocessing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalData {
    pub index: usize,
    pub start: usize,
    pub dates: Vec<NaiveDate>,
    /// Ticker index of each row of `paths`.
    pub tickers: Vec<usize>,
    /// Log-price paths rebased to 0 at the interval start.
    pub paths: Vec<Vec<f64>>,
    /// Drift and volatility before detrending and normalization.
    pub fits: Vec<DriftEstimate>,
    /// Slope removed by detrending.
    pub removed_slope: Vec<f64>,
}

impl IntervalData {
    /// Increments of each path with a leading 0, so that return records
    /// compare against an initial zero return.
    pub fn return_series(&self) -> Vec<Vec<f64>> {
        self.paths
            .iter()
            .map(|p| {
                let mut r = Vec::with_capacity(p.len());
                r.push(0.0);
                r.extend(p.windows(2).map(|w| w[1] - w[0]));
                r
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreparedPanel {
    pub scheme: IntervalScheme,
    pub preprocessing: Preprocessing,
    pub intervals: Vec<IntervalData>,
    pub warnings: Vec<String>,
}

impl PreparedPanel {
    /// Mean over every (ticker, interval) pair of the fitted drift and
    /// volatility, and of the normalized drift `c / sigma`.
    pub fn average_fit(&self) -> (f64, f64, f64) {
        let fits: Vec<&DriftEstimate> = self.intervals.iter().flat_map(|iv| &iv.fits).collect();
        let n = fits.len().max(1) as f64;
        let c = fits.iter().map(|f| f.c).sum::<f64>() / n;
        let s = fits.iter().map(|f| f.sigma).sum::<f64>() / n;
        let norm: Vec<f64> = fits.iter().filter_map(|f| f.normalized_drift()).collect();
        let r = norm.iter().sum::<f64>() / norm.len().max(1) as f64;
        (c, s, r)
    }

    pub fn all_paths(&self) -> Vec<&[f64]> {
        self.intervals.iter().flat_map(|iv| iv.paths.iter().map(Vec::as_slice)).collect()
    }
}

fn keep_flagged<T>(v: Vec<T>, keep: &[bool]) -> Vec<T> {
    v.into_iter().zip(keep).filter(|(_, k)| **k).map(|(x, _)| x).collect()
}

/// Splits every log-price series into intervals, rebases each piece to 0,
/// then detrends and (optionally) normalizes it. Pieces with constant
/// prices cannot be normalized and are left out with a warning.
pub fn prepare(panel: &StockPanel, pre: Preprocessing) -> Result<PreparedPanel, DataError> {
    let scheme = IntervalScheme::fit(panel.days(), pre.interval)?;
    if pre.detrend != DetrendMode::None && pre.interval < 3 {
        return Err(DataError::TooShort {
            needed: 3,
            found: pre.interval,
        });
    }
    let logs: Vec<Vec<f64>> = (0..panel.width()).map(|t| panel.log_prices(t)).collect();
    let mut warnings = Vec::new();
    let mut intervals = Vec::with_capacity(scheme.count);
    for k in 0..scheme.count {
        let start = scheme.start(k);
        let end = start + scheme.length;
        let mut paths: Vec<Vec<f64>> = logs
            .iter()
            .map(|l| l[start..end].iter().map(|v| v - l[start]).collect())
            .collect();
        let fits = paths
            .iter()
            .map(|p| {
                if p.len() >= 3 {
                    estimate_drift(p)
                } else {
                    let inc: Vec<f64> = p.windows(2).map(|w| w[1] - w[0]).collect();
                    Ok(DriftEstimate {
                        c: inc.first().copied().unwrap_or(0.0),
                        sigma: sample_std(&inc),
                    })
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        let removed_slope = detrend(&mut paths, pre.detrend)?;
        let mut keep = vec![true; paths.len()];
        if pre.normalize {
            for (t, p) in paths.iter_mut().enumerate() {
                if normalize_unit_std(p).is_none() {
                    keep[t] = false;
                    warnings.push(format!(
                        "interval {k}: `{}` has constant prices and was skipped",
                        panel.tickers()[t]
                    ));
                }
            }
        }
        intervals.push(IntervalData {
            index: k,
            start,
            dates: panel.dates()[start..end].to_vec(),
            tickers: keep_flagged((0..panel.width()).collect(), &keep),
            paths: keep_flagged(paths, &keep),
            fits: keep_flagged(fits, &keep),
            removed_slope: keep_flagged(removed_slope, &keep),
        });
    }
    Ok(PreparedPanel {
        scheme,
        preprocessing: pre,
        intervals,
        warnings,
    })
}
