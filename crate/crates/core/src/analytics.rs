//! Closed-form and asymptotic record, ensemble and first-passage results.

use std::f64::consts::{FRAC_1_SQRT_2, LN_2, PI};

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;
use statrs::function::gamma::ln_gamma;
use thiserror::Error;

use crate::distributions::DistributionSpec;
use crate::records::Direction;

pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Above this value of `c sqrt(n) / sigma` the small-drift expansion is
/// reported as outside its range of validity.
pub const SMALL_DRIFT_LIMIT: f64 = 0.5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalyticError {
    #[error("sigma must be positive and finite, got {0}")]
    InvalidSigma(f64),
    #[error("drift must be positive for this series, got {0}")]
    NonPositiveDrift(f64),
    #[error("alpha must lie in [0, 1], got {0}")]
    AlphaOutOfRange(f64),
    #[error("ensemble size must be at least 2, got {0}")]
    EnsembleTooSmall(u64),
    #[error("n must be at least 1")]
    ZeroSteps,
    #[error("record rate must be positive and finite, got {0}")]
    InvalidRate(f64),
}

fn check_sigma(sigma: f64) -> Result<(), AnalyticError> {
    if sigma > 0.0 && sigma.is_finite() {
        Ok(())
    } else {
        Err(AnalyticError::InvalidSigma(sigma))
    }
}

fn signed(c: f64, direction: Direction) -> f64 {
    match direction {
        Direction::Upper => c,
        Direction::Lower => -c,
    }
}

// ---- i.i.d. ----

pub fn iid_rate(n: u64) -> f64 {
    1.0 / (n as f64 + 1.0)
}

/// Harmonic number `H_{n+1}`: expected records among `n + 1` entries.
pub fn iid_mean_records(n: u64) -> f64 {
    // summed from the small end for accuracy
    (1..=n + 1).rev().map(|k| 1.0 / k as f64).sum()
}

/// `ln n + gamma`.
pub fn iid_mean_records_asymptotic(n: u64) -> f64 {
    (n as f64).ln() + EULER_GAMMA
}

// ---- symmetric random walk ----

/// `C(2n, n) / 4^n`, the survival probability shared by all symmetric
/// continuous jump distributions. Equals the record rate at step `n`.
pub fn rw_rate(n: u64) -> f64 {
    let n = n as f64;
    (ln_gamma(2.0 * n + 1.0) - 2.0 * ln_gamma(n + 1.0) - 2.0 * n * LN_2).exp()
}

/// `1 + sum_{k=1}^n rw_rate(k)`.
pub fn rw_mean_records(n: u64) -> f64 {
    let mut q = 1.0;
    let mut sum = 1.0;
    for k in 1..=n {
        q *= (2 * k - 1) as f64 / (2 * k) as f64;
        sum += q;
    }
    sum
}

pub fn rw_rate_asymptotic(n: u64) -> f64 {
    1.0 / (PI * n as f64).sqrt()
}

/// `sqrt(4n / pi)`.
pub fn rw_mean_records_asymptotic(n: u64) -> f64 {
    (4.0 * n as f64 / PI).sqrt()
}

/// The closed form `n C(2n,n) 2^{1-2n}`, which only agrees with the exact
/// mean asymptotically (it gives 1.5 at n = 2 where the exact value is 1.875).
pub fn rw_mean_records_printed(n: u64) -> f64 {
    2.0 * n as f64 * rw_rate(n)
}

// ---- biased Gaussian walk ----

/// True while `|c| sqrt(n) / sigma` stays below [`SMALL_DRIFT_LIMIT`].
pub fn small_drift_is_valid(n: u64, c: f64, sigma: f64) -> bool {
    c.abs() * (n as f64).sqrt() / sigma <= SMALL_DRIFT_LIMIT
}

fn warn_small_drift(n: u64, c: f64, sigma: f64) {
    if !small_drift_is_valid(n, c, sigma) {
        log::warn!(
            "small-drift formula used at c*sqrt(n)/sigma = {:.3}, outside its range",
            c.abs() * (n as f64).sqrt() / sigma
        );
    }
}

/// `1/sqrt(pi n) +/- c / (sqrt(2) sigma)`.
pub fn biased_rate_small_drift(n: u64, c: f64, sigma: f64, direction: Direction) -> Result<f64, AnalyticError> {
    check_sigma(sigma)?;
    if n == 0 {
        return Err(AnalyticError::ZeroSteps);
    }
    warn_small_drift(n, c, sigma);
    Ok(rw_rate_asymptotic(n) + signed(c, direction) * FRAC_1_SQRT_2 / sigma)
}

/// Pre-asymptotic variant `1/sqrt(pi n) +/- (c/sigma) (sqrt(2)/pi) atan(sqrt(n))`.
pub fn biased_rate_small_drift_arctan(
    n: u64,
    c: f64,
    sigma: f64,
    direction: Direction,
) -> Result<f64, AnalyticError> {
    check_sigma(sigma)?;
    if n == 0 {
        return Err(AnalyticError::ZeroSteps);
    }
    warn_small_drift(n, c, sigma);
    let n = n as f64;
    Ok(1.0 / (PI * n).sqrt() + signed(c, direction) / sigma * 2f64.sqrt() / PI * n.sqrt().atan())
}

/// `2 sqrt(n/pi) +/- c n / (sqrt(2) sigma)`.
pub fn biased_mean_records_small_drift(
    n: u64,
    c: f64,
    sigma: f64,
    direction: Direction,
) -> Result<f64, AnalyticError> {
    check_sigma(sigma)?;
    warn_small_drift(n, c, sigma);
    let nf = n as f64;
    Ok(2.0 * (nf / PI).sqrt() + signed(c, direction) * nf * FRAC_1_SQRT_2 / sigma)
}

/// Large-`n` mean upper record number of a Gaussian walk with drift `c > 0`:
/// `n exp(-sum_k erfc(c sqrt(k) / (sigma sqrt 2)) / (2k))`.
pub fn biased_mean_records_asymptotic_gaussian(n: u64, c: f64, sigma: f64) -> Result<f64, AnalyticError> {
    check_sigma(sigma)?;
    if !(c > 0.0) {
        return Err(AnalyticError::NonPositiveDrift(c));
    }
    let x = c / (sigma * 2f64.sqrt());
    let mut sum = 0.0;
    for k in 1..=1_000_000u64 {
        let term = erfc(x * (k as f64).sqrt()) / (2.0 * k as f64);
        sum += term;
        if term < 1e-12 * sum {
            break;
        }
    }
    Ok(n as f64 * (-sum).exp())
}

// ---- Cauchy walk with drift ----

/// Growth exponent `1/2 + atan(c)/pi` of the mean record number of a
/// unit-scale Cauchy walk with drift `c`.
pub fn cauchy_drift_exponent(c: f64) -> f64 {
    0.5 + c.atan() / PI
}

/// Exact record rate of the unit Cauchy walk with drift:
/// `Gamma(n + theta) / (Gamma(theta) Gamma(n + 1))`.
pub fn cauchy_rate_exact(n: u64, c: f64) -> f64 {
    let t = cauchy_drift_exponent(c);
    let n = n as f64;
    (ln_gamma(n + t) - ln_gamma(t) - ln_gamma(n + 1.0)).exp()
}

/// Exact mean record number of the unit Cauchy walk with drift:
/// `Gamma(n + 1 + theta) / (Gamma(1 + theta) Gamma(n + 1))`.
pub fn cauchy_mean_records_exact(n: u64, c: f64) -> f64 {
    let t = cauchy_drift_exponent(c);
    let n = n as f64;
    (ln_gamma(n + 1.0 + t) - ln_gamma(1.0 + t) - ln_gamma(n + 1.0)).exp()
}

// ---- AR(1) ----

fn check_alpha(alpha: f64) -> Result<(), AnalyticError> {
    if (0.0..=1.0).contains(&alpha) {
        Ok(())
    } else {
        Err(AnalyticError::AlphaOutOfRange(alpha))
    }
}

/// The conjecture is meant for `n (1 - alpha)` of order one or smaller.
pub fn ar1_conjecture_is_valid(n: u64, alpha: f64) -> bool {
    n as f64 * (1.0 - alpha) <= 1.0
}

/// `exp(-n (1 - alpha) / pi) / sqrt(pi n)`.
pub fn ar1_rate_conjecture(n: u64, alpha: f64) -> Result<f64, AnalyticError> {
    check_alpha(alpha)?;
    if n == 0 {
        return Err(AnalyticError::ZeroSteps);
    }
    Ok((-(n as f64) * (1.0 - alpha) / PI).exp() * rw_rate_asymptotic(n))
}

/// Linearized relative suppression `1 - P(alpha)/P(1) ~ n (1 - alpha) / pi`.
pub fn ar1_suppression_linear(n: u64, alpha: f64) -> Result<f64, AnalyticError> {
    check_alpha(alpha)?;
    Ok(n as f64 * (1.0 - alpha) / PI)
}

/// Mean record number with the `2 sqrt(n) / pi` prefactor as printed in the
/// source of the conjecture.
pub fn ar1_mean_records_conjecture(n: u64, alpha: f64) -> Result<f64, AnalyticError> {
    check_alpha(alpha)?;
    let nf = n as f64;
    Ok(2.0 * nf.sqrt() / PI * (-nf * (1.0 - alpha) / PI).exp())
}

/// Same conjecture with the random-walk prefactor `2 sqrt(n / pi)`, which
/// has the correct `alpha -> 1` limit.
pub fn ar1_mean_records_conjecture_walk_prefactor(n: u64, alpha: f64) -> Result<f64, AnalyticError> {
    check_alpha(alpha)?;
    let nf = n as f64;
    Ok(2.0 * (nf / PI).sqrt() * (-nf * (1.0 - alpha) / PI).exp())
}

// ---- ensembles of walkers ----

/// `2 sqrt(n ln N)` given `ln N`.
pub fn ensemble_mean_records_log(n: u64, ln_walkers: f64) -> f64 {
    2.0 * (n as f64 * ln_walkers).sqrt()
}

/// `sqrt(ln N / n)` given `ln N`.
pub fn ensemble_rate_log(n: u64, ln_walkers: f64) -> f64 {
    (ln_walkers / n as f64).sqrt()
}

/// `2 sqrt(n ln N)`; a single walker falls back to the exact walk mean.
pub fn ensemble_mean_records(n: u64, walkers: u64) -> Result<f64, AnalyticError> {
    match walkers {
        0 => Err(AnalyticError::EnsembleTooSmall(0)),
        1 => Ok(rw_mean_records(n)),
        w => Ok(ensemble_mean_records_log(n, (w as f64).ln())),
    }
}

/// `sqrt(ln N / n)`; a single walker falls back to the exact walk rate.
pub fn ensemble_rate(n: u64, walkers: u64) -> Result<f64, AnalyticError> {
    if n == 0 {
        return Err(AnalyticError::ZeroSteps);
    }
    match walkers {
        0 => Err(AnalyticError::EnsembleTooSmall(0)),
        1 => Ok(rw_rate(n)),
        w => Ok(ensemble_rate_log(n, (w as f64).ln())),
    }
}

/// Two ways to summarize how far a measured ensemble record rate sits below
/// the rate of `N` independent walkers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectiveGamma {
    /// `gamma` such that the rate equals that of `N^gamma` walkers:
    /// `n rate^2 / ln N`.
    pub exponent: f64,
    /// `gamma` as a prefactor: `rate / sqrt(ln N / n)`.
    pub prefactor: f64,
}

pub fn effective_gamma(rate: f64, n: u64, walkers: u64) -> Result<EffectiveGamma, AnalyticError> {
    if !(rate > 0.0 && rate.is_finite()) {
        return Err(AnalyticError::InvalidRate(rate));
    }
    if walkers < 2 {
        return Err(AnalyticError::EnsembleTooSmall(walkers));
    }
    if n == 0 {
        return Err(AnalyticError::ZeroSteps);
    }
    let ln_n = (walkers as f64).ln();
    let nf = n as f64;
    Ok(EffectiveGamma {
        exponent: nf * rate * rate / ln_n,
        prefactor: rate / (ln_n / nf).sqrt(),
    })
}

// ---- miscellaneous ----

/// Mean first-passage time of the symmetric walk within a window of `N`
/// steps: `sqrt(N / pi)`.
pub fn fpt_symmetric(window: u64) -> f64 {
    (window as f64 / PI).sqrt()
}

/// First-order probability that a record is immediately followed by
/// another one: `1/2 + f(0) c`.
pub fn conditional_prob_biased(c: f64, jump: &DistributionSpec) -> f64 {
    0.5 + jump.density_at_zero() * c
}

/// The same probability without linearization: `P(xi + c > 0)`.
pub fn conditional_prob_biased_exact(c: f64, jump: &DistributionSpec) -> f64 {
    1.0 - jump.cdf(-c)
}

/// Half-Gaussian approximation `exp(-m^2 / 4n) / sqrt(n pi)` of the record
/// number distribution of the symmetric walk.
pub fn pmf_half_gaussian(m: u64, n: u64) -> f64 {
    let (m, n) = (m as f64, n as f64);
    (-m * m / (4.0 * n)).exp() / (n * PI).sqrt()
}

/// Exact record number distribution of the symmetric walk,
/// `P(R_n = m) = C(2n - m + 1, n) 2^{m - 1 - 2n}` for `1 <= m <= n + 1`.
pub fn pmf_record_number_exact(m: u64, n: u64) -> f64 {
    if m == 0 || m > n + 1 {
        return 0.0;
    }
    let top = (2 * n + 1 - m) as f64;
    let nf = n as f64;
    let ln_binom = ln_gamma(top + 1.0) - ln_gamma(nf + 1.0) - ln_gamma(top - nf + 1.0);
    (ln_binom + (m as f64 - 1.0 - 2.0 * nf) * LN_2).exp()
}

// ---- tabulation ----

/// Inputs shared by the tabulated formulas.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalyticParams {
    #[serde(default)]
    pub c: f64,
    #[serde(default = "one")]
    pub sigma: f64,
    #[serde(default = "one")]
    pub alpha: f64,
    #[serde(default = "two")]
    pub walkers: u64,
}

fn one() -> f64 {
    1.0
}

fn two() -> u64 {
    2
}

impl Default for AnalyticParams {
    fn default() -> Self {
        Self {
            c: 0.0,
            sigma: 1.0,
            alpha: 1.0,
            walkers: 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FormulaFamily {
    Iid,
    Rw,
    SmallDrift,
    GaussianAsymptotic,
    Cauchy,
    Ar1,
    Ensemble,
    Fpt,
    HalfGaussian,
}

/// A tabulated formula: header plus one row per `n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FormulaTable {
    pub family: FormulaFamily,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl FormulaTable {
    pub fn write_csv<W: std::io::Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{}", self.columns.join(","))?;
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            writeln!(out, "{}", cells.join(","))?;
        }
        Ok(())
    }
}

/// Evaluates `family` at each `n` (for `half_gaussian`, `n` is held fixed at
/// `n_values.last()` and the rows run over record numbers `m`).
pub fn tabulate(family: FormulaFamily, params: &AnalyticParams, n_values: &[u64]) -> Result<FormulaTable, AnalyticError> {
    use FormulaFamily as F;
    let p = params;
    let cols: &[&str] = match family {
        F::Iid => &["n", "rate", "mean", "asymptotic_mean"],
        F::Rw => &["n", "exact_rate", "asymptotic_rate", "exact_mean", "asymptotic_mean"],
        F::SmallDrift => &[
            "n",
            "upper_rate",
            "lower_rate",
            "upper_rate_arctan",
            "lower_rate_arctan",
            "upper_mean",
            "lower_mean",
            "valid",
        ],
        F::GaussianAsymptotic => &["n", "mean"],
        F::Cauchy => &["n", "theta", "exact_rate", "exact_mean"],
        F::Ar1 => &["n", "rate", "suppression", "mean_printed", "mean_walk_prefactor", "valid"],
        F::Ensemble => &["n", "walkers", "rate", "mean"],
        F::Fpt => &["n", "mean_fpt"],
        F::HalfGaussian => &["m", "n", "half_gaussian", "exact"],
    };
    let mut rows = Vec::new();
    if family == F::HalfGaussian {
        let n = *n_values.last().ok_or(AnalyticError::ZeroSteps)?;
        for m in 1..=n + 1 {
            rows.push(vec![m as f64, n as f64, pmf_half_gaussian(m, n), pmf_record_number_exact(m, n)]);
        }
    } else {
        for &n in n_values {
            let nf = n as f64;
            let row = match family {
                F::Iid => vec![nf, iid_rate(n), iid_mean_records(n), iid_mean_records_asymptotic(n)],
                F::Rw => vec![
                    nf,
                    rw_rate(n),
                    rw_rate_asymptotic(n),
                    rw_mean_records(n),
                    rw_mean_records_asymptotic(n),
                ],
                F::SmallDrift => vec![
                    nf,
                    biased_rate_small_drift(n, p.c, p.sigma, Direction::Upper)?,
                    biased_rate_small_drift(n, p.c, p.sigma, Direction::Lower)?,
                    biased_rate_small_drift_arctan(n, p.c, p.sigma, Direction::Upper)?,
                    biased_rate_small_drift_arctan(n, p.c, p.sigma, Direction::Lower)?,
                    biased_mean_records_small_drift(n, p.c, p.sigma, Direction::Upper)?,
                    biased_mean_records_small_drift(n, p.c, p.sigma, Direction::Lower)?,
                    small_drift_is_valid(n, p.c, p.sigma) as u8 as f64,
                ],
                F::GaussianAsymptotic => vec![nf, biased_mean_records_asymptotic_gaussian(n, p.c, p.sigma)?],
                F::Cauchy => vec![
                    nf,
                    cauchy_drift_exponent(p.c / p.sigma),
                    cauchy_rate_exact(n, p.c / p.sigma),
                    cauchy_mean_records_exact(n, p.c / p.sigma),
                ],
                F::Ar1 => vec![
                    nf,
                    ar1_rate_conjecture(n, p.alpha)?,
                    ar1_suppression_linear(n, p.alpha)?,
                    ar1_mean_records_conjecture(n, p.alpha)?,
                    ar1_mean_records_conjecture_walk_prefactor(n, p.alpha)?,
                    ar1_conjecture_is_valid(n, p.alpha) as u8 as f64,
                ],
                F::Ensemble => vec![
                    nf,
                    p.walkers as f64,
                    ensemble_rate(n, p.walkers)?,
                    ensemble_mean_records(n, p.walkers)?,
                ],
                F::Fpt => vec![nf, fpt_symmetric(n)],
                F::HalfGaussian => unreachable!(),
            };
            rows.push(row);
        }
    }
    Ok(FormulaTable {
        family,
        columns: cols.iter().map(|s| s.to_string()).collect(),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    /// Q_n equals the probability that a simple +/-1 walk is back at the
    /// origin after 2n steps; counted here by dynamic programming.
    fn simple_walk_return_probability(n: u64) -> f64 {
        let len = 2 * n as usize;
        let mut ways = vec![0f64; 2 * len + 1];
        ways[len] = 1.0;
        for _ in 0..len {
            let mut next = vec![0f64; 2 * len + 1];
            for (i, &w) in ways.iter().enumerate() {
                if w > 0.0 {
                    next[i - 1] += w / 2.0;
                    next[i + 1] += w / 2.0;
                }
            }
            ways = next;
        }
        ways[len]
    }

    #[test]
    fn iid_examples() {
        assert_eq!(iid_rate(0), 1.0);
        assert_relative_eq!(iid_rate(9), 0.1);
        assert!((iid_mean_records(5000) - 9.094).abs() < 1e-3);
        assert!((iid_mean_records(100_000) - iid_mean_records_asymptotic(100_000)).abs() < 1e-4);
    }

    #[test]
    fn rw_exact_values() {
        assert_relative_eq!(rw_rate(1), 0.5, max_relative = 1e-13);
        assert_relative_eq!(rw_rate(2), 0.375, max_relative = 1e-13);
        assert_relative_eq!(rw_mean_records(2), 1.875, epsilon = 1e-15);
        assert_relative_eq!(rw_mean_records_printed(2), 1.5, max_relative = 1e-13);
        assert_relative_eq!(rw_rate_asymptotic(10_000), 5.6419e-3, max_relative = 1e-4);
        assert!((rw_rate(10_000) / rw_rate_asymptotic(10_000) - 1.0).abs() < 1e-4);
        for n in [1, 5, 17, 300] {
            assert_relative_eq!(rw_rate(n), simple_walk_return_probability(n), max_relative = 1e-11);
        }
    }

    #[test]
    fn rw_mean_closed_form_identity() {
        // 1 + sum_{k<=n} Q_k = (2n + 1) Q_n
        for n in [0u64, 1, 2, 10, 1000, 100_000] {
            assert_relative_eq!(rw_mean_records(n), (2 * n + 1) as f64 * rw_rate(n), max_relative = 1e-10);
        }
    }

    #[test]
    fn rw_monotone_and_asymptotic() {
        let mut prev_rate = f64::INFINITY;
        let mut prev_mean = 0.0;
        for n in 1..2000u64 {
            let r = rw_rate(n);
            let m = rw_mean_records(n);
            assert!(r < prev_rate && m > prev_mean);
            if n >= 30 {
                assert!((r / rw_rate_asymptotic(n) - 1.0).abs() < 0.01);
            }
            prev_rate = r;
            prev_mean = m;
        }
    }

    #[test]
    fn small_drift_examples() {
        let up = biased_mean_records_small_drift(250, 0.019, 1.0, Direction::Upper).unwrap();
        let lo = biased_mean_records_small_drift(250, 0.019, 1.0, Direction::Lower).unwrap();
        assert!((up - 21.20).abs() < 0.01, "{up}");
        assert!((lo - 14.48).abs() < 0.01, "{lo}");
        assert_eq!(
            biased_mean_records_small_drift(250, 0.0, 1.0, Direction::Upper).unwrap(),
            rw_mean_records_asymptotic(250)
        );
        assert_eq!(
            biased_rate_small_drift(250, 0.0, 1.0, Direction::Lower).unwrap(),
            rw_rate_asymptotic(250)
        );
        assert!(biased_rate_small_drift(10, 0.1, 0.0, Direction::Upper).is_err());
        assert!(small_drift_is_valid(250, 0.019, 1.0));
        assert!(!small_drift_is_valid(5000, 0.019, 1.0));
        // arctan variant approaches the large-n form
        let a = biased_rate_small_drift_arctan(1_000_000, 0.001, 1.0, Direction::Upper).unwrap();
        let b = biased_rate_small_drift(1_000_000, 0.001, 1.0, Direction::Upper).unwrap();
        assert!((a - b).abs() < 1e-6);
    }

    #[test]
    fn gaussian_asymptotic_brackets() {
        let big = biased_mean_records_asymptotic_gaussian(1000, 50.0, 1.0).unwrap();
        assert_relative_eq!(big, 1000.0, max_relative = 1e-12);
        let v = biased_mean_records_asymptotic_gaussian(5000, 0.025, 1.0).unwrap();
        assert!(v > rw_mean_records_asymptotic(5000) && v < 5000.0, "{v}");
        assert!(biased_mean_records_asymptotic_gaussian(10, 0.0, 1.0).is_err());
        assert!(biased_mean_records_asymptotic_gaussian(10, 0.1, -1.0).is_err());
    }

    #[test]
    fn cauchy_exponent_values() {
        assert_eq!(cauchy_drift_exponent(0.0), 0.5);
        assert_relative_eq!(cauchy_drift_exponent(1.0), 0.75, epsilon = 1e-15);
        // zero drift reduces to the universal symmetric result
        for n in [1u64, 10, 500] {
            assert_relative_eq!(cauchy_rate_exact(n, 0.0), rw_rate(n), max_relative = 1e-10);
            assert_relative_eq!(cauchy_mean_records_exact(n, 0.0), rw_mean_records(n), max_relative = 1e-10);
        }
        // cumulative sum of rates is the mean
        let s: f64 = (0..=200).map(|k| cauchy_rate_exact(k, 3.0)).sum();
        assert_relative_eq!(s, cauchy_mean_records_exact(200, 3.0), max_relative = 1e-10);
    }

    #[test]
    fn ar1_examples() {
        assert_relative_eq!(ar1_rate_conjecture(400, 1.0).unwrap(), rw_rate_asymptotic(400));
        let s = ar1_suppression_linear(10_000, 1.0 - 1e-5).unwrap();
        assert!((s - 0.0318).abs() < 1e-4);
        let exact = 1.0 - ar1_rate_conjecture(10_000, 1.0 - 1e-5).unwrap() / ar1_rate_conjecture(10_000, 1.0).unwrap();
        assert!((exact - s).abs() < 1e-3);
        assert!(ar1_rate_conjecture(10, 1.5).is_err());
        let printed = ar1_mean_records_conjecture(100, 1.0).unwrap();
        let walk = ar1_mean_records_conjecture_walk_prefactor(100, 1.0).unwrap();
        assert_relative_eq!(walk / printed, PI.sqrt(), max_relative = 1e-14);
    }

    #[test]
    fn ensemble_examples() {
        assert_relative_eq!(ensemble_mean_records_log(100, 1.0), 20.0, epsilon = 1e-12);
        assert_relative_eq!(ensemble_rate_log(100, 1.0), 0.1, epsilon = 1e-12);
        assert_relative_eq!(ensemble_rate(100, 64).unwrap(), 0.2039, max_relative = 1e-3);
        assert_eq!(ensemble_mean_records(50, 1).unwrap(), rw_mean_records(50));
        assert!(ensemble_rate(50, 0).is_err());
    }

    #[test]
    fn effective_gamma_definitions() {
        let g = effective_gamma(ensemble_rate(100, 100).unwrap(), 100, 100).unwrap();
        assert_relative_eq!(g.exponent, 1.0, max_relative = 1e-12);
        assert_relative_eq!(g.prefactor, 1.0, max_relative = 1e-12);
        let g = effective_gamma(0.51 * (100f64.ln() / 100.0).sqrt(), 100, 100).unwrap();
        assert_relative_eq!(g.exponent, 0.51 * 0.51, max_relative = 1e-12);
        assert_relative_eq!(g.prefactor, 0.51, max_relative = 1e-12);
        assert!(effective_gamma(0.0, 100, 100).is_err());
        assert!(effective_gamma(0.1, 100, 1).is_err());
    }

    #[test]
    fn misc_examples() {
        assert_relative_eq!(fpt_symmetric(100), 5.6419, max_relative = 1e-4);
        let g = DistributionSpec::standard_normal();
        assert_relative_eq!(conditional_prob_biased(0.02, &g), 0.50798, max_relative = 1e-5);
        assert!((conditional_prob_biased_exact(0.02, &g) - conditional_prob_biased(0.02, &g)).abs() < 1e-5);
    }

    #[test]
    fn record_number_pmfs() {
        // exact pmf: normalized, P(1) = P(2), mean equals the exact walk mean
        for n in [1u64, 5, 100, 2000] {
            let total: f64 = (1..=n + 1).map(|m| pmf_record_number_exact(m, n)).sum();
            assert_relative_eq!(total, 1.0, max_relative = 1e-10);
            assert_relative_eq!(pmf_record_number_exact(1, n), pmf_record_number_exact(2, n), max_relative = 1e-10);
            let mean: f64 = (1..=n + 1).map(|m| m as f64 * pmf_record_number_exact(m, n)).sum();
            assert_relative_eq!(mean, rw_mean_records(n), max_relative = 1e-9);
        }
        assert_relative_eq!(pmf_record_number_exact(1, 1), 0.5, max_relative = 1e-12);
        for n in [1000u64, 5000] {
            let s: f64 = (1..=n).map(|m| pmf_half_gaussian(m, n)).sum();
            assert!((s - 1.0).abs() < 0.02, "{s}");
        }
    }

    #[test]
    fn tabulation_shapes() {
        let t = tabulate(FormulaFamily::Rw, &AnalyticParams::default(), &[1, 2, 3]).unwrap();
        assert_eq!(t.columns, ["n", "exact_rate", "asymptotic_rate", "exact_mean", "asymptotic_mean"]);
        assert_eq!(t.rows.len(), 3);
        assert_eq!(t.rows[1][3], 1.875);
        let h = tabulate(FormulaFamily::HalfGaussian, &AnalyticParams::default(), &[10]).unwrap();
        assert_eq!(h.rows.len(), 11);
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("n,exact_rate"));
    }

    proptest! {
        #[test]
        fn drift_terms_are_odd(n in 1u64..100_000, c in -0.5f64..0.5, sigma in 0.1f64..10.0) {
            let up = biased_mean_records_small_drift(n, c, sigma, Direction::Upper).unwrap();
            let lo = biased_mean_records_small_drift(n, c, sigma, Direction::Lower).unwrap();
            let sym = biased_mean_records_small_drift(n, 0.0, sigma, Direction::Upper).unwrap();
            prop_assert!((up + lo - 2.0 * sym).abs() <= 1e-9 * sym.max(1.0));
            let ru = biased_rate_small_drift(n, c, sigma, Direction::Upper).unwrap();
            let rl = biased_rate_small_drift(n, c, sigma, Direction::Lower).unwrap();
            prop_assert!((ru + rl - 2.0 * rw_rate_asymptotic(n)).abs() < 1e-12);
        }

        #[test]
        fn ensemble_collapse_identity(n in 1u64..10_000, w in 2u64..100_000) {
            let a = ensemble_mean_records(n, w).unwrap() / (w as f64).ln().sqrt();
            prop_assert!((a - 2.0 * (n as f64).sqrt()).abs() <= 1e-12 * a);
        }
    }
}
