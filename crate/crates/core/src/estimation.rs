//! Maximum-likelihood fit of the AR(1)-GARCH(1,1) model
//! `X_i = alpha X_{i-1} + sigma_i xi_i + c`,
//! `sigma_i^2 = alpha0 + alpha1 xi_{i-1}^2 sigma_{i-1}^2 + beta1 sigma_{i-1}^2`,
//! with unit-variance Student-t or Gaussian innovations.

use std::cmp::Ordering;
use std::f64::consts::PI;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;
use thiserror::Error;

use crate::distributions::{DistributionError, DistributionSpec};
use crate::processes::ProcessConfig;

pub const MIN_LENGTH: usize = 10;
pub const NU_MIN: f64 = 2.1;
pub const NU_MAX: f64 = 50.0;
pub const DEFAULT_NU: f64 = 3.0;
pub const HESSIAN_STEP: f64 = 1e-4;

#[derive(Debug, Error, PartialEq)]
pub enum EstimationError {
    #[error("series has {0} points, at least {MIN_LENGTH} are needed")]
    TooShort(usize),
    #[error("series contains a non-finite value at index {0}")]
    NonFiniteData(usize),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("likelihood is not finite at step {0}")]
    NonFinite(usize),
    #[error("every start point failed to evaluate")]
    AllStartsFailed,
}

/// Parameters of the AR(1)-GARCH(1,1) model. `nu = None` means Gaussian
/// innovations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArGarchParams {
    pub c: f64,
    pub alpha: f64,
    pub alpha0: f64,
    pub alpha1: f64,
    pub beta1: f64,
    pub nu: Option<f64>,
}

impl ArGarchParams {
    pub fn validate(&self) -> Result<(), EstimationError> {
        let bad = |m: String| Err(EstimationError::InvalidParams(m));
        if !self.c.is_finite() {
            return bad(format!("c = {}", self.c));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return bad(format!("alpha = {} not in (0, 1]", self.alpha));
        }
        if !(self.alpha0 > 0.0 && self.alpha0.is_finite()) {
            return bad(format!("alpha0 = {} not positive", self.alpha0));
        }
        if !(self.alpha1 >= 0.0 && self.beta1 >= 0.0) {
            return bad(format!("alpha1 = {}, beta1 = {} must be >= 0", self.alpha1, self.beta1));
        }
        if !(self.alpha1 + self.beta1 < 1.0) {
            return bad(format!("alpha1 + beta1 = {} not below 1", self.alpha1 + self.beta1));
        }
        if let Some(nu) = self.nu {
            if !(nu > 2.0 && nu.is_finite()) {
                return bad(format!("nu = {nu} must exceed 2 for unit-variance innovations"));
            }
        }
        Ok(())
    }

    pub fn stationary_variance(&self) -> f64 {
        self.alpha0 / (1.0 - self.alpha1 - self.beta1)
    }

    /// Simulator for these parameters.
    pub fn to_process(&self) -> Result<ProcessConfig, DistributionError> {
        let jump = match self.nu {
            Some(nu) => DistributionSpec::students_t(nu, 1.0)?.unit_variance()?,
            None => DistributionSpec::standard_normal(),
        };
        Ok(ProcessConfig::ar_garch(jump, self.c, self.alpha, self.alpha0, self.alpha1, self.beta1))
    }
}

/// Log density of the innovation, split into a constant and a kernel.
#[derive(Debug, Clone, Copy)]
struct Innovation {
    norm: f64,
    /// `None` for Gaussian.
    nu: Option<f64>,
}

impl Innovation {
    fn new(nu: Option<f64>) -> Self {
        let norm = match nu {
            Some(nu) => ln_gamma(0.5 * (nu + 1.0)) - ln_gamma(0.5 * nu) - 0.5 * (PI * (nu - 2.0)).ln(),
            None => -0.5 * (2.0 * PI).ln(),
        };
        Self { norm, nu }
    }

    #[inline]
    fn ln_pdf(&self, z: f64) -> f64 {
        match self.nu {
            Some(nu) => self.norm - 0.5 * (nu + 1.0) * (z * z / (nu - 2.0)).ln_1p(),
            None => self.norm - 0.5 * z * z,
        }
    }
}

fn check_series(series: &[f64]) -> Result<(), EstimationError> {
    if series.len() < MIN_LENGTH {
        return Err(EstimationError::TooShort(series.len()));
    }
    if let Some(i) = series.iter().position(|v| !v.is_finite()) {
        return Err(EstimationError::NonFiniteData(i));
    }
    Ok(())
}

/// Conditional log-likelihood given `X_0`, with the variance recursion
/// started at its stationary value.
pub fn log_likelihood(series: &[f64], params: &ArGarchParams) -> Result<f64, EstimationError> {
    check_series(series)?;
    params.validate()?;
    ll_unchecked(series, params)
}

fn ll_unchecked(series: &[f64], p: &ArGarchParams) -> Result<f64, EstimationError> {
    let f = Innovation::new(p.nu);
    let mut var = p.stationary_variance();
    let mut ll = 0.0;
    for (i, w) in series.windows(2).enumerate() {
        let eps = w[1] - p.alpha * w[0] - p.c;
        if !(var > 0.0 && var.is_finite()) {
            return Err(EstimationError::NonFinite(i + 1));
        }
        let sd = var.sqrt();
        ll += f.ln_pdf(eps / sd) - sd.ln();
        var = p.alpha0 + p.alpha1 * eps * eps + p.beta1 * var;
    }
    if ll.is_finite() {
        Ok(ll)
    } else {
        Err(EstimationError::NonFinite(series.len() - 1))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InnovationMode {
    Gaussian,
    /// Student-t with the given tail parameter held fixed.
    FixedT { nu: f64 },
    /// Student-t with the tail parameter estimated in `[NU_MIN, NU_MAX]`.
    FreeT,
}

impl Default for InnovationMode {
    fn default() -> Self {
        Self::FixedT { nu: DEFAULT_NU }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub innovation: InnovationMode,
    /// Hold `alpha` at this value instead of estimating it.
    pub fixed_alpha: Option<f64>,
    /// `false` pins `alpha1 = beta1 = 0` (constant volatility).
    pub garch: bool,
    pub max_evaluations: usize,
    pub tolerance: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            innovation: InnovationMode::default(),
            fixed_alpha: None,
            garch: true,
            max_evaluations: 100_000,
            tolerance: 1e-8,
        }
    }
}

fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Map between model parameters and unconstrained coordinates:
/// `c / scale`, `logit(alpha)`, `ln(alpha0)`, `logit(alpha1 + beta1)`,
/// `logit(alpha1 / (alpha1 + beta1))`, `logit((nu - NU_MIN) / (NU_MAX - NU_MIN))`.
/// Only the coordinates not pinned by the options are free.
#[derive(Debug, Clone, Copy)]
pub struct Transform {
    options: FitOptions,
    /// Typical increment size, used to put `c` on a unit scale.
    scale: f64,
}

const C: usize = 0;
const ALPHA: usize = 1;
const ALPHA0: usize = 2;
const PERSIST: usize = 3;
const SHARE: usize = 4;
const NU: usize = 5;

impl Transform {
    pub fn new(options: FitOptions, scale: f64) -> Self {
        Self {
            options,
            scale: if scale > 0.0 { scale } else { 1.0 },
        }
    }

    fn free(&self) -> Vec<usize> {
        let mut f = vec![C];
        if self.options.fixed_alpha.is_none() {
            f.push(ALPHA);
        }
        f.push(ALPHA0);
        if self.options.garch {
            f.extend([PERSIST, SHARE]);
        }
        if self.options.innovation == InnovationMode::FreeT {
            f.push(NU);
        }
        f
    }

    pub fn dimension(&self) -> usize {
        self.free().len()
    }

    pub fn to_params(&self, theta: &[f64]) -> ArGarchParams {
        let mut full = [0.0; 6];
        for (k, &i) in self.free().iter().enumerate() {
            full[i] = theta[k];
        }
        let alpha = self.options.fixed_alpha.unwrap_or_else(|| logistic(full[ALPHA]));
        let (alpha1, beta1) = if self.options.garch {
            // keep alpha1 + beta1 strictly below 1 after rounding
            let p = logistic(full[PERSIST]).min(1.0 - 1e-12);
            let s = logistic(full[SHARE]);
            (p * s, p * (1.0 - s))
        } else {
            (0.0, 0.0)
        };
        let nu = match self.options.innovation {
            InnovationMode::Gaussian => None,
            InnovationMode::FixedT { nu } => Some(nu),
            InnovationMode::FreeT => Some(NU_MIN + (NU_MAX - NU_MIN) * logistic(full[NU])),
        };
        ArGarchParams {
            c: full[C] * self.scale,
            alpha,
            alpha0: full[ALPHA0].exp(),
            alpha1,
            beta1,
            nu,
        }
    }

    /// Inverse of `to_params`; boundary values are pulled slightly inside.
    pub fn to_theta(&self, p: &ArGarchParams) -> Vec<f64> {
        const EDGE: f64 = 1e-9;
        let clamp = |x: f64| x.clamp(EDGE, 1.0 - EDGE);
        let persist = p.alpha1 + p.beta1;
        let share = if persist > 0.0 { p.alpha1 / persist } else { 0.5 };
        let nu = p.nu.unwrap_or(DEFAULT_NU);
        let full = [
            p.c / self.scale,
            logit(clamp(p.alpha)),
            p.alpha0.ln(),
            logit(clamp(persist)),
            logit(clamp(share)),
            logit(clamp((nu - NU_MIN) / (NU_MAX - NU_MIN))),
        ];
        self.free().iter().map(|&i| full[i]).collect()
    }

    /// Derivatives of `(c, alpha, alpha0, alpha1, beta1, nu)` with respect
    /// to the free coordinates, one row per parameter.
    fn jacobian(&self, theta: &[f64]) -> DMatrix<f64> {
        let free = self.free();
        let p = self.to_params(theta);
        let mut j = DMatrix::zeros(6, free.len());
        let persist = p.alpha1 + p.beta1;
        let share = if persist > 0.0 { p.alpha1 / persist } else { 0.0 };
        for (k, &i) in free.iter().enumerate() {
            match i {
                C => j[(0, k)] = self.scale,
                ALPHA => j[(1, k)] = p.alpha * (1.0 - p.alpha),
                ALPHA0 => j[(2, k)] = p.alpha0,
                PERSIST => {
                    let d = persist * (1.0 - persist);
                    j[(3, k)] = share * d;
                    j[(4, k)] = (1.0 - share) * d;
                }
                SHARE => {
                    let d = persist * share * (1.0 - share);
                    j[(3, k)] = d;
                    j[(4, k)] = -d;
                }
                NU => {
                    let l = (p.nu.unwrap_or(DEFAULT_NU) - NU_MIN) / (NU_MAX - NU_MIN);
                    j[(5, k)] = (NU_MAX - NU_MIN) * l * (1.0 - l);
                }
                _ => unreachable!(),
            }
        }
        j
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    /// Simplex diameter fell below the tolerance.
    Converged,
    /// Evaluation limit reached first.
    MaxEvaluations,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub termination: Termination,
}

/// Nelder–Mead simplex minimization. Non-finite objective values count as
/// `+inf`, so infeasible points are rejected. Stops when every vertex is
/// within `tolerance` of the best one or after `max_evaluations`.
pub fn nelder_mead<F: FnMut(&[f64]) -> f64>(
    mut f: F,
    start: &[f64],
    step: &[f64],
    tolerance: f64,
    max_evaluations: usize,
) -> Minimum {
    let d = start.len();
    let mut evals = 0;
    let mut eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        let v = f(x);
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    };
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(d + 1);
    let v0 = eval(start, &mut evals);
    simplex.push((start.to_vec(), v0));
    for i in 0..d {
        let mut x = start.to_vec();
        x[i] += step[i];
        let v = eval(&x, &mut evals);
        simplex.push((x, v));
    }
    let order = |s: &mut Vec<(Vec<f64>, f64)>| {
        s.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(Ordering::Equal).then_with(|| lex(&a.0, &b.0)))
    };
    let mut iterations = 0;
    let termination = loop {
        order(&mut simplex);
        let best = &simplex[0].0;
        let diameter = simplex[1..]
            .iter()
            .map(|(x, _)| x.iter().zip(best).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt())
            .fold(0.0, f64::max);
        if diameter < tolerance && simplex[0].1.is_finite() {
            break Termination::Converged;
        }
        if evals >= max_evaluations {
            break Termination::MaxEvaluations;
        }
        iterations += 1;
        let mut centroid = vec![0.0; d];
        for (x, _) in &simplex[..d] {
            for (c, v) in centroid.iter_mut().zip(x) {
                *c += v / d as f64;
            }
        }
        let worst = simplex[d].clone();
        let toward = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&worst.0)
                .map(|(c, w)| c + t * (w - c))
                .collect()
        };
        let xr = toward(-1.0);
        let fr = eval(&xr, &mut evals);
        if fr < simplex[0].1 {
            let xe = toward(-2.0);
            let fe = eval(&xe, &mut evals);
            simplex[d] = if fe < fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr < simplex[d - 1].1 {
            simplex[d] = (xr, fr);
            continue;
        }
        let (xc, fc) = if fr < worst.1 {
            let x = toward(-0.5);
            let v = eval(&x, &mut evals);
            (x, v)
        } else {
            let x = toward(0.5);
            let v = eval(&x, &mut evals);
            (x, v)
        };
        if fc < fr.min(worst.1) {
            simplex[d] = (xc, fc);
            continue;
        }
        let best = simplex[0].0.clone();
        for vertex in simplex.iter_mut().skip(1) {
            let x: Vec<f64> = best.iter().zip(&vertex.0).map(|(b, v)| b + 0.5 * (v - b)).collect();
            let v = eval(&x, &mut evals);
            *vertex = (x, v);
        }
    };
    let (x, value) = simplex.swap_remove(0);
    Minimum {
        x,
        value,
        iterations,
        evaluations: evals,
        termination,
    }
}

fn lex(a: &[f64], b: &[f64]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.partial_cmp(y) {
            Some(Ordering::Equal) | None => continue,
            Some(o) => return o,
        }
    }
    Ordering::Equal
}

/// Delta-method standard errors of the model parameters; `None` entries
/// are pinned.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StandardErrors {
    pub c: Option<f64>,
    pub alpha: Option<f64>,
    pub alpha0: Option<f64>,
    pub alpha1: Option<f64>,
    pub beta1: Option<f64>,
    pub nu: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub params: ArGarchParams,
    pub loglik: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
    pub termination: Termination,
    /// Which of the start points produced the result.
    pub start: usize,
    pub observations: usize,
    /// Absent when the numerical Hessian is not positive definite.
    pub standard_errors: Option<StandardErrors>,
    pub options: FitOptions,
}

/// Negative Hessian inverse in free coordinates, mapped to parameters.
fn standard_errors(series: &[f64], tr: &Transform, theta: &[f64]) -> Option<StandardErrors> {
    let d = theta.len();
    let h = HESSIAN_STEP;
    let nll = |x: &[f64]| -> f64 { ll_unchecked(series, &tr.to_params(x)).map(|v| -v).unwrap_or(f64::NAN) };
    let at = |moves: &[(usize, f64)]| {
        let mut x = theta.to_vec();
        for &(i, s) in moves {
            x[i] += s * h;
        }
        nll(&x)
    };
    let f0 = nll(theta);
    let mut hess = DMatrix::zeros(d, d);
    for i in 0..d {
        hess[(i, i)] = (at(&[(i, 1.0)]) - 2.0 * f0 + at(&[(i, -1.0)])) / (h * h);
        for j in 0..i {
            let v = (at(&[(i, 1.0), (j, 1.0)]) - at(&[(i, 1.0), (j, -1.0)]) - at(&[(i, -1.0), (j, 1.0)])
                + at(&[(i, -1.0), (j, -1.0)]))
                / (4.0 * h * h);
            hess[(i, j)] = v;
            hess[(j, i)] = v;
        }
    }
    if hess.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let cov = hess.try_inverse()?;
    if (0..d).any(|i| !(cov[(i, i)] > 0.0)) {
        return None;
    }
    let j = tr.jacobian(theta);
    let pcov = &j * cov * j.transpose();
    let free = tr.free();
    let se = |row: usize, index: usize| free.contains(&index).then(|| pcov[(row, row)].max(0.0).sqrt());
    let persist_free = free.contains(&PERSIST);
    Some(StandardErrors {
        c: se(0, C),
        alpha: se(1, ALPHA),
        alpha0: se(2, ALPHA0),
        alpha1: persist_free.then(|| pcov[(3, 3)].max(0.0).sqrt()),
        beta1: persist_free.then(|| pcov[(4, 4)].max(0.0).sqrt()),
        nu: se(5, NU),
    })
}

/// Deterministic start points built from the sample moments of the
/// increments; `initial`, if given, replaces the first.
fn start_points(series: &[f64], options: &FitOptions, initial: Option<ArGarchParams>) -> Vec<ArGarchParams> {
    let inc: Vec<f64> = series.windows(2).map(|w| w[1] - w[0]).collect();
    let mean = inc.iter().sum::<f64>() / inc.len() as f64;
    let var = (inc.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / inc.len() as f64).max(1e-12);
    let nu = match options.innovation {
        InnovationMode::Gaussian => None,
        InnovationMode::FixedT { nu } => Some(nu),
        InnovationMode::FreeT => Some(5.0),
    };
    let grid = [
        (0.999, 0.10, 0.85),
        (0.99, 0.05, 0.90),
        (0.9999, 0.20, 0.70),
        (0.995, 0.10, 0.50),
        (0.9, 0.05, 0.05),
    ];
    let mut starts: Vec<ArGarchParams> = grid
        .iter()
        .map(|&(alpha, a1, b1)| {
            let (alpha1, beta1) = if options.garch { (a1, b1) } else { (0.0, 0.0) };
            let alpha = options.fixed_alpha.unwrap_or(alpha);
            // a walk with drift has mean increment c; with alpha < 1 the level
            // term alpha X absorbs most of it, so start near the walk value
            ArGarchParams {
                c: mean,
                alpha,
                alpha0: var * (1.0 - alpha1 - beta1),
                alpha1,
                beta1,
                nu,
            }
        })
        .collect();
    if let Some(p) = initial {
        starts[0] = p;
    }
    starts
}

/// Maximizes the likelihood from five start points in parallel and keeps
/// the best (ties broken by the smaller transformed coordinates).
pub fn fit(series: &[f64], initial: Option<ArGarchParams>, options: &FitOptions) -> Result<FitResult, EstimationError> {
    check_series(series)?;
    if let Some(p) = &initial {
        p.validate()?;
    }
    if let Some(a) = options.fixed_alpha {
        if !(a > 0.0 && a <= 1.0) {
            return Err(EstimationError::InvalidParams(format!("fixed alpha = {a} not in (0, 1]")));
        }
    }
    if let InnovationMode::FixedT { nu } = options.innovation {
        if !(nu > 2.0 && nu.is_finite()) {
            return Err(EstimationError::InvalidParams(format!("nu = {nu} must exceed 2")));
        }
    }
    let inc: Vec<f64> = series.windows(2).map(|w| w[1] - w[0]).collect();
    let scale = crate::data::sample_std(&inc);
    let tr = Transform::new(*options, scale);
    let starts = start_points(series, options, initial);
    let objective = |x: &[f64]| -> f64 { ll_unchecked(series, &tr.to_params(x)).map(|v| -v).unwrap_or(f64::INFINITY) };
    let runs: Vec<(usize, Minimum)> = starts
        .par_iter()
        .enumerate()
        .map(|(k, p)| {
            let theta = tr.to_theta(p);
            let step = vec![0.5; theta.len()];
            let mut m = nelder_mead(objective, &theta, &step, options.tolerance, options.max_evaluations);
            // a restart from the reported minimum guards against a collapsed simplex
            if m.termination == Termination::Converged && m.value.is_finite() {
                let left = options.max_evaluations.saturating_sub(m.evaluations);
                let step = vec![0.05; theta.len()];
                let again = nelder_mead(objective, &m.x, &step, options.tolerance, left.max(1));
                m = Minimum {
                    iterations: m.iterations + again.iterations,
                    evaluations: m.evaluations + again.evaluations,
                    ..again
                };
            }
            (k, m)
        })
        .collect();
    let (start, best) = runs
        .into_iter()
        .filter(|(_, m)| m.value.is_finite())
        .min_by(|a, b| {
            a.1.value
                .partial_cmp(&b.1.value)
                .unwrap_or(Ordering::Equal)
                .then_with(|| lex(&a.1.x, &b.1.x))
        })
        .ok_or(EstimationError::AllStartsFailed)?;
    let params = tr.to_params(&best.x);
    Ok(FitResult {
        params,
        loglik: -best.value,
        iterations: best.iterations,
        evaluations: best.evaluations,
        converged: best.termination == Termination::Converged,
        termination: best.termination,
        start,
        observations: series.len(),
        standard_errors: standard_errors(series, &tr, &best.x),
        options: *options,
    })
}
