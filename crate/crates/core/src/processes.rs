//! Trajectory generators: i.i.d. sequences, (biased) random walks and Lévy
//! flights, AR(1), GARCH(1,1) and the combined autoregressive GARCH model.

use std::io::Write;

use rand::Rng;
use rand_distr::Distribution;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::distributions::DistributionSpec;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProcessError {
    #[error("alpha must lie in [0, 1], got {0}")]
    AlphaOutOfRange(f64),
    #[error("GARCH coefficients must satisfy alpha0 > 0, alpha1 >= 0, beta1 >= 0 (got {alpha0}, {alpha1}, {beta1})")]
    NegativeGarchCoefficient { alpha0: f64, alpha1: f64, beta1: f64 },
    #[error("GARCH(1,1) needs alpha1 + beta1 < 1 for a stationary solution, got {0}")]
    NonStationary(f64),
    #[error("drift must be finite, got {0}")]
    InvalidDrift(f64),
    #[error("stationary variance is only defined for garch11 and ar_garch, not {0:?}")]
    NotGarch(ProcessKind),
    #[error("trajectory needs at least one step")]
    ZeroSteps,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProcessKind {
    Iid,
    RandomWalk,
    Ar1,
    Garch11,
    ArGarch,
}

/// Generative model for a trajectory `X_0 .. X_n`.
///
/// Recursions, with `xi_i` drawn from `jump`:
///
/// | kind          | step                                            |
/// |---------------|-------------------------------------------------|
/// | `iid`         | `X_i = xi_i + c` (also for `i = 0`)             |
/// | `random_walk` | `X_i = X_{i-1} + xi_i + c`                      |
/// | `ar1`         | `X_i = alpha X_{i-1} + xi_i + c`                |
/// | `garch11`     | `X_i = X_{i-1} + sigma_i xi_i + c`              |
/// | `ar_garch`    | `X_i = alpha X_{i-1} + sigma_i xi_i + c`        |
///
/// with `sigma_i^2 = alpha0 + alpha1 (sigma_{i-1} xi_{i-1})^2 + beta1 sigma_{i-1}^2`
/// and `sigma_1^2 = alpha0 / (1 - alpha1 - beta1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProcessConfig {
    pub kind: ProcessKind,
    #[serde(default)]
    pub jump: DistributionSpec,
    #[serde(default)]
    pub drift: f64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_alpha0")]
    pub alpha0: f64,
    #[serde(default)]
    pub alpha1: f64,
    #[serde(default)]
    pub beta1: f64,
}

fn default_alpha() -> f64 {
    1.0
}

fn default_alpha0() -> f64 {
    1.0
}

impl ProcessConfig {
    fn base(kind: ProcessKind, jump: DistributionSpec) -> Self {
        Self {
            kind,
            jump,
            drift: 0.0,
            alpha: 1.0,
            alpha0: 1.0,
            alpha1: 0.0,
            beta1: 0.0,
        }
    }

    pub fn iid(jump: DistributionSpec) -> Self {
        Self::base(ProcessKind::Iid, jump)
    }

    pub fn random_walk(jump: DistributionSpec, drift: f64) -> Self {
        Self {
            drift,
            ..Self::base(ProcessKind::RandomWalk, jump)
        }
    }

    pub fn ar1(jump: DistributionSpec, alpha: f64, drift: f64) -> Self {
        Self {
            alpha,
            drift,
            ..Self::base(ProcessKind::Ar1, jump)
        }
    }

    pub fn garch11(jump: DistributionSpec, alpha0: f64, alpha1: f64, beta1: f64) -> Self {
        Self {
            alpha0,
            alpha1,
            beta1,
            ..Self::base(ProcessKind::Garch11, jump)
        }
    }

    pub fn ar_garch(
        jump: DistributionSpec,
        drift: f64,
        alpha: f64,
        alpha0: f64,
        alpha1: f64,
        beta1: f64,
    ) -> Self {
        Self {
            drift,
            alpha,
            alpha0,
            alpha1,
            beta1,
            ..Self::base(ProcessKind::ArGarch, jump)
        }
    }

    pub fn with_drift(mut self, drift: f64) -> Self {
        self.drift = drift;
        self
    }

    fn is_garch(&self) -> bool {
        matches!(self.kind, ProcessKind::Garch11 | ProcessKind::ArGarch)
    }

    fn is_autoregressive(&self) -> bool {
        matches!(self.kind, ProcessKind::Ar1 | ProcessKind::ArGarch)
    }

    pub fn validate(&self) -> Result<(), ProcessError> {
        if !self.drift.is_finite() {
            return Err(ProcessError::InvalidDrift(self.drift));
        }
        if self.is_autoregressive() && !(0.0..=1.0).contains(&self.alpha) {
            return Err(ProcessError::AlphaOutOfRange(self.alpha));
        }
        if self.is_garch() {
            let (a0, a1, b1) = (self.alpha0, self.alpha1, self.beta1);
            if !(a0 > 0.0 && a0.is_finite() && a1 >= 0.0 && b1 >= 0.0) {
                return Err(ProcessError::NegativeGarchCoefficient {
                    alpha0: a0,
                    alpha1: a1,
                    beta1: b1,
                });
            }
            if a1 + b1 >= 1.0 {
                return Err(ProcessError::NonStationary(a1 + b1));
            }
        }
        Ok(())
    }

    /// `alpha0 / (1 - alpha1 - beta1)`.
    pub fn stationary_variance(&self) -> Result<f64, ProcessError> {
        if !self.is_garch() {
            return Err(ProcessError::NotGarch(self.kind));
        }
        self.validate()?;
        Ok(self.alpha0 / (1.0 - self.alpha1 - self.beta1))
    }

    pub fn generate<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Trajectory, ProcessError> {
        let gen = self.generator()?;
        if n == 0 {
            return Err(ProcessError::ZeroSteps);
        }
        let mut values = Vec::with_capacity(n + 1);
        if self.is_garch() {
            let mut sigma = Vec::with_capacity(n + 1);
            gen.fill_with_sigma(n, rng, &mut values, &mut sigma);
            Ok(Trajectory {
                values,
                sigma: Some(sigma),
            })
        } else {
            gen.fill(n, rng, &mut values);
            Ok(Trajectory { values, sigma: None })
        }
    }

    /// Validated, ready-to-run generator for repeated use in a replica loop.
    pub fn generator(&self) -> Result<Generator, ProcessError> {
        self.validate()?;
        Ok(Generator {
            config: *self,
            sampler: self.jump.sampler(),
        })
    }
}

/// Prepared generator; reuses caller-provided buffers.
#[derive(Debug, Clone)]
pub struct Generator {
    config: ProcessConfig,
    sampler: crate::distributions::JumpSampler,
}

impl Generator {
    pub fn config(&self) -> &ProcessConfig {
        &self.config
    }

    /// Overwrites `values` with `X_0 .. X_n`.
    pub fn fill<R: Rng + ?Sized>(&self, n: usize, rng: &mut R, values: &mut Vec<f64>) {
        let cfg = &self.config;
        let c = cfg.drift;
        values.clear();
        values.reserve(n + 1);
        match cfg.kind {
            ProcessKind::Iid => {
                for _ in 0..=n {
                    values.push(self.sampler.sample(rng) + c);
                }
            }
            ProcessKind::RandomWalk => {
                let mut x = 0.0;
                values.push(x);
                for _ in 0..n {
                    x += self.sampler.sample(rng) + c;
                    values.push(x);
                }
            }
            ProcessKind::Ar1 => {
                let a = cfg.alpha;
                let mut x = 0.0;
                values.push(x);
                for _ in 0..n {
                    x = a * x + self.sampler.sample(rng) + c;
                    values.push(x);
                }
            }
            ProcessKind::Garch11 | ProcessKind::ArGarch => {
                self.garch_path(n, rng, values, None);
            }
        }
    }

    /// Like [`Generator::fill`], also recording `sigma_i` (with `sigma_0`
    /// set to the stationary seed value). Non-GARCH kinds report the jump
    /// scale as a constant volatility.
    pub fn fill_with_sigma<R: Rng + ?Sized>(
        &self,
        n: usize,
        rng: &mut R,
        values: &mut Vec<f64>,
        sigma: &mut Vec<f64>,
    ) {
        sigma.clear();
        if matches!(self.config.kind, ProcessKind::Garch11 | ProcessKind::ArGarch) {
            values.clear();
            self.garch_path(n, rng, values, Some(sigma));
        } else {
            self.fill(n, rng, values);
            sigma.resize(n + 1, self.config.jump.scale());
        }
    }

    fn garch_path<R: Rng + ?Sized>(
        &self,
        n: usize,
        rng: &mut R,
        values: &mut Vec<f64>,
        mut sigma_out: Option<&mut Vec<f64>>,
    ) {
        let cfg = &self.config;
        let a = if cfg.kind == ProcessKind::ArGarch { cfg.alpha } else { 1.0 };
        let (a0, a1, b1, c) = (cfg.alpha0, cfg.alpha1, cfg.beta1, cfg.drift);
        let mut var = a0 / (1.0 - a1 - b1);
        let mut x = 0.0;
        values.push(x);
        if let Some(s) = sigma_out.as_deref_mut() {
            s.push(var.sqrt());
        }
        for i in 0..n {
            let sd = var.sqrt();
            let shock = sd * self.sampler.sample(rng);
            x = a * x + shock + c;
            values.push(x);
            if let Some(s) = sigma_out.as_deref_mut() {
                s.push(sd);
            }
            if i + 1 < n {
                var = a0 + a1 * shock * shock + b1 * var;
            }
        }
    }
}

/// A realized path. `values[0]` is the initial entry (zero for every kind
/// except `iid`, whose entries are all independent draws).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub values: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<Vec<f64>>,
}

impl Trajectory {
    /// Walk starting at 0 with the given increments.
    pub fn from_increments(increments: &[f64]) -> Self {
        let mut x = 0.0;
        let mut values = Vec::with_capacity(increments.len() + 1);
        values.push(x);
        for d in increments {
            x += d;
            values.push(x);
        }
        Self { values, sigma: None }
    }

    pub fn steps(&self) -> usize {
        self.values.len().saturating_sub(1)
    }

    /// CSV with columns `step,value[,sigma]`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        match &self.sigma {
            Some(sigma) => {
                writeln!(out, "step,value,sigma")?;
                for (i, (v, s)) in self.values.iter().zip(sigma).enumerate() {
                    writeln!(out, "{i},{v},{s}")?;
                }
            }
            None => {
                writeln!(out, "step,value")?;
                for (i, v) in self.values.iter().enumerate() {
                    writeln!(out, "{i},{v}")?;
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::montecarlo::substream;
    use approx::assert_relative_eq;

    fn gauss() -> DistributionSpec {
        DistributionSpec::standard_normal()
    }

    #[test]
    fn stationary_variance_examples() {
        let g = ProcessConfig::garch11(gauss(), 0.1, 0.2, 0.3);
        assert_relative_eq!(g.stationary_variance().unwrap(), 0.2, epsilon = 1e-15);
        let p = ProcessConfig::ar_garch(gauss(), 0.0032, 0.9993, 0.000019, 0.12, 0.85);
        assert_relative_eq!(p.stationary_variance().unwrap(), 6.333e-4, max_relative = 1e-3);
        let id = ProcessConfig::garch11(gauss(), 1.0, 0.0, 0.0);
        assert_eq!(id.stationary_variance().unwrap(), 1.0);
        assert!(matches!(
            ProcessConfig::random_walk(gauss(), 0.0).stationary_variance(),
            Err(ProcessError::NotGarch(_))
        ));
        assert!(matches!(
            ProcessConfig::garch11(gauss(), 1.0, 0.5, 0.5).stationary_variance(),
            Err(ProcessError::NonStationary(_))
        ));
    }

    #[test]
    fn config_errors() {
        let mut rng = substream(0, 0);
        assert!(matches!(
            ProcessConfig::garch11(gauss(), 1.0, 0.6, 0.5).generate(10, &mut rng),
            Err(ProcessError::NonStationary(_))
        ));
        assert!(matches!(
            ProcessConfig::ar1(gauss(), 1.2, 0.0).generate(10, &mut rng),
            Err(ProcessError::AlphaOutOfRange(_))
        ));
        assert!(matches!(
            ProcessConfig::ar1(gauss(), -0.1, 0.0).generate(10, &mut rng),
            Err(ProcessError::AlphaOutOfRange(_))
        ));
        assert!(ProcessConfig::random_walk(gauss(), 0.0).generate(0, &mut rng).is_err());
    }

    #[test]
    fn ar1_alpha_one_is_random_walk() {
        let ar = ProcessConfig::ar1(gauss(), 1.0, 0.0);
        let rw = ProcessConfig::random_walk(gauss(), 0.0);
        let a = ar.generate(500, &mut substream(42, 3)).unwrap();
        let b = rw.generate(500, &mut substream(42, 3)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.values[0], 0.0);
        assert_eq!(a.steps(), 500);
    }

    #[test]
    fn ar1_alpha_zero_returns_raw_draws() {
        let ar = ProcessConfig::ar1(gauss(), 0.0, 0.0);
        let t = ar.generate(200, &mut substream(9, 1)).unwrap();
        let sampler = gauss().sampler();
        let mut rng = substream(9, 1);
        assert_eq!(t.values[0], 0.0);
        for i in 1..=200 {
            assert_eq!(t.values[i], sampler.sample(&mut rng));
        }
    }

    #[test]
    fn iid_draws_every_entry() {
        let t = ProcessConfig::iid(gauss()).generate(50, &mut substream(1, 1)).unwrap();
        let sampler = gauss().sampler();
        let mut rng = substream(1, 1);
        for v in &t.values {
            assert_eq!(*v, sampler.sample(&mut rng));
        }
    }

    #[test]
    fn garch_without_feedback_has_constant_volatility() {
        let g = ProcessConfig::garch11(gauss(), 0.25, 0.0, 0.0);
        let t = g.generate(300, &mut substream(5, 5)).unwrap();
        for s in t.sigma.as_ref().unwrap() {
            assert_relative_eq!(*s, 0.5, epsilon = 1e-15);
        }
        // identical draws to a random walk with jump scale sqrt(alpha0)
        let rw = ProcessConfig::random_walk(DistributionSpec::gaussian(0.5).unwrap(), 0.0);
        let w = rw.generate(300, &mut substream(5, 5)).unwrap();
        for (a, b) in t.values.iter().zip(&w.values) {
            assert_relative_eq!(*a, *b, max_relative = 1e-12, epsilon = 1e-12);
        }
    }

    #[test]
    fn garch_volatility_recursion_matches_hand_evaluation() {
        let g = ProcessConfig::ar_garch(gauss(), 0.01, 0.9, 0.05, 0.1, 0.8);
        let t = g.generate(20, &mut substream(77, 0)).unwrap();
        let sigma = t.sigma.as_ref().unwrap();
        let mut var: f64 = 0.05 / (1.0 - 0.1 - 0.8);
        assert_relative_eq!(sigma[1], var.sqrt(), epsilon = 1e-15);
        for i in 1..20 {
            let shock = t.values[i] - 0.9 * t.values[i - 1] - 0.01;
            var = 0.05 + 0.1 * shock * shock + 0.8 * var;
            assert_relative_eq!(sigma[i + 1], var.sqrt(), max_relative = 1e-12);
        }
    }

    #[test]
    fn garch_volatility_positive() {
        let g = ProcessConfig::garch11(DistributionSpec::students_t(3.0, 1.0).unwrap(), 1e-6, 0.12, 0.85);
        for r in 0..20 {
            let t = g.generate(2000, &mut substream(3, r)).unwrap();
            assert!(t.sigma.unwrap().iter().all(|s| *s > 0.0));
        }
    }

    #[test]
    fn garch_increment_variance_matches_stationary_value() {
        let g = ProcessConfig::garch11(gauss(), 0.1, 0.1, 0.6);
        let target = g.stationary_variance().unwrap();
        let t = g.generate(1_010_000, &mut substream(123, 0)).unwrap();
        let inc: Vec<f64> = t.values.windows(2).skip(10_000).map(|w| w[1] - w[0]).collect();
        let mean = inc.iter().sum::<f64>() / inc.len() as f64;
        let var = inc.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (inc.len() - 1) as f64;
        assert!((var / target - 1.0).abs() < 0.03, "{var} vs {target}");
    }

    proptest::proptest! {
        #[test]
        fn reversed_increments_share_endpoint(k in proptest::collection::vec(-(1i64 << 40)..(1i64 << 40), 1..300)) {
            // dyadic increments keep every partial sum exact
            let inc: Vec<f64> = k.iter().map(|&v| v as f64 / 1024.0).collect();
            let mut rev = inc.clone();
            rev.reverse();
            let a = Trajectory::from_increments(&inc);
            let b = Trajectory::from_increments(&rev);
            proptest::prop_assert_eq!(a.values.last(), b.values.last());
        }
    }

    #[test]
    fn same_seed_same_path() {
        let cfg = ProcessConfig::ar_garch(
            DistributionSpec::students_t(3.0, 1.0).unwrap().unit_variance().unwrap(),
            0.0032,
            0.9993,
            0.000019,
            0.12,
            0.85,
        );
        let a = cfg.generate(5000, &mut substream(99, 17)).unwrap();
        let b = cfg.generate(5000, &mut substream(99, 17)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn csv_export() {
        let t = Trajectory {
            values: vec![0.0, 1.5],
            sigma: Some(vec![1.0, 1.0]),
        };
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "step,value,sigma\n0,0,1\n1,1.5,1\n");
    }

    #[test]
    fn config_json() {
        let js = r#"{"kind":"ar_garch","jump":{"family":"students_t","scale":1.0,"nu":3.0},
                     "drift":0.0032,"alpha":0.9993,"alpha0":0.000019,"alpha1":0.12,"beta1":0.85}"#;
        let cfg: ProcessConfig = serde_json::from_str(js).unwrap();
        assert_eq!(cfg.kind, ProcessKind::ArGarch);
        assert_eq!(cfg.beta1, 0.85);
        let rw: ProcessConfig = serde_json::from_str(r#"{"kind":"random_walk"}"#).unwrap();
        assert_eq!(rw, ProcessConfig::random_walk(gauss(), 0.0));
    }
}
