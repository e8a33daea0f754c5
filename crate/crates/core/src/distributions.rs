//! Symmetric jump and innovation distributions.
//!
//! A [`DistributionSpec`] is a plain value (family, scale, tail parameter).
//! Sampling goes through a prepared [`JumpSampler`] so hot loops do not
//! rebuild the underlying `rand_distr` objects on every draw.

use std::f64::consts::{PI, SQRT_2};

use rand::Rng;
use rand_distr::{Cauchy, Distribution, StandardNormal, StudentT};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DistributionError {
    #[error("scale must be positive and finite, got {0}")]
    InvalidScale(f64),
    #[error("students_t requires a positive finite nu, got {0:?}")]
    InvalidNu(Option<f64>),
    #[error("{0:?} has no finite variance and cannot be normalized to unit variance")]
    InfiniteVariance(Family),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Gaussian,
    Uniform,
    Laplace,
    Cauchy,
    StudentsT,
}

/// A symmetric, zero-centred continuous distribution.
///
/// `scale` is the standard deviation for `Gaussian`, the half-width for
/// `Uniform`, and the scale parameter for `Laplace`, `Cauchy` and `StudentsT`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSpec", into = "RawSpec")]
pub struct DistributionSpec {
    family: Family,
    scale: f64,
    nu: Option<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawSpec {
    family: Family,
    #[serde(default = "one")]
    scale: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    nu: Option<f64>,
}

fn one() -> f64 {
    1.0
}

impl TryFrom<RawSpec> for DistributionSpec {
    type Error = DistributionError;

    fn try_from(raw: RawSpec) -> Result<Self, Self::Error> {
        DistributionSpec::new(raw.family, raw.scale, raw.nu)
    }
}

impl From<DistributionSpec> for RawSpec {
    fn from(spec: DistributionSpec) -> Self {
        RawSpec {
            family: spec.family,
            scale: spec.scale,
            nu: spec.nu,
        }
    }
}

impl DistributionSpec {
    pub fn new(family: Family, scale: f64, nu: Option<f64>) -> Result<Self, DistributionError> {
        if !(scale.is_finite() && scale > 0.0) {
            return Err(DistributionError::InvalidScale(scale));
        }
        let nu = match family {
            Family::StudentsT => match nu {
                Some(v) if v.is_finite() && v > 0.0 => Some(v),
                other => return Err(DistributionError::InvalidNu(other)),
            },
            _ => None,
        };
        Ok(Self { family, scale, nu })
    }

    pub fn gaussian(sigma: f64) -> Result<Self, DistributionError> {
        Self::new(Family::Gaussian, sigma, None)
    }

    pub fn uniform(half_width: f64) -> Result<Self, DistributionError> {
        Self::new(Family::Uniform, half_width, None)
    }

    pub fn laplace(scale: f64) -> Result<Self, DistributionError> {
        Self::new(Family::Laplace, scale, None)
    }

    pub fn cauchy(scale: f64) -> Result<Self, DistributionError> {
        Self::new(Family::Cauchy, scale, None)
    }

    pub fn students_t(nu: f64, scale: f64) -> Result<Self, DistributionError> {
        Self::new(Family::StudentsT, scale, Some(nu))
    }

    /// Standard normal, the default jump distribution.
    pub fn standard_normal() -> Self {
        Self {
            family: Family::Gaussian,
            scale: 1.0,
            nu: None,
        }
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn nu(&self) -> Option<f64> {
        self.nu
    }

    /// Same family rescaled so that the variance is exactly one.
    ///
    /// Students-T with `nu = 3` becomes `2 / (pi (1 + x^2)^2)`.
    pub fn unit_variance(&self) -> Result<Self, DistributionError> {
        let var = self
            .variance()
            .ok_or(DistributionError::InfiniteVariance(self.family))?;
        Self::new(self.family, self.scale / var.sqrt(), self.nu)
    }

    pub fn pdf(&self, x: f64) -> f64 {
        let s = self.scale;
        let z = x / s;
        match self.family {
            Family::Gaussian => (-0.5 * z * z).exp() / (s * (2.0 * PI).sqrt()),
            Family::Uniform => {
                if z.abs() <= 1.0 {
                    0.5 / s
                } else {
                    0.0
                }
            }
            Family::Laplace => (-z.abs()).exp() / (2.0 * s),
            Family::Cauchy => 1.0 / (PI * s * (1.0 + z * z)),
            Family::StudentsT => {
                let nu = self.nu_unchecked();
                (students_t_log_norm(nu) - 0.5 * (nu + 1.0) * (z * z / nu).ln_1p()).exp() / s
            }
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        let z = x / self.scale;
        match self.family {
            Family::Gaussian => 0.5 * statrs::function::erf::erfc(-z / SQRT_2),
            Family::Uniform => ((z + 1.0) / 2.0).clamp(0.0, 1.0),
            Family::Laplace => {
                if z < 0.0 {
                    0.5 * z.exp()
                } else {
                    1.0 - 0.5 * (-z).exp()
                }
            }
            Family::Cauchy => 0.5 + z.atan() / PI,
            Family::StudentsT => {
                let nu = self.nu_unchecked();
                let ib = statrs::function::beta::beta_reg(0.5 * nu, 0.5, nu / (nu + z * z));
                if z < 0.0 {
                    0.5 * ib
                } else {
                    1.0 - 0.5 * ib
                }
            }
        }
    }

    /// `None` when the second moment diverges (Cauchy, Students-T with nu <= 2).
    pub fn variance(&self) -> Option<f64> {
        let s2 = self.scale * self.scale;
        match self.family {
            Family::Gaussian => Some(s2),
            Family::Uniform => Some(s2 / 3.0),
            Family::Laplace => Some(2.0 * s2),
            Family::Cauchy => None,
            Family::StudentsT => {
                let nu = self.nu_unchecked();
                (nu > 2.0).then(|| s2 * nu / (nu - 2.0))
            }
        }
    }

    pub fn density_at_zero(&self) -> f64 {
        self.pdf(0.0)
    }

    /// Tail index of the jump distribution: 2 for every finite-variance
    /// family, 1 for Cauchy, `min(nu, 2)` for Students-T.
    pub fn levy_index(&self) -> f64 {
        match self.family {
            Family::Cauchy => 1.0,
            Family::StudentsT => self.nu_unchecked().min(2.0),
            _ => 2.0,
        }
    }

    pub fn sampler(&self) -> JumpSampler {
        let kind = match self.family {
            Family::Gaussian => SamplerKind::Gaussian,
            Family::Uniform => SamplerKind::Uniform,
            Family::Laplace => SamplerKind::Laplace,
            Family::Cauchy => SamplerKind::Cauchy(Cauchy::new(0.0, 1.0).expect("unit cauchy")),
            Family::StudentsT => {
                SamplerKind::StudentsT(StudentT::new(self.nu_unchecked()).expect("validated nu"))
            }
        };
        JumpSampler {
            kind,
            scale: self.scale,
        }
    }

    /// One draw. Prefer [`DistributionSpec::sampler`] inside loops.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.sampler().sample(rng)
    }

    fn nu_unchecked(&self) -> f64 {
        self.nu.expect("students_t spec always carries nu")
    }
}

impl Default for DistributionSpec {
    fn default() -> Self {
        Self::standard_normal()
    }
}

fn students_t_log_norm(nu: f64) -> f64 {
    ln_gamma(0.5 * (nu + 1.0)) - ln_gamma(0.5 * nu) - 0.5 * (nu * PI).ln()
}

#[derive(Debug, Clone, Copy)]
enum SamplerKind {
    Gaussian,
    Uniform,
    Laplace,
    Cauchy(Cauchy<f64>),
    StudentsT(StudentT<f64>),
}

/// Prepared sampler for a [`DistributionSpec`].
#[derive(Debug, Clone, Copy)]
pub struct JumpSampler {
    kind: SamplerKind,
    scale: f64,
}

impl Distribution<f64> for JumpSampler {
    #[inline]
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let unit: f64 = match &self.kind {
            SamplerKind::Gaussian => rng.sample(StandardNormal),
            SamplerKind::Uniform => rng.random_range(-1.0..=1.0),
            SamplerKind::Laplace => {
                // inverse CDF on u in (-1/2, 1/2)
                let u: f64 = rng.random::<f64>() - 0.5;
                let mag = -(1.0 - 2.0 * u.abs()).ln();
                if u < 0.0 {
                    -mag
                } else {
                    mag
                }
            }
            SamplerKind::Cauchy(c) => c.sample(rng),
            SamplerKind::StudentsT(t) => t.sample(rng),
        };
        self.scale * unit
    }
}
