use anyhow::{bail, Result};
use clap::ArgGroup;

use recstats::analytics::{tabulate, AnalyticParams, FormulaFamily};

use crate::args::RunArgs;
use crate::output::Output;

#[derive(Debug, clap::Args)]
#[command(group(ArgGroup::new("family").required(true).multiple(false).args([
    "iid", "rw", "small_drift", "gaussian_asymptotic", "cauchy", "ar1", "ensemble", "fpt", "half_gaussian",
])))]
pub struct Args {
    /// i.i.d. record rate and mean record number.
    #[arg(long)]
    pub iid: bool,
    /// Symmetric random walk, exact and asymptotic.
    #[arg(long)]
    pub rw: bool,
    /// Walk with a small drift (upper and lower records).
    #[arg(long)]
    pub small_drift: bool,
    /// Mean records of a Gaussian walk with drift, erfc-sum form.
    #[arg(long)]
    pub gaussian_asymptotic: bool,
    /// Cauchy walk with drift.
    #[arg(long)]
    pub cauchy: bool,
    /// AR(1) record-rate conjecture.
    #[arg(long)]
    pub ar1: bool,
    /// Maximum of N walkers.
    #[arg(long)]
    pub ensemble: bool,
    /// Mean first-passage time of the symmetric walk.
    #[arg(long)]
    pub fpt: bool,
    /// Record-number distribution at n = --n-max.
    #[arg(long)]
    pub half_gaussian: bool,
    #[arg(long, default_value_t = 1)]
    pub n_min: u64,
    #[arg(long, default_value_t = 1000)]
    pub n_max: u64,
    #[arg(long, default_value_t = 1)]
    pub n_step: u64,
    /// Use this many logarithmically spaced n values instead of a step.
    #[arg(long)]
    pub log_points: Option<usize>,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub c: f64,
    #[arg(long, default_value_t = 1.0)]
    pub sigma: f64,
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
    #[arg(long, default_value_t = 2)]
    pub walkers: u64,
    #[command(flatten)]
    pub run: RunArgs,
}

impl Args {
    fn family(&self) -> FormulaFamily {
        use FormulaFamily as F;
        [
            (self.iid, F::Iid),
            (self.rw, F::Rw),
            (self.small_drift, F::SmallDrift),
            (self.gaussian_asymptotic, F::GaussianAsymptotic),
            (self.cauchy, F::Cauchy),
            (self.ar1, F::Ar1),
            (self.ensemble, F::Ensemble),
            (self.fpt, F::Fpt),
            (self.half_gaussian, F::HalfGaussian),
        ]
        .into_iter()
        .find(|(on, _)| *on)
        .map(|(_, f)| f)
        .expect("clap enforces one family")
    }

    fn n_values(&self) -> Result<Vec<u64>> {
        if self.n_min > self.n_max {
            bail!("--n-min {} exceeds --n-max {}", self.n_min, self.n_max);
        }
        if let Some(k) = self.log_points {
            if k < 2 {
                bail!("--log-points needs at least 2 points");
            }
            let (lo, hi) = ((self.n_min.max(1) as f64).ln(), (self.n_max as f64).ln());
            let mut v: Vec<u64> = (0..k)
                .map(|i| (lo + (hi - lo) * i as f64 / (k - 1) as f64).exp().round() as u64)
                .collect();
            v.dedup();
            return Ok(v);
        }
        if self.n_step == 0 {
            bail!("--n-step must be positive");
        }
        Ok((self.n_min..=self.n_max).step_by(self.n_step as usize).collect())
    }
}

pub fn run(a: Args, invocation: &str) -> Result<()> {
    let family = a.family();
    let params = AnalyticParams {
        c: a.c,
        sigma: a.sigma,
        alpha: a.alpha,
        walkers: a.walkers,
    };
    let table = tabulate(family, &params, &a.n_values()?)?;
    let name = serde_json::to_value(family)?.as_str().unwrap_or("formula").to_string();
    let mut out = Output::new(a.run.out_dir.clone(), "formulas", invocation, a.run.seed)?;
    out.csv(&format!("formulas_{name}.csv"), |w| table.write_csv(w))?;
    out.finish()
}
