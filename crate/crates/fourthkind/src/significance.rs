//! Significance of likelihood regions and rarity calibration.
//!
//! The significance beta(alpha) is the worst-case probability, over data
//! generated from any parameter in the box, that the generating parameter
//! falls outside the relative-likelihood region of rarity alpha. Closed
//! forms cover the chi-square asymptotics and the Gaussian surrogate; a
//! Monte Carlo estimator covers everything else by simulating data on a
//! Latin hypercube of generating parameters and reusing each trial's
//! relative likelihood across a whole alpha grid. Calibration inverts any
//! of these to the largest rarity meeting a significance target.

use std::fmt as stdfmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::model::{Dataset, LikelihoodMode, ModelSpec, ParameterBox};
use crate::numerics::{chi2_cdf, chi2_quantile, RandomStream};
use crate::{Error, Result};

pub const DEFAULT_TRIALS: usize = 1000;
pub const DEFAULT_GRID_POINTS: usize = 25;
/// Evaluation budget for the per-trial maximum likelihood refit in exact
/// mode.
pub const DEFAULT_INNER_BUDGET: usize = 5000;
/// Trial counts below this carry a warning on the estimate.
pub const MIN_TRUSTED_TRIALS: usize = 100;
/// Size of the standard calibration alpha grid.
pub const CALIBRATION_GRID: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BetaMethod {
    Asymptotic,
    GaussianSurrogate,
    MonteCarlo,
}

impl stdfmt::Display for BetaMethod {
    fn fmt(&self, f: &mut stdfmt::Formatter<'_>) -> stdfmt::Result {
        let name = match self {
            BetaMethod::Asymptotic => "asymptotic",
            BetaMethod::GaussianSurrogate => "gaussian-surrogate",
            BetaMethod::MonteCarlo => "monte-carlo",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetaEstimate {
    pub alpha: f64,
    pub beta: f64,
    pub stderr: f64,
    pub method: BetaMethod,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetaCurve {
    pub points: Vec<BetaEstimate>,
}

impl BetaCurve {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("alpha,beta,stderr,method\n");
        for p in &self.points {
            out.push_str(&crate::fmt::csv_row(&[p.alpha, p.beta, p.stderr]));
            out.push(',');
            out.push_str(&p.method.to_string());
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct McConfig {
    pub trials: usize,
    pub grid_points: usize,
    pub inner_budget: usize,
}

impl Default for McConfig {
    fn default() -> Self {
        Self {
            trials: DEFAULT_TRIALS,
            grid_points: DEFAULT_GRID_POINTS,
            inner_budget: DEFAULT_INNER_BUDGET,
        }
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !alpha.is_finite() || alpha <= 0.0 {
        return Err(Error::Domain(format!(
            "alpha must be positive and finite, got {alpha}"
        )));
    }
    Ok(())
}

fn check_beta_target(beta_star: f64) -> Result<()> {
    if !beta_star.is_finite() || beta_star <= 0.0 || beta_star > 1.0 {
        return Err(Error::Domain(format!(
            "significance target must lie in (0, 1], got {beta_star}"
        )));
    }
    Ok(())
}

/// Wilks asymptotics: P(chi2_k > 2 ln(1/alpha)).
pub fn beta_asymptotic(k: u32, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    if k == 0 {
        return Err(Error::Domain("degrees of freedom must be positive".into()));
    }
    let x = (2.0 * (1.0 / alpha).ln()).max(0.0);
    if !x.is_finite() {
        return Ok(0.0);
    }
    Ok(1.0 - chi2_cdf(k, x)?)
}

/// Gaussian surrogate significance for an r-dimensional residual over
/// `n_samples` repeated observations: P(chi2_r > 2N/(2N-1) ln(1/alpha)).
pub fn beta_gaussian_surrogate(r: u32, n_samples: usize, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    if r == 0 || n_samples == 0 {
        return Err(Error::Domain(
            "residual dimension and sample count must be positive".into(),
        ));
    }
    let n = n_samples as f64;
    let x = (2.0 * n / (2.0 * n - 1.0) * (1.0 / alpha).ln()).max(0.0);
    if !x.is_finite() {
        return Ok(0.0);
    }
    Ok(1.0 - chi2_cdf(r, x)?)
}

/// Largest rarity whose asymptotic significance meets the target.
pub fn alpha_for_beta_asymptotic(k: u32, beta_star: f64) -> Result<f64> {
    check_beta_target(beta_star)?;
    if k == 0 {
        return Err(Error::Domain("degrees of freedom must be positive".into()));
    }
    let q = chi2_quantile(k, 1.0 - beta_star)?;
    Ok((-q / 2.0).exp())
}

/// Largest rarity whose Gaussian-surrogate significance meets the target.
pub fn alpha_for_beta_surrogate(r: u32, n_samples: usize, beta_star: f64) -> Result<f64> {
    check_beta_target(beta_star)?;
    if r == 0 || n_samples == 0 {
        return Err(Error::Domain(
            "residual dimension and sample count must be positive".into(),
        ));
    }
    let n = n_samples as f64;
    let q = chi2_quantile(r, 1.0 - beta_star)?;
    Ok((-q * (2.0 * n - 1.0) / (2.0 * n)).exp())
}

/// Geometrically spaced rarity grid on [1e-6, 1].
pub fn log_spaced_alphas(count: usize) -> Vec<f64> {
    assert!(count >= 2, "alpha grid needs at least two points");
    (0..count)
        .map(|i| {
            if i == count - 1 {
                1.0
            } else {
                10f64.powf(-6.0 * (1.0 - i as f64 / (count - 1) as f64))
            }
        })
        .collect()
}

/// Latin hypercube sample: each axis is split into `count` strata and every
/// stratum is hit exactly once, in an order shuffled per axis.
pub fn latin_hypercube(bx: &ParameterBox, count: usize, stream: &RandomStream) -> Vec<Vec<f64>> {
    let dim = bx.dim();
    let mut axes: Vec<Vec<f64>> = Vec::with_capacity(dim);
    for axis in 0..dim {
        let mut sub = stream.split_index("lhs-axis", axis as u64);
        let mut strata: Vec<usize> = (0..count).collect();
        for i in (1..count).rev() {
            let j = sub.index(i + 1);
            strata.swap(i, j);
        }
        let lo = bx.lower[axis];
        let width = bx.upper[axis] - bx.lower[axis];
        let vals = strata
            .iter()
            .map(|&s| lo + width * ((s as f64 + sub.uniform()) / count as f64))
            .collect();
        axes.push(vals);
    }
    (0..count)
        .map(|i| (0..dim).map(|a| axes[a][i]).collect())
        .collect()
}

/// Generating-parameter grid for Monte Carlo significance: a Latin
/// hypercube plus the observed maximum likelihood point, dropping points
/// the model cannot simulate data from.
pub fn monte_carlo_grid(
    model: &ModelSpec,
    data: &Dataset,
    cfg: &McConfig,
    stream: &RandomStream,
) -> Result<Vec<Vec<f64>>> {
    model.validate()?;
    let mut grid = latin_hypercube(&model.parameter_box(), cfg.grid_points, &stream.split("lhs"));
    let observed = model.find_mle(data, cfg.inner_budget, &mut stream.split("observed-mle"))?;
    grid.push(observed.theta);
    let n = model.replication_count(data);
    let simulable: Vec<Vec<f64>> = grid
        .into_iter()
        .enumerate()
        .filter(|(i, theta)| {
            let mut probe = stream.split_index("probe", *i as u64);
            model.sample_data(theta, n, &mut probe).is_ok()
        })
        .map(|(_, theta)| theta)
        .collect();
    if simulable.is_empty() {
        return Err(Error::Calibration(
            "no grid point can generate data under the model".into(),
        ));
    }
    Ok(simulable)
}

/// Monte Carlo significance curve over `alphas`, reusing every trial's
/// relative likelihood across the whole grid of rarities.
pub fn beta_curve_monte_carlo(
    model: &ModelSpec,
    data: &Dataset,
    mode: LikelihoodMode,
    alphas: &[f64],
    cfg: &McConfig,
    stream: &RandomStream,
) -> Result<BetaCurve> {
    if cfg.trials == 0 {
        return Err(Error::Domain("trial count must be positive".into()));
    }
    if alphas.is_empty() {
        return Err(Error::Domain("alpha grid must be nonempty".into()));
    }
    for &a in alphas {
        check_alpha(a)?;
    }
    let grid = monte_carlo_grid(model, data, cfg, stream)?;
    let n = model.replication_count(data);
    let trials = cfg.trials;

    // relative log likelihood of the generating point under its own data,
    // one value per (grid point, trial)
    let rel: Vec<f64> = (0..grid.len() * trials)
        .into_par_iter()
        .map(|flat| -> Result<f64> {
            let i = flat / trials;
            let t = flat % trials;
            let theta = &grid[i];
            let mut sub = stream
                .split_index("mc-point", i as u64)
                .split_index("trial", t as u64);
            let sample = model.sample_data(theta, n, &mut sub)?;
            let mle = match mode {
                LikelihoodMode::Exact => {
                    Some(model.find_mle(&sample, cfg.inner_budget, &mut sub)?)
                }
                LikelihoodMode::Surrogate => None,
            };
            model.relative_log_likelihood(&sample, theta, mode, mle.as_ref())
        })
        .collect::<Result<Vec<f64>>>()?;

    let warning = (trials < MIN_TRUSTED_TRIALS).then(|| {
        format!("only {trials} trials; below the trusted minimum {MIN_TRUSTED_TRIALS}")
    });
    let mut points = Vec::with_capacity(alphas.len());
    for &alpha in alphas {
        let ln_alpha = alpha.ln();
        let mut worst = 0usize;
        for i in 0..grid.len() {
            let outside = rel[i * trials..(i + 1) * trials]
                .iter()
                .filter(|r| !(**r >= ln_alpha))
                .count();
            worst = worst.max(outside);
        }
        let beta = worst as f64 / trials as f64;
        let stderr = (beta * (1.0 - beta) / trials as f64).sqrt();
        points.push(BetaEstimate {
            alpha,
            beta,
            stderr,
            method: BetaMethod::MonteCarlo,
            warning: warning.clone(),
        });
    }
    Ok(BetaCurve { points })
}

/// Monte Carlo significance at a single rarity.
pub fn beta_monte_carlo(
    model: &ModelSpec,
    data: &Dataset,
    mode: LikelihoodMode,
    alpha: f64,
    cfg: &McConfig,
    stream: &RandomStream,
) -> Result<BetaEstimate> {
    let curve = beta_curve_monte_carlo(model, data, mode, &[alpha], cfg, stream)?;
    Ok(curve.points.into_iter().next().expect("one point requested"))
}

/// Largest rarity on the curve whose estimate plus two standard errors
/// meets the target.
pub fn calibrate_from_curve(curve: &BetaCurve, beta_star: f64) -> Result<f64> {
    check_beta_target(beta_star)?;
    let best = curve
        .points
        .iter()
        .filter(|p| p.beta + 2.0 * p.stderr <= beta_star)
        .map(|p| p.alpha)
        .fold(f64::NAN, f64::max);
    if best.is_nan() {
        return Err(Error::Calibration(format!(
            "no rarity on the curve reaches significance {beta_star}"
        )));
    }
    Ok(best)
}

/// Monte Carlo calibration over the standard rarity grid; returns the
/// chosen rarity together with the curve it came from.
pub fn alpha_for_beta_monte_carlo(
    model: &ModelSpec,
    data: &Dataset,
    mode: LikelihoodMode,
    beta_star: f64,
    cfg: &McConfig,
    stream: &RandomStream,
) -> Result<(f64, BetaCurve)> {
    check_beta_target(beta_star)?;
    let alphas = log_spaced_alphas(CALIBRATION_GRID);
    let curve = beta_curve_monte_carlo(model, data, mode, &alphas, cfg, stream)?;
    let alpha = calibrate_from_curve(&curve, beta_star)?;
    Ok((alpha, curve))
}
