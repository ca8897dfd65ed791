//! Farthest point of a likelihood region's image under the QoI map.
//!
//! Maximizes the distance from a fixed center to phi(theta) over the region
//! by merit continuation: differential evolution minimizes
//! -dist^2 + mu * violation for a geometrically growing penalty mu, keeping
//! the best feasible point seen so far and reinjecting it every round. The
//! region anchor (the likelihood maximizer) seeds every round, so regions
//! that collapse to the anchor resolve exactly.

use crate::de::{self, DeConfig};
use crate::model::{ModelKind, Qoi};
use crate::numerics::RandomStream;
use crate::region::LikelihoodRegion;
use crate::{Error, Result};

/// Penalty continuation schedule for the constrained maximization.
#[derive(Debug, Clone)]
pub struct MeritConfig {
    pub mu0: f64,
    pub growth: f64,
    pub mu_cap: f64,
}

impl Default for MeritConfig {
    fn default() -> Self {
        Self {
            mu0: 1.0,
            growth: 10.0,
            mu_cap: 1e8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FarthestResult {
    pub theta: Vec<f64>,
    pub phi: Vec<f64>,
    pub distance: f64,
    pub evals: usize,
    pub rounds: usize,
}

/// Constraint slack accepted as feasible. Zero when alpha >= 1: there the
/// region is at most the anchor itself and membership must be exact so that
/// degenerate games resolve without noise. Otherwise relative to the
/// constraint scale.
pub fn feasibility_tol(region: &LikelihoodRegion) -> f64 {
    if region.alpha() >= 1.0 {
        return 0.0;
    }
    let scale = match region.model().kind {
        ModelKind::BernoulliCoins => region.log_alpha().abs(),
        _ => region
            .gaussian_threshold()
            .map(f64::abs)
            .unwrap_or(0.0),
    };
    let scale = if scale.is_finite() { scale } else { 0.0 };
    1e-9 * (1.0 + scale)
}

/// Point of the region whose image lies farthest from `center`.
///
/// Substreams are derived from `stream` by label, so repeated calls with the
/// same stream are identical; callers wanting independent searches must pass
/// distinct substreams.
pub fn farthest_point(
    region: &LikelihoodRegion,
    qoi: &Qoi,
    center: &[f64],
    de_cfg: &DeConfig,
    merit: &MeritConfig,
    stream: &RandomStream,
) -> Result<FarthestResult> {
    let model = region.model();
    let out_dim = qoi.output_dim(model.dim());
    if center.len() != out_dim || center.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain(format!(
            "farthest center must be finite with dimension {out_dim}"
        )));
    }
    if !(merit.mu0 > 0.0) || !(merit.growth > 1.0) || merit.mu_cap < merit.mu0 {
        return Err(Error::Domain("invalid merit schedule".into()));
    }

    let lower = &model.theta_lower;
    let upper = &model.theta_upper;
    let tol = feasibility_tol(region);
    let dist2 = |theta: &[f64]| -> f64 {
        qoi.apply(theta)
            .iter()
            .zip(center)
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    };

    let mut evals = 0usize;
    let mut rounds = 0usize;
    // best feasible point by true distance, penalty-free
    let mut incumbent: Option<(Vec<f64>, f64)> = None;
    let anchor = region.anchor();
    if let Some(a) = &anchor {
        if region.violation(a) <= tol {
            let d2 = dist2(a);
            incumbent = Some((a.clone(), d2));
        }
    }

    // bootstrap: with no feasible point in hand, search for feasibility alone
    if incumbent.is_none() {
        let objective = |theta: &[f64]| region.violation(theta);
        let inject: Vec<Vec<f64>> = anchor.iter().cloned().collect();
        let mut sub = stream.split("feasibility");
        let res = de::minimize(&objective, lower, upper, de_cfg, &inject, &mut sub);
        evals += res.evals;
        rounds += 1;
        if region.violation(&res.best) <= tol {
            let d2 = dist2(&res.best);
            incumbent = Some((res.best, d2));
        }
    }

    let mut mu = merit.mu0;
    let mut round = 0u64;
    loop {
        let objective = |theta: &[f64]| -> f64 { mu * region.violation(theta) - dist2(theta) };
        let mut inject: Vec<Vec<f64>> = Vec::new();
        if let Some((t, _)) = &incumbent {
            inject.push(t.clone());
        }
        if let Some(a) = &anchor {
            inject.push(a.clone());
        }
        let mut sub = stream.split_index("merit-round", round);
        let res = de::minimize(&objective, lower, upper, de_cfg, &inject, &mut sub);
        evals += res.evals;
        rounds += 1;

        let before = incumbent.as_ref().map(|(_, d2)| d2.sqrt());
        if region.violation(&res.best) <= tol {
            let d2 = dist2(&res.best);
            if incumbent.as_ref().is_none_or(|(_, b)| d2 > *b) {
                incumbent = Some((res.best, d2));
            }
        }
        // stop once a feasible incumbent survives a whole round unimproved
        if let (Some(b), Some((_, a))) = (before, &incumbent) {
            if round > 0 && (a.sqrt() - b).abs() <= 1e-10 * (1.0 + b) {
                break;
            }
        }
        round += 1;
        mu *= merit.growth;
        if mu > merit.mu_cap {
            break;
        }
    }

    let Some((theta, d2)) = incumbent else {
        return Err(Error::Infeasible(format!(
            "no feasible point found at alpha {}",
            region.alpha()
        )));
    };
    let phi = qoi.apply(&theta);
    Ok(FarthestResult {
        theta,
        phi,
        distance: d2.sqrt(),
        evals,
        rounds,
    })
}
