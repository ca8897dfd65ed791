//! The likelihood region: membership, the Gaussian residual threshold, and
//! closed-form interval geometry for one-dimensional models.
//!
//! A region fixes a model, observed data, a rarity level `alpha`, and a
//! likelihood mode, then answers membership queries for the set of
//! parameters whose relative likelihood stays at or above `alpha`. For
//! gaussian kinds membership reduces to a residual threshold; the same
//! comparison doubles as the constraint-violation measure the farthest-point
//! search penalizes.

use crate::model::{Dataset, LikelihoodMode, MleResult, ModelKind, ModelSpec};
use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct LikelihoodRegion {
    model: ModelSpec,
    data: Dataset,
    alpha: f64,
    mode: LikelihoodMode,
    mle: Option<MleResult>,
    log_alpha: f64,
    /// Residual threshold for gaussian kinds: reference + 2 sigma^2 ln(1/alpha).
    threshold: Option<f64>,
}

impl LikelihoodRegion {
    /// Build a region. Exact mode requires the MLE computed once for this
    /// (model, data) pair; surrogate mode may carry one as a search anchor.
    /// `alpha` above 1 yields the empty region.
    pub fn new(
        model: ModelSpec,
        data: Dataset,
        alpha: f64,
        mode: LikelihoodMode,
        mle: Option<MleResult>,
    ) -> Result<Self> {
        model.validate()?;
        if !(alpha.is_finite() && alpha >= 0.0) {
            return Err(Error::Domain(format!(
                "rarity level must be finite and nonnegative, got {alpha}"
            )));
        }
        if mode == LikelihoodMode::Surrogate && model.kind == ModelKind::BernoulliCoins {
            return Err(Error::Domain(
                "the surrogate bound exists for gaussian kinds only".into(),
            ));
        }
        if mode == LikelihoodMode::Exact {
            let mle = mle
                .as_ref()
                .ok_or_else(|| Error::State("exact mode needs the cached MLE".into()))?;
            if !model.theta_in_box(&mle.theta) {
                return Err(Error::State("cached MLE lies outside the box".into()));
            }
            if !mle.loglik.is_finite() {
                return Err(Error::State(
                    "cached MLE has a non-finite log-likelihood".into(),
                ));
            }
        }
        let threshold = match model.kind {
            ModelKind::BernoulliCoins => None,
            ModelKind::GaussianMean | ModelKind::GaussianNoise => {
                let sigma = model.sigma.ok_or_else(|| {
                    Error::Domain("gaussian kinds need sigma > 0".into())
                })?;
                let reference = match mode {
                    LikelihoodMode::Exact => {
                        let theta = &mle.as_ref().unwrap().theta;
                        model.residual_sum(&data, theta)?
                    }
                    LikelihoodMode::Surrogate => model.surrogate_reference(&data)?,
                };
                if !reference.is_finite() {
                    return Err(Error::State(
                        "reference residual is not finite".into(),
                    ));
                }
                Some(reference - 2.0 * sigma * sigma * alpha.ln())
            }
        };
        Ok(Self {
            log_alpha: alpha.ln(),
            model,
            data,
            alpha,
            mode,
            mle,
            threshold,
        })
    }

    pub fn model(&self) -> &ModelSpec {
        &self.model
    }

    pub fn data(&self) -> &Dataset {
        &self.data
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn mode(&self) -> LikelihoodMode {
        self.mode
    }

    pub fn mle(&self) -> Option<&MleResult> {
        self.mle.as_ref()
    }

    pub fn log_alpha(&self) -> f64 {
        self.log_alpha
    }

    /// Constraint slack: 0 inside the region, positive outside, infinite
    /// off the box or at divergent parameters. Gaussian kinds measure the
    /// excess residual, the coin model the log-likelihood shortfall.
    pub fn violation(&self, theta: &[f64]) -> f64 {
        if !self.model.theta_in_box(theta) {
            return f64::INFINITY;
        }
        if self.alpha == 0.0 {
            return 0.0;
        }
        match self.threshold {
            Some(m) => {
                let resid = self
                    .model
                    .residual_sum(&self.data, theta)
                    .unwrap_or(f64::INFINITY);
                if resid <= m {
                    0.0
                } else {
                    resid - m
                }
            }
            None => {
                let rel = self
                    .model
                    .relative_log_likelihood(&self.data, theta, self.mode, self.mle.as_ref())
                    .unwrap_or(f64::NEG_INFINITY);
                if rel >= self.log_alpha {
                    0.0
                } else {
                    self.log_alpha - rel
                }
            }
        }
    }

    pub fn contains(&self, theta: &[f64]) -> bool {
        self.violation(theta) == 0.0
    }

    /// Residual threshold M for gaussian kinds; infinite at alpha = 0.
    pub fn gaussian_threshold(&self) -> Result<f64> {
        self.threshold.ok_or_else(|| {
            Error::Domain("the residual threshold exists for gaussian kinds only".into())
        })
    }

    /// A point of minimal violation, feasible whenever the region is
    /// nonempty: the cached MLE, or the clamped sample mean for the
    /// gaussian-mean model.
    pub fn anchor(&self) -> Option<Vec<f64>> {
        if let Some(mle) = &self.mle {
            return Some(mle.theta.clone());
        }
        if self.model.kind == ModelKind::GaussianMean {
            let n = self.data.row_count() as f64;
            let mean = self.data.rows().iter().map(|r| r[0]).sum::<f64>() / n;
            return Some(vec![
                mean.clamp(self.model.theta_lower[0], self.model.theta_upper[0]),
            ]);
        }
        None
    }

    /// The region of a one-dimensional model as a closed interval: closed
    /// form for gaussian kinds, monotone bisection from the MLE outward for
    /// the coin model.
    pub fn interval_region_1d(&self) -> Result<(f64, f64)> {
        if self.model.dim() != 1 {
            return Err(Error::Domain(
                "interval geometry needs a one-parameter model".into(),
            ));
        }
        let lo = self.model.theta_lower[0];
        let hi = self.model.theta_upper[0];
        if self.alpha == 0.0 {
            return Ok((lo, hi));
        }
        match self.model.kind {
            ModelKind::GaussianMean | ModelKind::GaussianNoise => {
                // residual(th) = N (th - mean)^2 + scatter for the identity
                // measurement, so the threshold solves to a symmetric window
                let m = self.gaussian_threshold()?;
                let n = self.data.row_count() as f64;
                let mean = self.data.rows().iter().map(|r| r[0]).sum::<f64>() / n;
                let scatter: f64 = self
                    .data
                    .rows()
                    .iter()
                    .map(|r| (r[0] - mean).powi(2))
                    .sum();
                let rad2 = (m - scatter) / n;
                if rad2 < 0.0 {
                    return Err(Error::Infeasible("the region is empty".into()));
                }
                let w = rad2.sqrt();
                let a = (mean - w).max(lo);
                let b = (mean + w).min(hi);
                if a > b {
                    return Err(Error::Infeasible(
                        "the region lies outside the box".into(),
                    ));
                }
                Ok((a, b))
            }
            ModelKind::BernoulliCoins => {
                let mle = self.mle.as_ref().ok_or_else(|| {
                    Error::State("interval geometry needs the cached MLE".into())
                })?;
                let peak = mle.theta[0];
                let f = |th: f64| {
                    let rel = self
                        .model
                        .relative_log_likelihood(
                            &self.data,
                            &[th],
                            self.mode,
                            self.mle.as_ref(),
                        )
                        .unwrap_or(f64::NEG_INFINITY);
                    rel - self.log_alpha
                };
                if f(peak) < 0.0 {
                    return Err(Error::Infeasible("the region is empty".into()));
                }
                let a = if f(lo) >= 0.0 {
                    lo
                } else {
                    bisect_boundary(&f, lo, peak)
                };
                let b = if f(hi) >= 0.0 {
                    hi
                } else {
                    bisect_boundary(&f, hi, peak)
                };
                Ok((a, b))
            }
        }
    }
}

/// Shrink [neg, pos] with f(neg) < 0 <= f(pos) to width 1e-10 and return
/// the feasible end.
fn bisect_boundary(f: &impl Fn(f64) -> f64, mut neg: f64, mut pos: f64) -> f64 {
    for _ in 0..200 {
        if (neg - pos).abs() <= 1e-10 {
            break;
        }
        let mid = 0.5 * (neg + pos);
        if f(mid) >= 0.0 {
            pos = mid;
        } else {
            neg = mid;
        }
    }
    pos
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::RandomStream;
    use proptest::prelude::*;

    fn gaussian_mean_region(alpha: f64) -> LikelihoodRegion {
        let model = ModelSpec::gaussian_mean(1.0, 3.0);
        let data = Dataset::new(vec![vec![1.5]]).unwrap();
        LikelihoodRegion::new(model, data, alpha, LikelihoodMode::Surrogate, None).unwrap()
    }

    fn coin_region(alpha: f64) -> LikelihoodRegion {
        let model = ModelSpec::coins(&[5]);
        let data = Dataset::new(vec![vec![4.0]]).unwrap();
        let mut stream = RandomStream::new(1);
        let mle = model.find_mle(&data, 0, &mut stream).unwrap();
        LikelihoodRegion::new(model, data, alpha, LikelihoodMode::Exact, Some(mle)).unwrap()
    }

    #[test]
    fn gaussian_interval_examples() {
        let (a, b) = gaussian_mean_region((-2.0f64).exp()).interval_region_1d().unwrap();
        assert!((a + 0.5).abs() < 1e-12 && (b - 3.0).abs() < 1e-12, "[{a}, {b}]");
        let (a, b) = gaussian_mean_region((-0.5f64).exp()).interval_region_1d().unwrap();
        assert!((a - 0.5).abs() < 1e-12 && (b - 2.5).abs() < 1e-12, "[{a}, {b}]");
    }

    #[test]
    fn alpha_one_collapses_to_the_mle() {
        let (a, b) = gaussian_mean_region(1.0).interval_region_1d().unwrap();
        assert_eq!((a, b), (1.5, 1.5));
        let region = gaussian_mean_region(1.0);
        assert!(region.contains(&[1.5]));
        assert!(!region.contains(&[1.5 + 1e-9]));
        assert_eq!(region.violation(&[1.5]), 0.0);
    }

    #[test]
    fn alpha_zero_is_the_whole_box() {
        let region = gaussian_mean_region(0.0);
        assert_eq!(region.interval_region_1d().unwrap(), (-3.0, 3.0));
        assert!(region.contains(&[-3.0]));
        assert!(region.contains(&[3.0]));
        assert!(!region.contains(&[3.1]));
        assert_eq!(region.gaussian_threshold().unwrap(), f64::INFINITY);
    }

    #[test]
    fn gaussian_threshold_examples() {
        // zero minimal residual, sigma 1, alpha e^-2: threshold is 4
        let region = gaussian_mean_region((-2.0f64).exp());
        assert!((region.gaussian_threshold().unwrap() - 4.0).abs() < 1e-12);

        // alpha 1 in exact mode: threshold equals the MLE residual exactly
        let model = ModelSpec::gaussian_mean(1.0, 3.0);
        let data = Dataset::new(vec![vec![1.0], vec![2.0], vec![2.4]]).unwrap();
        let mut stream = RandomStream::new(1);
        let mle = model.find_mle(&data, 0, &mut stream).unwrap();
        let resid = model.residual_sum(&data, &mle.theta).unwrap();
        let region = LikelihoodRegion::new(
            model,
            data,
            1.0,
            LikelihoodMode::Exact,
            Some(mle),
        )
        .unwrap();
        assert_eq!(region.gaussian_threshold().unwrap(), resid);
    }

    #[test]
    fn lv_threshold_formula() {
        let model = ModelSpec::lotka_volterra(0.025, 0.02, 30.0, 10.0, 5.0, 5.0);
        let mut stream = RandomStream::new(31);
        let data = model.sample_data(&[0.55, 0.8], 1, &mut stream).unwrap();
        let mut mle_stream = stream.split("mle");
        let mle = model.find_mle(&data, 2_000, &mut mle_stream).unwrap();
        let resid = model.residual_sum(&data, &mle.theta).unwrap();
        let region = LikelihoodRegion::new(
            model,
            data,
            0.05,
            LikelihoodMode::Exact,
            Some(mle),
        )
        .unwrap();
        let expect = resid + 50.0 * 20.0f64.ln();
        let m = region.gaussian_threshold().unwrap();
        assert!((m - expect).abs() <= 1e-9 * expect.abs(), "{m} vs {expect}");
    }

    #[test]
    fn coin_interval_matches_polynomial_oracle() {
        let alpha = 0.5;
        let region = coin_region(alpha);
        let (a, b) = region.interval_region_1d().unwrap();
        assert!(a < 0.8 && 0.8 < b);

        // boundary equation: th^4 (1 - th) = alpha * 0.8^4 * 0.2
        let target = alpha * 0.8f64.powi(4) * 0.2;
        let poly = |th: f64| th.powi(4) * (1.0 - th) - target;
        let oracle = |mut neg: f64, mut pos: f64| {
            for _ in 0..200 {
                let mid = 0.5 * (neg + pos);
                if poly(mid) >= 0.0 {
                    pos = mid;
                } else {
                    neg = mid;
                }
                if (neg - pos).abs() < 1e-14 {
                    break;
                }
            }
            pos
        };
        let a_oracle = oracle(0.0, 0.8);
        let b_oracle = oracle(1.0, 0.8);
        assert!((a - a_oracle).abs() < 1e-8, "{a} vs {a_oracle}");
        assert!((b - b_oracle).abs() < 1e-8, "{b} vs {b_oracle}");

        // interior endpoints sit on the level set
        let mle = region.mle().cloned();
        for th in [a, b] {
            let rel = region
                .model()
                .relative_log_likelihood(
                    region.data(),
                    &[th],
                    LikelihoodMode::Exact,
                    mle.as_ref(),
                )
                .unwrap();
            assert!((rel - alpha.ln()).abs() <= 1e-8, "endpoint {th}: {rel}");
        }
    }

    #[test]
    fn interval_agrees_with_membership_on_a_grid() {
        for region in [gaussian_mean_region(0.3), coin_region(0.3)] {
            let (a, b) = region.interval_region_1d().unwrap();
            let lo = region.model().theta_lower[0];
            let hi = region.model().theta_upper[0];
            for i in 0..1000 {
                let th = lo + (hi - lo) * (i as f64 + 0.5) / 1000.0;
                let inside = th >= a && th <= b;
                // skip the knife edge where the two answers may differ by 1 ulp
                if (th - a).abs() < 1e-9 || (th - b).abs() < 1e-9 {
                    continue;
                }
                assert_eq!(region.contains(&[th]), inside, "theta {th} in [{a}, {b}]");
            }
        }
    }

    #[test]
    fn residual_and_log_paths_agree() {
        let model = ModelSpec::quadratic(10f64.sqrt(), 30.0);
        let mut stream = RandomStream::new(41);
        let data = model.sample_data(&[1.0, 0.5, 1.0], 1, &mut stream).unwrap();
        let mut mle_stream = stream.split("mle");
        let mle = model.find_mle(&data, 10_000, &mut mle_stream).unwrap();
        let alpha = 1e-6;
        let region = LikelihoodRegion::new(
            model.clone(),
            data.clone(),
            alpha,
            LikelihoodMode::Exact,
            Some(mle.clone()),
        )
        .unwrap();
        for i in 0..200 {
            let mut probe = stream.split_index("probe", i);
            let theta: Vec<f64> = (0..3).map(|_| probe.uniform_range(-3.0, 3.0)).collect();
            let rel = model
                .relative_log_likelihood(&data, &theta, LikelihoodMode::Exact, Some(&mle))
                .unwrap();
            // skip the knife edge: the two comparisons are the same
            // inequality rearranged, so they may split only within 1e-12
            if (rel - alpha.ln()).abs() < 1e-12 {
                continue;
            }
            assert_eq!(region.contains(&theta), rel >= alpha.ln(), "theta {theta:?}");
        }
    }

    #[test]
    fn violation_shape() {
        let region = gaussian_mean_region((-2.0f64).exp());
        assert_eq!(region.violation(&[1.5]), 0.0);
        assert_eq!(region.violation(&[2.9]), 0.0);
        let v = region.violation(&[-2.0]);
        // residual excess: (1.5 + 2)^2 - 4
        assert!((v - (3.5f64.powi(2) - 4.0)).abs() < 1e-12);
        assert_eq!(region.violation(&[4.0]), f64::INFINITY);
    }

    #[test]
    fn exact_mode_requires_mle() {
        let model = ModelSpec::gaussian_mean(1.0, 3.0);
        let data = Dataset::new(vec![vec![1.5]]).unwrap();
        let err = LikelihoodRegion::new(model, data, 0.5, LikelihoodMode::Exact, None)
            .unwrap_err();
        assert!(matches!(err, Error::State(_)));
    }

    #[test]
    fn alpha_above_one_is_empty() {
        let region = gaussian_mean_region(1.2);
        assert!(!region.contains(&[1.5]));
        assert!(region.interval_region_1d().is_err());
    }

    #[test]
    fn mle_always_member_in_exact_mode() {
        let region = coin_region(1.0);
        let mle = region.mle().unwrap().theta.clone();
        assert!(region.contains(&mle));
    }

    proptest! {
        #[test]
        fn regions_nest(a1 in 0.0..1.0f64, a2 in 0.0..1.0f64, th in 0.0..1.0f64) {
            let (a1, a2) = if a1 <= a2 { (a1, a2) } else { (a2, a1) };
            let inner = coin_region(a2);
            let outer = coin_region(a1);
            if inner.contains(&[th]) {
                prop_assert!(outer.contains(&[th]));
            }
        }

        #[test]
        fn gaussian_regions_nest(a1 in 0.0..1.0f64, a2 in 0.0..1.0f64, th in -3.0..3.0f64) {
            let (a1, a2) = if a1 <= a2 { (a1, a2) } else { (a2, a1) };
            let inner = gaussian_mean_region(a2);
            let outer = gaussian_mean_region(a1);
            if inner.contains(&[th]) {
                prop_assert!(outer.contains(&[th]));
            }
        }
    }
}
