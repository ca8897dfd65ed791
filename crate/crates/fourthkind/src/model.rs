//! Statistical models: likelihoods, samplers, and maximum-likelihood search.
//!
//! A `ModelSpec` couples a compact parameter box with one of three
//! observation families: a scalar Gaussian location model, independent
//! Bernoulli coins observed as head counts, and Gaussian noise around a
//! deterministic measurement curve (identity, quadratic in time, or a
//! Lotka-Volterra predator-prey integration). All likelihood arithmetic
//! stays in log space; the flattened observation count reaches 400 in the
//! predator-prey case and linear-scale densities underflow there.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::de::{self, DeConfig};
use crate::numerics::RandomStream;
use crate::{Error, Result};

/// Evaluation budget for `find_mle` when the caller passes 0.
pub const DEFAULT_MLE_BUDGET: usize = 20_000;

const QUAD_GRID_POINTS: usize = 100;
const QUAD_GRID_STEP: f64 = 0.05;
const LV_GRID_POINTS: usize = 200;
const LV_GRID_STEP: f64 = 0.1;

/// Axis-aligned compact parameter box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl ParameterBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.is_empty() || lower.len() != upper.len() {
            return Err(Error::Domain(
                "parameter box needs matching nonempty bounds".into(),
            ));
        }
        for i in 0..lower.len() {
            if !lower[i].is_finite() || !upper[i].is_finite() || lower[i] > upper[i] {
                return Err(Error::Domain(format!(
                    "parameter box axis {i} invalid: [{}, {}]",
                    lower[i], upper[i]
                )));
            }
        }
        Ok(Self { lower, upper })
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, theta: &[f64]) -> bool {
        theta.len() == self.dim()
            && theta.iter().zip(&self.lower).all(|(t, lo)| *t >= *lo)
            && theta.iter().zip(&self.upper).all(|(t, hi)| *t <= *hi)
    }

    pub fn center(&self) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(a, b)| 0.5 * (a + b))
            .collect()
    }

    pub fn clamp(&self, theta: &[f64]) -> Vec<f64> {
        theta
            .iter()
            .enumerate()
            .map(|(i, t)| t.clamp(self.lower[i], self.upper[i]))
            .collect()
    }
}

/// Ordered multisample, one observation vector per row, with an optional
/// time grid for process models.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    rows: Vec<Vec<f64>>,
    times: Option<Vec<f64>>,
}

impl Dataset {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        Self::build(rows, None)
    }

    pub fn with_times(times: Vec<f64>, rows: Vec<Vec<f64>>) -> Result<Self> {
        if times.len() != rows.len() {
            return Err(Error::Domain(
                "time grid length must match the row count".into(),
            ));
        }
        Self::build(rows, Some(times))
    }

    fn build(rows: Vec<Vec<f64>>, times: Option<Vec<f64>>) -> Result<Self> {
        let Some(first) = rows.first() else {
            return Err(Error::Domain("dataset needs at least one row".into()));
        };
        let dim = first.len();
        if dim == 0 {
            return Err(Error::Domain("dataset rows must be nonempty".into()));
        }
        for (i, row) in rows.iter().enumerate() {
            if row.len() != dim {
                return Err(Error::Domain(format!(
                    "row {i} has dimension {}, expected {dim}",
                    row.len()
                )));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::Domain(format!("row {i} has a non-finite value")));
            }
        }
        if let Some(t) = &times {
            if t.iter().any(|v| !v.is_finite()) {
                return Err(Error::Domain("time grid has a non-finite value".into()));
            }
        }
        Ok(Self { rows, times })
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn times(&self) -> Option<&[f64]> {
        self.times.as_deref()
    }

    pub fn row_count(&self) -> usize {
        self.rows.len()
    }

    pub fn row_dim(&self) -> usize {
        self.rows[0].len()
    }

    /// CSV with header `t,x_1..x_r` (process data) or `x_1..x_r`.
    pub fn to_csv(&self) -> String {
        let r = self.row_dim();
        let mut header: Vec<String> = Vec::with_capacity(r + 1);
        if self.times.is_some() {
            header.push("t".into());
        }
        for i in 1..=r {
            header.push(format!("x_{i}"));
        }
        let mut out = header.join(",");
        out.push('\n');
        let mut vals: Vec<f64> = Vec::with_capacity(r + 1);
        for (j, row) in self.rows.iter().enumerate() {
            vals.clear();
            if let Some(t) = &self.times {
                vals.push(t[j]);
            }
            vals.extend_from_slice(row);
            out.push_str(&crate::fmt::csv_row(&vals));
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty dataset file".into()))?;
        let cols: Vec<&str> = header.split(',').map(str::trim).collect();
        let has_time = cols.first() == Some(&"t");
        let mut rows = Vec::new();
        let mut times = Vec::new();
        for (i, line) in lines.enumerate() {
            let mut vals = Vec::with_capacity(cols.len());
            for field in line.split(',') {
                let v: f64 = field.trim().parse().map_err(|_| {
                    Error::Parse(format!(
                        "line {}: cannot parse '{}' as a number",
                        i + 2,
                        field.trim()
                    ))
                })?;
                vals.push(v);
            }
            if vals.len() != cols.len() {
                return Err(Error::Parse(format!(
                    "line {}: expected {} fields, found {}",
                    i + 2,
                    cols.len(),
                    vals.len()
                )));
            }
            if has_time {
                times.push(vals.remove(0));
            }
            rows.push(vals);
        }
        if has_time {
            Self::with_times(times, rows)
        } else {
            Self::new(rows)
        }
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_csv(&text)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    GaussianMean,
    BernoulliCoins,
    GaussianNoise,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MeasurementId {
    Identity,
    Quadratic,
    LotkaVolterra,
}

/// Deterministic measurement map with named fixed constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementFunction {
    pub id: MeasurementId,
    #[serde(default)]
    pub constants: BTreeMap<String, f64>,
}

impl MeasurementFunction {
    pub fn identity() -> Self {
        Self {
            id: MeasurementId::Identity,
            constants: BTreeMap::new(),
        }
    }

    fn constant(&self, name: &str) -> Result<f64> {
        self.constants
            .get(name)
            .copied()
            .ok_or_else(|| Error::Domain(format!("measurement constant '{name}' missing")))
    }

    fn constant_or(&self, name: &str, default: f64) -> f64 {
        self.constants.get(name).copied().unwrap_or(default)
    }
}

/// Quantity-of-interest map from parameters to the decision space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Qoi {
    #[default]
    Identity,
    Components {
        indices: Vec<usize>,
    },
}

impl Qoi {
    pub fn apply(&self, theta: &[f64]) -> Vec<f64> {
        match self {
            Qoi::Identity => theta.to_vec(),
            Qoi::Components { indices } => indices.iter().map(|&i| theta[i]).collect(),
        }
    }

    pub fn output_dim(&self, parameter_dim: usize) -> usize {
        match self {
            Qoi::Identity => parameter_dim,
            Qoi::Components { indices } => indices.len(),
        }
    }
}

/// Which relative likelihood a region uses: the exact MLE-normalized one or
/// the cheaper data-only surrogate bound (gaussian kinds only).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LikelihoodMode {
    Exact,
    Surrogate,
}

/// Maximizer of the likelihood over the box with its log-likelihood.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MleResult {
    pub theta: Vec<f64>,
    pub loglik: f64,
    /// Set when the search budget ran out without improving on the
    /// box-center start.
    pub budget_warning: bool,
}

/// Parametric observation model over a compact box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub theta_lower: Vec<f64>,
    pub theta_upper: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    #[serde(default = "MeasurementFunction::identity")]
    pub measurement: MeasurementFunction,
    #[serde(default)]
    pub qoi: Qoi,
}

impl ModelSpec {
    /// Scalar Gaussian location model on [-tau, tau].
    pub fn gaussian_mean(sigma: f64, tau: f64) -> Self {
        Self {
            kind: ModelKind::GaussianMean,
            theta_lower: vec![-tau],
            theta_upper: vec![tau],
            sigma: Some(sigma),
            measurement: MeasurementFunction::identity(),
            qoi: Qoi::Identity,
        }
    }

    /// Independent coins, one parameter per coin, observed as head counts
    /// out of the given toss counts.
    pub fn coins(tosses: &[u64]) -> Self {
        let k = tosses.len();
        let mut constants = BTreeMap::new();
        for (i, &n) in tosses.iter().enumerate() {
            constants.insert(format!("n_{}", i + 1), n as f64);
        }
        Self {
            kind: ModelKind::BernoulliCoins,
            theta_lower: vec![0.0; k],
            theta_upper: vec![1.0; k],
            sigma: None,
            measurement: MeasurementFunction {
                id: MeasurementId::Identity,
                constants,
            },
            qoi: Qoi::Identity,
        }
    }

    /// Quadratic-in-time curve observed under Gaussian noise on the
    /// 100-point midpoint grid of (0, 5).
    pub fn quadratic(sigma: f64, bound: f64) -> Self {
        Self {
            kind: ModelKind::GaussianNoise,
            theta_lower: vec![-bound; 3],
            theta_upper: vec![bound; 3],
            sigma: Some(sigma),
            measurement: MeasurementFunction {
                id: MeasurementId::Quadratic,
                constants: BTreeMap::new(),
            },
            qoi: Qoi::Identity,
        }
    }

    /// Predator-prey model: prey growth rate and predator death rate are
    /// the free parameters, interaction rates and the initial populations
    /// are fixed constants. Observed at t = 0.1..20 in steps of 0.1.
    pub fn lotka_volterra(eta: f64, xi: f64, x0: f64, y0: f64, sigma: f64, bound: f64) -> Self {
        let mut constants = BTreeMap::new();
        constants.insert("eta".into(), eta);
        constants.insert("xi".into(), xi);
        constants.insert("x0".into(), x0);
        constants.insert("y0".into(), y0);
        Self {
            kind: ModelKind::GaussianNoise,
            theta_lower: vec![-bound; 2],
            theta_upper: vec![bound; 2],
            sigma: Some(sigma),
            measurement: MeasurementFunction {
                id: MeasurementId::LotkaVolterra,
                constants,
            },
            qoi: Qoi::Identity,
        }
    }

    pub fn dim(&self) -> usize {
        self.theta_lower.len()
    }

    pub fn parameter_box(&self) -> ParameterBox {
        ParameterBox {
            lower: self.theta_lower.clone(),
            upper: self.theta_upper.clone(),
        }
    }

    pub fn theta_in_box(&self, theta: &[f64]) -> bool {
        theta.len() == self.dim()
            && theta.iter().zip(&self.theta_lower).all(|(t, lo)| *t >= *lo)
            && theta.iter().zip(&self.theta_upper).all(|(t, hi)| *t <= *hi)
    }

    fn check_theta(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.dim() {
            return Err(Error::Domain(format!(
                "parameter has dimension {}, model expects {}",
                theta.len(),
                self.dim()
            )));
        }
        if !self.theta_in_box(theta) {
            return Err(Error::Domain(
                "parameter lies outside the model box".into(),
            ));
        }
        Ok(())
    }

    fn require_sigma(&self) -> Result<f64> {
        match self.sigma {
            Some(s) if s.is_finite() && s > 0.0 => Ok(s),
            _ => Err(Error::Domain("gaussian kinds need sigma > 0".into())),
        }
    }

    /// Toss counts n_1..n_k from the measurement constants (coin model).
    pub fn coin_tosses(&self) -> Result<Vec<u64>> {
        if self.kind != ModelKind::BernoulliCoins {
            return Err(Error::Domain(
                "toss counts only exist for the coin model".into(),
            ));
        }
        let mut out = Vec::with_capacity(self.dim());
        for i in 1..=self.dim() {
            let n = self.measurement.constant(&format!("n_{i}"))?;
            if !(n.is_finite() && n >= 1.0 && (n - n.round()).abs() < 1e-9) {
                return Err(Error::Domain(format!(
                    "toss count n_{i} must be a positive integer"
                )));
            }
            out.push(n.round() as u64);
        }
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        ParameterBox::new(self.theta_lower.clone(), self.theta_upper.clone())?;
        match self.kind {
            ModelKind::GaussianMean => {
                if self.dim() != 1 {
                    return Err(Error::Domain("gaussian-mean is one-dimensional".into()));
                }
                self.require_sigma()?;
                if self.measurement.id != MeasurementId::Identity {
                    return Err(Error::Domain(
                        "gaussian-mean uses the identity measurement".into(),
                    ));
                }
            }
            ModelKind::BernoulliCoins => {
                if self.measurement.id != MeasurementId::Identity {
                    return Err(Error::Domain(
                        "the coin model uses the identity measurement".into(),
                    ));
                }
                for i in 0..self.dim() {
                    if self.theta_lower[i] < 0.0 || self.theta_upper[i] > 1.0 {
                        return Err(Error::Domain(
                            "coin probabilities live in [0, 1]".into(),
                        ));
                    }
                }
                self.coin_tosses()?;
            }
            ModelKind::GaussianNoise => {
                self.require_sigma()?;
                match self.measurement.id {
                    MeasurementId::Identity => {}
                    MeasurementId::Quadratic => {
                        if self.dim() != 3 {
                            return Err(Error::Domain(
                                "the quadratic curve has three coefficients".into(),
                            ));
                        }
                    }
                    MeasurementId::LotkaVolterra => {
                        if self.dim() != 2 {
                            return Err(Error::Domain(
                                "the predator-prey model has two free rates".into(),
                            ));
                        }
                        for name in ["eta", "xi", "x0", "y0"] {
                            let v = self.measurement.constant(name)?;
                            if !v.is_finite() {
                                return Err(Error::Domain(format!(
                                    "measurement constant '{name}' must be finite"
                                )));
                            }
                        }
                    }
                }
            }
        }
        if let Qoi::Components { indices } = &self.qoi {
            if indices.is_empty() {
                return Err(Error::Domain("qoi component list is empty".into()));
            }
            for &i in indices {
                if i >= self.dim() {
                    return Err(Error::Domain(format!(
                        "qoi component {i} exceeds parameter dimension {}",
                        self.dim()
                    )));
                }
            }
        }
        Ok(())
    }

    fn check_data(&self, data: &Dataset) -> Result<()> {
        match self.kind {
            ModelKind::GaussianMean => {
                if data.row_dim() != 1 {
                    return Err(Error::Domain(
                        "gaussian-mean data is one value per row".into(),
                    ));
                }
            }
            ModelKind::BernoulliCoins => {
                if data.row_dim() != self.dim() {
                    return Err(Error::Domain(format!(
                        "coin data rows need {} head counts",
                        self.dim()
                    )));
                }
                let tosses = self.coin_tosses()?;
                for row in data.rows() {
                    for (i, (&h, &n)) in row.iter().zip(&tosses).enumerate() {
                        if !(0.0..=n as f64).contains(&h) {
                            return Err(Error::Domain(format!(
                                "head count {h} for coin {} outside 0..={n}",
                                i + 1
                            )));
                        }
                    }
                }
            }
            ModelKind::GaussianNoise => {
                let (rows, cols) = match self.measurement.id {
                    MeasurementId::Identity => (1, self.dim()),
                    MeasurementId::Quadratic => (QUAD_GRID_POINTS, 1),
                    MeasurementId::LotkaVolterra => (LV_GRID_POINTS, 2),
                };
                if data.row_count() != rows || data.row_dim() != cols {
                    return Err(Error::Domain(format!(
                        "measurement data must be {rows} rows of dimension {cols}, \
                         got {} of {}",
                        data.row_count(),
                        data.row_dim()
                    )));
                }
            }
        }
        Ok(())
    }

    /// Statistical sample count and flattened per-sample dimension (N, r).
    /// Process models observe one flattened grid traversal, so N = 1.
    pub fn sample_shape(&self, data: &Dataset) -> Result<(usize, usize)> {
        self.check_data(data)?;
        Ok(match self.kind {
            ModelKind::GaussianMean => (data.row_count(), 1),
            ModelKind::BernoulliCoins => (data.row_count(), self.dim()),
            ModelKind::GaussianNoise => (1, data.row_count() * data.row_dim()),
        })
    }

    /// Model curve as dataset-shaped rows; None when the evaluation leaves
    /// the finite range (divergent ODE states).
    fn measure(&self, theta: &[f64]) -> Option<Vec<Vec<f64>>> {
        match self.measurement.id {
            MeasurementId::Identity => Some(vec![theta.to_vec()]),
            MeasurementId::Quadratic => {
                let mut rows = Vec::with_capacity(QUAD_GRID_POINTS);
                for i in 0..QUAD_GRID_POINTS {
                    let t = (i as f64 + 0.5) * QUAD_GRID_STEP;
                    rows.push(vec![theta[0] + theta[1] * t + theta[2] * t * t]);
                }
                Some(rows)
            }
            MeasurementId::LotkaVolterra => self.integrate_lotka_volterra(theta),
        }
    }

    pub fn evaluate_measurement(&self, theta: &[f64]) -> Result<Vec<Vec<f64>>> {
        self.check_theta(theta)?;
        self.measure(theta).ok_or_else(|| {
            Error::Domain("measurement state diverged to a non-finite value".into())
        })
    }

    /// Time labels for process measurements, None for identity.
    pub fn measurement_times(&self) -> Option<Vec<f64>> {
        match self.measurement.id {
            MeasurementId::Identity => None,
            MeasurementId::Quadratic => Some(
                (0..QUAD_GRID_POINTS)
                    .map(|i| (i as f64 + 0.5) * QUAD_GRID_STEP)
                    .collect(),
            ),
            MeasurementId::LotkaVolterra => Some(
                (0..LV_GRID_POINTS)
                    .map(|i| (i as f64 + 1.0) * LV_GRID_STEP)
                    .collect(),
            ),
        }
    }

    fn integrate_lotka_volterra(&self, theta: &[f64]) -> Option<Vec<Vec<f64>>> {
        let eta = self.measurement.constant("eta").ok()?;
        let xi = self.measurement.constant("xi").ok()?;
        let x0 = self.measurement.constant("x0").ok()?;
        let y0 = self.measurement.constant("y0").ok()?;
        let substeps = (self.measurement.constant_or("substeps", 1.0).max(1.0)) as usize;
        let th1 = theta[0];
        let th2 = theta[1];
        let f = |s: [f64; 2]| -> [f64; 2] {
            [
                th1 * s[0] - eta * s[0] * s[1],
                xi * s[0] * s[1] - th2 * s[1],
            ]
        };
        let h = LV_GRID_STEP / substeps as f64;
        let mut state = [x0, y0];
        let mut rows = Vec::with_capacity(LV_GRID_POINTS);
        for _ in 0..LV_GRID_POINTS {
            for _ in 0..substeps {
                state = rk4_step(&f, state, h);
                if !(state[0].is_finite() && state[1].is_finite()) {
                    return None;
                }
            }
            rows.push(vec![state[0], state[1]]);
        }
        Some(rows)
    }

    /// Sum of squared residuals between data rows and the model curve;
    /// divergent measurements count as infinite.
    pub fn residual_sum(&self, data: &Dataset, theta: &[f64]) -> Result<f64> {
        if self.kind == ModelKind::BernoulliCoins {
            return Err(Error::Domain(
                "residuals are defined for gaussian kinds only".into(),
            ));
        }
        self.check_theta(theta)?;
        self.check_data(data)?;
        Ok(self.residual_unchecked(data, theta))
    }

    fn residual_unchecked(&self, data: &Dataset, theta: &[f64]) -> f64 {
        let Some(curve) = self.measure(theta) else {
            return f64::INFINITY;
        };
        let mut total = 0.0;
        if curve.len() == 1 {
            // one predicted row broadcast across all samples
            for row in data.rows() {
                total += sq_dist(row, &curve[0]);
            }
        } else {
            debug_assert_eq!(curve.len(), data.row_count());
            for (row, m) in data.rows().iter().zip(&curve) {
                total += sq_dist(row, m);
            }
        }
        if total.is_finite() {
            total
        } else {
            f64::INFINITY
        }
    }

    pub fn log_likelihood(&self, data: &Dataset, theta: &[f64]) -> Result<f64> {
        self.check_theta(theta)?;
        self.check_data(data)?;
        match self.kind {
            ModelKind::GaussianMean | ModelKind::GaussianNoise => {
                let sigma = self.require_sigma()?;
                let resid = self.residual_unchecked(data, theta);
                if !resid.is_finite() {
                    return Ok(f64::NEG_INFINITY);
                }
                let count = (data.row_count() * data.row_dim()) as f64;
                let norm = (sigma * (2.0 * std::f64::consts::PI).sqrt()).ln();
                Ok(-count * norm - resid / (2.0 * sigma * sigma))
            }
            ModelKind::BernoulliCoins => {
                let tosses = self.coin_tosses()?;
                let mut total = 0.0;
                for row in data.rows() {
                    for ((&h, &n), &th) in row.iter().zip(&tosses).zip(theta) {
                        total += xlogy(h, th) + xlogy(n as f64 - h, 1.0 - th);
                    }
                }
                Ok(total)
            }
        }
    }

    /// Log relative likelihood, at most 0. Exact mode normalizes by the
    /// cached MLE; surrogate mode (gaussian kinds) normalizes by the
    /// sample-mean residual bound, so it never exceeds the exact value.
    pub fn relative_log_likelihood(
        &self,
        data: &Dataset,
        theta: &[f64],
        mode: LikelihoodMode,
        mle: Option<&MleResult>,
    ) -> Result<f64> {
        match mode {
            LikelihoodMode::Exact => {
                let mle = mle.ok_or_else(|| {
                    Error::State("exact relative likelihood needs the cached MLE".into())
                })?;
                let ll = self.log_likelihood(data, theta)?;
                if ll == f64::NEG_INFINITY {
                    return Ok(f64::NEG_INFINITY);
                }
                Ok((ll - mle.loglik).min(0.0))
            }
            LikelihoodMode::Surrogate => {
                if self.kind == ModelKind::BernoulliCoins {
                    return Err(Error::Domain(
                        "the surrogate bound exists for gaussian kinds only".into(),
                    ));
                }
                let sigma = self.require_sigma()?;
                self.check_theta(theta)?;
                self.check_data(data)?;
                let resid = self.residual_unchecked(data, theta);
                if !resid.is_finite() {
                    return Ok(f64::NEG_INFINITY);
                }
                let reference = self.surrogate_reference(data)?;
                Ok((-(resid - reference) / (2.0 * sigma * sigma)).min(0.0))
            }
        }
    }

    /// Squared residual about the per-coordinate sample mean: the sharpest
    /// data-only lower bound on the minimal residual. Zero for process
    /// models, which carry a single statistical sample.
    pub fn surrogate_reference(&self, data: &Dataset) -> Result<f64> {
        self.check_data(data)?;
        match self.kind {
            ModelKind::BernoulliCoins => Err(Error::Domain(
                "the surrogate bound exists for gaussian kinds only".into(),
            )),
            ModelKind::GaussianNoise => Ok(0.0),
            ModelKind::GaussianMean => {
                let n = data.row_count() as f64;
                let mean = data.rows().iter().map(|r| r[0]).sum::<f64>() / n;
                Ok(data.rows().iter().map(|r| (r[0] - mean).powi(2)).sum())
            }
        }
    }

    /// Draw `n` samples from P(.|theta). Process models require n = 1: the
    /// whole grid traversal is the sample.
    pub fn sample_data(
        &self,
        theta: &[f64],
        n: usize,
        stream: &mut RandomStream,
    ) -> Result<Dataset> {
        self.check_theta(theta)?;
        if n == 0 {
            return Err(Error::Domain("need at least one sample".into()));
        }
        match self.kind {
            ModelKind::GaussianMean => {
                let sigma = self.require_sigma()?;
                let rows = (0..n)
                    .map(|_| vec![theta[0] + sigma * stream.standard_normal()])
                    .collect();
                Dataset::new(rows)
            }
            ModelKind::BernoulliCoins => {
                let tosses = self.coin_tosses()?;
                let mut rows = Vec::with_capacity(n);
                for _ in 0..n {
                    let mut row = Vec::with_capacity(self.dim());
                    for (i, &m) in tosses.iter().enumerate() {
                        let mut heads = 0u64;
                        for _ in 0..m {
                            if stream.bernoulli(theta[i]) {
                                heads += 1;
                            }
                        }
                        row.push(heads as f64);
                    }
                    rows.push(row);
                }
                Dataset::new(rows)
            }
            ModelKind::GaussianNoise => {
                if n != 1 {
                    return Err(Error::Domain(
                        "process models observe a single grid traversal".into(),
                    ));
                }
                let sigma = self.require_sigma()?;
                let curve = self.measure(theta).ok_or_else(|| {
                    Error::Domain("measurement state diverged to a non-finite value".into())
                })?;
                let rows: Vec<Vec<f64>> = curve
                    .iter()
                    .map(|m| {
                        m.iter()
                            .map(|v| v + sigma * stream.standard_normal())
                            .collect()
                    })
                    .collect();
                match self.measurement_times() {
                    Some(t) => Dataset::with_times(t, rows),
                    None => Dataset::new(rows),
                }
            }
        }
    }

    /// Replication count `sample_data` needs to regenerate a dataset shaped
    /// like `data`. Process models observe one traversal of the whole
    /// measurement grid, however many rows that grid has.
    pub fn replication_count(&self, data: &Dataset) -> usize {
        match self.kind {
            ModelKind::GaussianNoise => 1,
            ModelKind::GaussianMean | ModelKind::BernoulliCoins => data.row_count(),
        }
    }

    /// Maximize the likelihood over the box. Gaussian-mean and coin models
    /// use their closed forms; gaussian-noise runs differential evolution
    /// within the evaluation budget (0 = default 20,000), restarting with
    /// the incumbent injected while budget remains.
    pub fn find_mle(
        &self,
        data: &Dataset,
        budget: usize,
        stream: &mut RandomStream,
    ) -> Result<MleResult> {
        self.check_data(data)?;
        match self.kind {
            ModelKind::GaussianMean => {
                let n = data.row_count() as f64;
                let mean = data.rows().iter().map(|r| r[0]).sum::<f64>() / n;
                let theta = vec![mean.clamp(self.theta_lower[0], self.theta_upper[0])];
                let loglik = self.log_likelihood(data, &theta)?;
                Ok(MleResult {
                    theta,
                    loglik,
                    budget_warning: false,
                })
            }
            ModelKind::BernoulliCoins => {
                let tosses = self.coin_tosses()?;
                let n = data.row_count() as f64;
                let mut theta = Vec::with_capacity(self.dim());
                for i in 0..self.dim() {
                    let heads: f64 = data.rows().iter().map(|r| r[i]).sum();
                    let rate = heads / (n * tosses[i] as f64);
                    theta.push(rate.clamp(self.theta_lower[i], self.theta_upper[i]));
                }
                let loglik = self.log_likelihood(data, &theta)?;
                Ok(MleResult {
                    theta,
                    loglik,
                    budget_warning: false,
                })
            }
            ModelKind::GaussianNoise => self.find_mle_de(data, budget, stream),
        }
    }

    fn find_mle_de(
        &self,
        data: &Dataset,
        budget: usize,
        stream: &mut RandomStream,
    ) -> Result<MleResult> {
        let budget = if budget == 0 { DEFAULT_MLE_BUDGET } else { budget };
        let bx = self.parameter_box();
        let objective = |theta: &[f64]| self.residual_unchecked(data, theta);
        let center = bx.center();
        let center_resid = objective(&center);
        let mut best_theta = center;
        let mut best_resid = center_resid;
        let mut spent = 1usize;
        let mut cfg = DeConfig::default();
        let np = cfg.resolved_pop(self.dim());
        let mut round = 0u64;
        while spent + 2 * np <= budget && round < 16 {
            cfg.max_gens = ((budget - spent) / np).saturating_sub(1).max(1);
            let mut sub = stream.split_index("mle-restart", round);
            let res = de::minimize(
                &objective,
                &bx.lower,
                &bx.upper,
                &cfg,
                &[best_theta.clone()],
                &mut sub,
            );
            spent += res.evals;
            if res.value < best_resid {
                best_resid = res.value;
                best_theta = res.best;
            }
            round += 1;
        }
        let budget_warning = !(best_resid < center_resid);
        let loglik = self.log_likelihood(data, &best_theta)?;
        Ok(MleResult {
            theta: best_theta,
            loglik,
            budget_warning,
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: ModelSpec =
            serde_json::from_str(text).map_err(|e| Error::Parse(format!("model json: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_json(&self) -> Result<String> {
        crate::fmt::to_json_string(self)
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// x * ln(y) with the 0 * ln(0) = 0 convention.
fn xlogy(x: f64, y: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * y.ln()
    }
}

fn rk4_step(f: &impl Fn([f64; 2]) -> [f64; 2], s: [f64; 2], h: f64) -> [f64; 2] {
    let k1 = f(s);
    let k2 = f([s[0] + 0.5 * h * k1[0], s[1] + 0.5 * h * k1[1]]);
    let k3 = f([s[0] + 0.5 * h * k2[0], s[1] + 0.5 * h * k2[1]]);
    let k4 = f([s[0] + h * k3[0], s[1] + h * k3[1]]);
    [
        s[0] + h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
        s[1] + h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
    ]
}
