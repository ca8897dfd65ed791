//! Built-in study scenarios and the end-to-end pipeline.
//!
//! A scenario bundles a model, its observed or generated data, the
//! likelihood mode, and a calibration method with a significance target.
//! Running one calibrates the rarity, solves the minmax game, sweeps the
//! significance target to trace risk against it, and samples the region's
//! geometry. Every random draw descends from the run seed through labeled
//! substreams, so equal seeds reproduce every output byte for byte.

use serde::{Deserialize, Serialize};

use crate::game::{solve_game, GameConfig, GameSolution};
use crate::model::{Dataset, LikelihoodMode, MleResult, ModelSpec};
use crate::numerics::RandomStream;
use crate::region::LikelihoodRegion;
use crate::significance::{
    alpha_for_beta_asymptotic, alpha_for_beta_surrogate, beta_asymptotic,
    beta_curve_monte_carlo, beta_gaussian_surrogate, calibrate_from_curve, latin_hypercube,
    log_spaced_alphas, BetaCurve, BetaEstimate, BetaMethod, McConfig, CALIBRATION_GRID,
    DEFAULT_TRIALS,
};
use crate::{Error, Result};

pub const BUILTIN_NAMES: [&str; 5] = [
    "gaussian-mean",
    "coin",
    "two-coin",
    "lotka-volterra",
    "quadratic",
];

/// Points on the significance sweep of the risk curve.
pub const RISK_SWEEP_POINTS: usize = 8;
/// Lowest significance target visited by the sweep.
pub const RISK_SWEEP_FLOOR: f64 = 0.02;
/// Region geometry sample count.
pub const GEOMETRY_SAMPLES: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DataSource {
    Inline {
        rows: Vec<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        times: Option<Vec<f64>>,
    },
    Generate {
        theta: Vec<f64>,
        #[serde(default = "default_samples")]
        samples: usize,
    },
    File {
        path: String,
    },
}

fn default_samples() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Calibration {
    Asymptotic {
        k: u32,
    },
    GaussianSurrogate {
        r: u32,
        n_samples: usize,
    },
    MonteCarlo {
        #[serde(default = "default_trials")]
        trials: usize,
    },
}

fn default_trials() -> usize {
    DEFAULT_TRIALS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub model: ModelSpec,
    pub data: DataSource,
    pub mode: LikelihoodMode,
    pub calibration: Calibration,
    pub beta_target: f64,
}

impl Scenario {
    pub fn to_json(&self) -> Result<String> {
        crate::fmt::to_json_string(self)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse(format!("bad scenario: {e}")))
    }

    fn validate(&self) -> Result<()> {
        if self.name.is_empty() {
            return Err(Error::Domain("scenario name must be nonempty".into()));
        }
        self.model.validate()?;
        if !self.beta_target.is_finite()
            || self.beta_target <= 0.0
            || self.beta_target > 1.0
        {
            return Err(Error::Domain(format!(
                "significance target must lie in (0, 1], got {}",
                self.beta_target
            )));
        }
        Ok(())
    }
}

/// The named built-in scenarios.
pub fn builtin(name: &str) -> Result<Scenario> {
    let scenario = match name {
        "gaussian-mean" => Scenario {
            name: name.into(),
            model: ModelSpec::gaussian_mean(1.0, 3.0),
            data: DataSource::Inline {
                rows: vec![vec![1.5]],
                times: None,
            },
            mode: LikelihoodMode::Surrogate,
            calibration: Calibration::GaussianSurrogate { r: 1, n_samples: 1 },
            beta_target: 0.05,
        },
        "coin" => Scenario {
            name: name.into(),
            model: ModelSpec::coins(&[5]),
            data: DataSource::Inline {
                rows: vec![vec![4.0]],
                times: None,
            },
            mode: LikelihoodMode::Exact,
            calibration: Calibration::MonteCarlo {
                trials: DEFAULT_TRIALS,
            },
            beta_target: 0.05,
        },
        "two-coin" => Scenario {
            name: name.into(),
            model: ModelSpec::coins(&[4, 6]),
            data: DataSource::Inline {
                rows: vec![vec![1.0, 5.0]],
                times: None,
            },
            mode: LikelihoodMode::Exact,
            calibration: Calibration::MonteCarlo {
                trials: DEFAULT_TRIALS,
            },
            beta_target: 0.05,
        },
        "lotka-volterra" => Scenario {
            name: name.into(),
            model: ModelSpec::lotka_volterra(0.025, 0.02, 30.0, 10.0, 5.0, 5.0),
            data: DataSource::Generate {
                theta: vec![0.55, 0.8],
                samples: 1,
            },
            mode: LikelihoodMode::Exact,
            calibration: Calibration::Asymptotic { k: 2 },
            beta_target: 0.05,
        },
        "quadratic" => Scenario {
            name: name.into(),
            model: ModelSpec::quadratic(10f64.sqrt(), 30.0),
            data: DataSource::Generate {
                theta: vec![1.0, 0.5, 1.0],
                samples: 1,
            },
            mode: LikelihoodMode::Exact,
            calibration: Calibration::GaussianSurrogate {
                r: 100,
                n_samples: 1,
            },
            beta_target: 0.05,
        },
        other => {
            return Err(Error::Domain(format!(
                "unknown scenario '{other}'; built-ins are {}",
                BUILTIN_NAMES.join(", ")
            )))
        }
    };
    Ok(scenario)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskPoint {
    pub beta_target: f64,
    pub alpha: f64,
    pub risk: f64,
    pub raw_radius: f64,
    pub decision: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskCurve {
    pub points: Vec<RiskPoint>,
}

impl RiskCurve {
    pub fn to_csv(&self) -> String {
        let dim = self.points.first().map_or(0, |p| p.decision.len());
        let mut out = String::from("beta_target,alpha,risk,raw_radius");
        for i in 1..=dim {
            out.push_str(&format!(",d_{i}"));
        }
        out.push('\n');
        for p in &self.points {
            let mut vals = vec![p.beta_target, p.alpha, p.risk, p.raw_radius];
            vals.extend_from_slice(&p.decision);
            out.push_str(&crate::fmt::csv_row(&vals));
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeometrySample {
    pub theta: Vec<f64>,
    pub violation: f64,
    pub member: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeometrySamples {
    pub points: Vec<GeometrySample>,
}

impl GeometrySamples {
    pub fn to_csv(&self) -> String {
        let dim = self.points.first().map_or(0, |p| p.theta.len());
        let mut header: Vec<String> = (1..=dim).map(|i| format!("theta_{i}")).collect();
        header.push("violation".into());
        let mut out = header.join(",");
        out.push_str(",member\n");
        for p in &self.points {
            let mut vals = p.theta.clone();
            vals.push(p.violation);
            out.push_str(&crate::fmt::csv_row(&vals));
            out.push_str(if p.member { ",1\n" } else { ",0\n" });
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct ScenarioOutputs {
    pub name: String,
    pub seed: u64,
    pub alpha: f64,
    pub beta_at_alpha: f64,
    pub data: Dataset,
    pub beta_curve: BetaCurve,
    pub solution: GameSolution,
    pub risk_curve: RiskCurve,
    pub geometry: GeometrySamples,
}

/// Calibrate, solve, sweep, and sample one scenario under one seed.
pub fn run_scenario(scenario: &Scenario, seed: u64) -> Result<ScenarioOutputs> {
    scenario.validate()?;
    let stream = RandomStream::new(seed);
    let data = resolve_data(&scenario.model, &scenario.data, &stream)?;
    let mle = match scenario.mode {
        LikelihoodMode::Exact => Some(scenario.model.find_mle(
            &data,
            0,
            &mut stream.split("mle"),
        )?),
        LikelihoodMode::Surrogate => None,
    };

    let (alpha, beta_at_alpha, beta_curve) =
        calibrate(scenario, &data, scenario.beta_target, &stream)?;
    let game_cfg = GameConfig::default();
    let region = build_region(scenario, &data, alpha, &mle)?;
    let solution = solve_game(
        &region,
        Some(beta_at_alpha),
        &game_cfg,
        &stream.split("game"),
    )?;

    // sweep the significance target, reusing the calibration curve so the
    // chosen rarities are monotone in the target
    let mut risk_points = Vec::with_capacity(RISK_SWEEP_POINTS);
    for (j, beta_target) in sweep_targets().into_iter().enumerate() {
        let alpha_j = alpha_for_target(&scenario.calibration, &beta_curve, beta_target)?;
        let region_j = build_region(scenario, &data, alpha_j, &mle)?;
        let sol_j = solve_game(
            &region_j,
            Some(beta_target),
            &game_cfg,
            &stream.split_index("sweep", j as u64),
        )?;
        risk_points.push(RiskPoint {
            beta_target,
            alpha: alpha_j,
            risk: sol_j.risk,
            raw_radius: sol_j.raw_radius,
            decision: sol_j.decision.clone(),
        });
    }

    let geometry_points = latin_hypercube(
        &scenario.model.parameter_box(),
        GEOMETRY_SAMPLES,
        &stream.split("geometry"),
    )
    .into_iter()
    .map(|theta| {
        let violation = region.violation(&theta);
        GeometrySample {
            theta,
            violation,
            member: violation == 0.0,
        }
    })
    .collect();

    Ok(ScenarioOutputs {
        name: scenario.name.clone(),
        seed,
        alpha,
        beta_at_alpha,
        data,
        beta_curve,
        solution,
        risk_curve: RiskCurve {
            points: risk_points,
        },
        geometry: GeometrySamples {
            points: geometry_points,
        },
    })
}

/// Significance targets swept by every scenario, rising to one.
pub fn sweep_targets() -> Vec<f64> {
    let hi = 1.0f64;
    let lo = RISK_SWEEP_FLOOR;
    (0..RISK_SWEEP_POINTS)
        .map(|j| {
            if j == RISK_SWEEP_POINTS - 1 {
                hi
            } else {
                lo * (hi / lo).powf(j as f64 / (RISK_SWEEP_POINTS - 1) as f64)
            }
        })
        .collect()
}

/// Materialize a data source. Generated draws come from the stream's
/// "data" substream so a whole run replays from its master seed.
pub fn resolve_data(
    model: &ModelSpec,
    source: &DataSource,
    stream: &RandomStream,
) -> Result<Dataset> {
    match source {
        DataSource::Inline { rows, times } => match times {
            Some(t) => Dataset::with_times(t.clone(), rows.clone()),
            None => Dataset::new(rows.clone()),
        },
        DataSource::Generate { theta, samples } => {
            model.sample_data(theta, *samples, &mut stream.split("data"))
        }
        DataSource::File { path } => Dataset::read_csv(std::path::Path::new(path)),
    }
}

fn build_region(
    scenario: &Scenario,
    data: &Dataset,
    alpha: f64,
    mle: &Option<MleResult>,
) -> Result<LikelihoodRegion> {
    LikelihoodRegion::new(
        scenario.model.clone(),
        data.clone(),
        alpha,
        scenario.mode,
        mle.clone(),
    )
}

/// Rarity, realized significance, and the full curve for one target.
fn calibrate(
    scenario: &Scenario,
    data: &Dataset,
    beta_target: f64,
    stream: &RandomStream,
) -> Result<(f64, f64, BetaCurve)> {
    let curve = calibration_curve(
        &scenario.model,
        data,
        scenario.mode,
        &scenario.calibration,
        stream,
    )?;
    let alpha = alpha_for_target(&scenario.calibration, &curve, beta_target)?;
    let beta = beta_at(&scenario.calibration, &curve, alpha)?;
    Ok((alpha, beta, curve))
}

/// The significance curve over the standard rarity grid, under one
/// calibration method. Monte Carlo draws from the stream's "calibration"
/// substream; closed forms carry zero standard error.
pub fn calibration_curve(
    model: &ModelSpec,
    data: &Dataset,
    mode: LikelihoodMode,
    calibration: &Calibration,
    stream: &RandomStream,
) -> Result<BetaCurve> {
    let alphas = log_spaced_alphas(CALIBRATION_GRID);
    match calibration {
        Calibration::Asymptotic { k } => closed_form_curve(&alphas, BetaMethod::Asymptotic, |a| {
            beta_asymptotic(*k, a)
        }),
        Calibration::GaussianSurrogate { r, n_samples } => {
            closed_form_curve(&alphas, BetaMethod::GaussianSurrogate, |a| {
                beta_gaussian_surrogate(*r, *n_samples, a)
            })
        }
        Calibration::MonteCarlo { trials } => {
            let cfg = McConfig {
                trials: *trials,
                ..McConfig::default()
            };
            beta_curve_monte_carlo(
                model,
                data,
                mode,
                &alphas,
                &cfg,
                &stream.split("calibration"),
            )
        }
    }
}

fn closed_form_curve(
    alphas: &[f64],
    method: BetaMethod,
    beta_of: impl Fn(f64) -> Result<f64>,
) -> Result<BetaCurve> {
    let points = alphas
        .iter()
        .map(|&a| -> Result<BetaEstimate> {
            Ok(BetaEstimate {
                alpha: a,
                beta: beta_of(a)?,
                stderr: 0.0,
                method,
                warning: None,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BetaCurve { points })
}

/// Largest rarity meeting the significance target. Closed-form methods
/// invert exactly; Monte Carlo reads the supplied curve.
pub fn alpha_for_target(
    calibration: &Calibration,
    curve: &BetaCurve,
    beta_target: f64,
) -> Result<f64> {
    match calibration {
        Calibration::Asymptotic { k } => alpha_for_beta_asymptotic(*k, beta_target),
        Calibration::GaussianSurrogate { r, n_samples } => {
            alpha_for_beta_surrogate(*r, *n_samples, beta_target)
        }
        Calibration::MonteCarlo { .. } => calibrate_from_curve(curve, beta_target),
    }
}

/// Realized significance at a chosen rarity. For Monte Carlo the rarity
/// must be a point of the supplied curve.
pub fn beta_at(calibration: &Calibration, curve: &BetaCurve, alpha: f64) -> Result<f64> {
    match calibration {
        Calibration::Asymptotic { k } => beta_asymptotic(*k, alpha),
        Calibration::GaussianSurrogate { r, n_samples } => {
            beta_gaussian_surrogate(*r, *n_samples, alpha)
        }
        Calibration::MonteCarlo { .. } => curve
            .points
            .iter()
            .find(|p| p.alpha == alpha)
            .map(|p| p.beta)
            .ok_or_else(|| Error::State("rarity is not a point of the calibration curve".into())),
    }
}
