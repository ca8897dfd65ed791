//! Command-line front end: solve minmax games, sweep significance and risk
//! curves, validate Monte Carlo calibration against closed forms, manage
//! scenario files, and expose the enclosing-ball kernel.
//!
//! Every invocation derives all randomness from --seed, so identical flags
//! and seed reproduce identical primary outputs byte for byte. With --out,
//! artifacts land in the directory alongside a run.json manifest holding the
//! resolved configuration; without it, the primary artifact goes to stdout.

use std::cell::RefCell;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use fourthkind::cases::{
    self, builtin, Calibration, DataSource, Scenario, BUILTIN_NAMES, RISK_SWEEP_FLOOR,
    RISK_SWEEP_POINTS,
};
use fourthkind::fmt::{csv_row, sig, to_json_string};
use fourthkind::game::{solve_game, GameConfig, GameSolution};
use fourthkind::miniball::miniball_exact;
use fourthkind::model::{Dataset, LikelihoodMode, ModelSpec, Qoi};
use fourthkind::numerics::RandomStream;
use fourthkind::region::LikelihoodRegion;
use fourthkind::significance::{
    beta_asymptotic, beta_curve_monte_carlo, beta_gaussian_surrogate, log_spaced_alphas,
    BetaCurve, BetaEstimate, BetaMethod, McConfig, CALIBRATION_GRID, DEFAULT_GRID_POINTS,
    DEFAULT_TRIALS,
};
use fourthkind::{Error, Result};

#[derive(Parser)]
#[command(
    name = "fourthkind",
    version,
    about = "Minmax estimation over relative-likelihood regions"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Master seed for every random draw in the run
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Directory for artifacts and the run.json manifest; stdout otherwise
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Primary artifact format for curve commands
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

impl Format {
    fn name(self) -> &'static str {
        match self {
            Format::Json => "json",
            Format::Csv => "csv",
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MethodFlag {
    Asymptotic,
    GaussianSurrogate,
    MonteCarlo,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeFlag {
    Exact,
    Surrogate,
}

impl From<ModeFlag> for LikelihoodMode {
    fn from(m: ModeFlag) -> Self {
        match m {
            ModeFlag::Exact => LikelihoodMode::Exact,
            ModeFlag::Surrogate => LikelihoodMode::Surrogate,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Calibrate a rarity level and solve the minmax game
    Solve(Box<SolveArgs>),
    /// Significance-vs-rarity curve for one calibration method
    BetaCurve(Box<BetaCurveArgs>),
    /// Risk and decision across a grid of significance targets
    RiskCurve(Box<RiskCurveArgs>),
    /// Compare Monte Carlo significance against a closed-form reference
    McValidate(Box<McValidateArgs>),
    /// List, inspect, export, or run bundled scenarios
    Scenario {
        #[command(subcommand)]
        action: ScenarioAction,
    },
    /// Minimum enclosing ball of points read from CSV
    Miniball(MiniballArgs),
}

#[derive(clap::Args)]
struct ModelInputs {
    /// Built-in scenario name or path to a scenario JSON file
    #[arg(long, conflicts_with = "model")]
    scenario: Option<String>,
    /// Path to a model JSON file
    #[arg(long)]
    model: Option<PathBuf>,
    /// Path to a data CSV file
    #[arg(long, conflicts_with = "generate")]
    data: Option<PathBuf>,
    /// Generate data from these comma-separated parameter values
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    generate: Option<Vec<f64>>,
    /// Replications when generating data
    #[arg(long, default_value_t = 1, requires = "generate")]
    samples: usize,
    /// Likelihood mode (defaults to the scenario's, else exact)
    #[arg(long, value_enum)]
    mode: Option<ModeFlag>,
}

#[derive(clap::Args)]
struct CalibrationInputs {
    /// Calibration method (defaults to the scenario's)
    #[arg(long, value_enum)]
    method: Option<MethodFlag>,
    /// Degrees of freedom for the asymptotic method
    #[arg(long, requires = "method")]
    k: Option<u32>,
    /// Residual dimension for the gaussian-surrogate method
    #[arg(long, requires = "method")]
    r: Option<u32>,
    /// Sample count for the gaussian-surrogate method
    #[arg(long, requires = "method")]
    n_samples: Option<usize>,
    /// Monte Carlo trial count
    #[arg(long, requires = "method")]
    trials: Option<usize>,
}

#[derive(clap::Args)]
struct SolveArgs {
    #[command(flatten)]
    inputs: ModelInputs,
    #[command(flatten)]
    calibration: CalibrationInputs,
    /// Rarity level, bypassing calibration
    #[arg(long, conflicts_with = "beta_star")]
    alpha: Option<f64>,
    /// Significance target to calibrate the rarity from
    #[arg(long)]
    beta_star: Option<f64>,
    /// Restrict the quantity of interest to these parameter components
    #[arg(long, value_delimiter = ',')]
    qoi_components: Option<Vec<usize>>,
    /// Relative slack accepted by the enclosing-ball loop
    #[arg(long, default_value_t = 0.01)]
    epsilon0: f64,
    /// Relative enlargement of the certified ball
    #[arg(long, default_value_t = 0.01)]
    delta: f64,
}

#[derive(clap::Args)]
struct BetaCurveArgs {
    #[command(flatten)]
    inputs: ModelInputs,
    #[command(flatten)]
    calibration: CalibrationInputs,
    /// Number of rarity grid points
    #[arg(long, default_value_t = CALIBRATION_GRID)]
    grid: usize,
}

#[derive(clap::Args)]
struct RiskCurveArgs {
    /// Built-in scenario name or path to a scenario JSON file
    #[arg(long)]
    scenario: String,
    /// Number of significance targets in the sweep
    #[arg(long, default_value_t = RISK_SWEEP_POINTS)]
    points: usize,
    /// Smallest significance target in the sweep
    #[arg(long, default_value_t = RISK_SWEEP_FLOOR)]
    beta_floor: f64,
    /// Relative slack accepted by the enclosing-ball loop
    #[arg(long, default_value_t = 0.01)]
    epsilon0: f64,
    /// Relative enlargement of the certified ball
    #[arg(long, default_value_t = 0.01)]
    delta: f64,
}

#[derive(clap::Args)]
struct McValidateArgs {
    /// Built-in scenario name or path to a scenario JSON file
    #[arg(long)]
    scenario: String,
    /// Reference method (defaults to the scenario's closed form)
    #[arg(long, value_enum)]
    method: Option<MethodFlag>,
    /// Degrees of freedom for an asymptotic reference
    #[arg(long)]
    k: Option<u32>,
    /// Residual dimension for a gaussian-surrogate reference
    #[arg(long)]
    r: Option<u32>,
    /// Sample count for a gaussian-surrogate reference
    #[arg(long)]
    n_samples: Option<usize>,
    /// Monte Carlo trials per grid point
    #[arg(long)]
    trials: Option<usize>,
    /// Latin hypercube size for the worst-case parameter search
    #[arg(long)]
    theta_grid: Option<usize>,
    /// Number of rarity grid points
    #[arg(long, default_value_t = CALIBRATION_GRID)]
    grid: usize,
    /// Emit the reference as its own estimate, skipping Monte Carlo
    #[arg(long, default_value_t = false)]
    skip_mc: bool,
}

#[derive(Subcommand)]
enum ScenarioAction {
    /// Names of the bundled scenarios
    List,
    /// Print a scenario as JSON
    Show {
        /// Built-in name or path to a scenario JSON file
        name: String,
    },
    /// Write a scenario JSON file into --out
    Export {
        /// Built-in name or path to a scenario JSON file
        name: String,
    },
    /// Calibrate, solve, sweep, and sample a scenario into --out
    Run {
        /// Built-in name or path to a scenario JSON file
        name: String,
    },
}

#[derive(clap::Args)]
struct MiniballArgs {
    /// CSV of points, one per row
    #[arg(long)]
    points: PathBuf,
}

fn main() {
    std::process::exit(real_main());
}

fn real_main() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 5,
            };
            let _ = e.print();
            return code;
        }
    };
    if let Err(e) = configure_threads() {
        eprintln!("error[{}]: {e}", e.category().name());
        return e.category().exit_code();
    }
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.category().name());
            e.category().exit_code()
        }
    }
}

/// FOURTHKIND_THREADS caps the worker pool; 0 or unset means automatic.
fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var("FOURTHKIND_THREADS") else {
        return Ok(());
    };
    let n: usize = raw.trim().parse().map_err(|_| {
        Error::Domain(format!(
            "FOURTHKIND_THREADS must be a nonnegative integer, got '{raw}'"
        ))
    })?;
    if n > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::State(format!("worker pool: {e}")))?;
    }
    Ok(())
}

fn dispatch(cli: Cli) -> Result<()> {
    let ctx = OutCtx {
        seed: cli.seed,
        out: cli.out,
        format: cli.format,
        artifacts: RefCell::new(Vec::new()),
    };
    match cli.command {
        Command::Solve(args) => cmd_solve(*args, &ctx),
        Command::BetaCurve(args) => cmd_beta_curve(*args, &ctx),
        Command::RiskCurve(args) => cmd_risk_curve(*args, &ctx),
        Command::McValidate(args) => cmd_mc_validate(*args, &ctx),
        Command::Scenario { action } => cmd_scenario(action, &ctx),
        Command::Miniball(args) => cmd_miniball(args, &ctx),
    }
}

/// Output routing: files plus run.json under --out, stdout otherwise.
struct OutCtx {
    seed: u64,
    out: Option<PathBuf>,
    format: Option<Format>,
    artifacts: RefCell<Vec<String>>,
}

impl OutCtx {
    fn format_or(&self, default: Format) -> Format {
        self.format.unwrap_or(default)
    }

    fn require_format(&self, only: Format, command: &str) -> Result<()> {
        if self.format_or(only) != only {
            return Err(Error::Domain(format!(
                "{command} emits {} output only",
                only.name()
            )));
        }
        Ok(())
    }

    fn emit(&self, name: &str, contents: &str) -> Result<()> {
        match &self.out {
            Some(dir) => {
                write_atomic(dir, name, contents)?;
                self.artifacts.borrow_mut().push(name.to_string());
            }
            None => {
                print!("{contents}");
                if !contents.ends_with('\n') {
                    println!();
                }
            }
        }
        Ok(())
    }

    /// Human summary lines; shown only when artifacts went to files.
    fn summarize(&self, text: &str) {
        if self.out.is_some() {
            println!("{text}");
        }
    }

    /// Write the replay manifest. Call last, after every artifact.
    fn finish(&self, command: &str, config: serde_json::Value) -> Result<()> {
        let Some(dir) = &self.out else {
            return Ok(());
        };
        let manifest = json!({
            "command": command,
            "seed": self.seed,
            "format": self.format.map(Format::name),
            "config": config,
            "artifacts": &*self.artifacts.borrow(),
            "versions": {
                "fourthkind": fourthkind::VERSION,
                "fourthkind-cli": env!("CARGO_PKG_VERSION"),
            },
        });
        write_atomic(dir, "run.json", &to_json_string(&manifest)?)?;
        Ok(())
    }
}

fn write_atomic(dir: &Path, name: &str, contents: &str) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let tmp = dir.join(format!(".{name}.tmp"));
    std::fs::write(&tmp, contents)?;
    std::fs::rename(&tmp, dir.join(name))?;
    Ok(())
}

/// A scenario argument is a built-in name or a path to a scenario file.
fn load_scenario(target: &str) -> Result<Scenario> {
    if BUILTIN_NAMES.contains(&target) {
        return builtin(target);
    }
    let path = Path::new(target);
    if path.exists() {
        let text = std::fs::read_to_string(path)?;
        return Scenario::from_json(&text);
    }
    Err(Error::Domain(format!(
        "'{target}' is neither a built-in scenario ({}) nor an existing file",
        BUILTIN_NAMES.join(", ")
    )))
}

/// Model, likelihood mode, and data source from flags and optional scenario.
struct ResolvedInputs {
    scenario: Option<Scenario>,
    model: Option<ModelSpec>,
    mode: LikelihoodMode,
    source: Option<DataSource>,
}

fn resolve_inputs(inputs: &ModelInputs) -> Result<ResolvedInputs> {
    let scenario = inputs
        .scenario
        .as_deref()
        .map(load_scenario)
        .transpose()?;
    let model = match (&scenario, &inputs.model) {
        (Some(s), None) => Some(s.model.clone()),
        (None, Some(path)) => Some(ModelSpec::read_json(path)?),
        (None, None) => None,
        (Some(_), Some(_)) => unreachable!("clap rejects --scenario with --model"),
    };
    let mode = match inputs.mode {
        Some(m) => m.into(),
        None => scenario
            .as_ref()
            .map(|s| s.mode)
            .unwrap_or(LikelihoodMode::Exact),
    };
    let source = match (&inputs.data, &inputs.generate) {
        (Some(path), None) => Some(DataSource::File {
            path: path.to_string_lossy().into_owned(),
        }),
        (None, Some(theta)) => Some(DataSource::Generate {
            theta: theta.clone(),
            samples: inputs.samples,
        }),
        (None, None) => scenario.as_ref().map(|s| s.data.clone()),
        (Some(_), Some(_)) => unreachable!("clap rejects --data with --generate"),
    };
    Ok(ResolvedInputs {
        scenario,
        model,
        mode,
        source,
    })
}

/// Calibration from method flags, falling back to the scenario's. Parameter
/// defaults come from the model and data shape when available.
fn resolve_calibration(
    flags: &CalibrationInputs,
    scenario: Option<&Scenario>,
    model: Option<&ModelSpec>,
    data: Option<&Dataset>,
) -> Result<Option<Calibration>> {
    let calibration = match flags.method {
        Some(MethodFlag::Asymptotic) => {
            let k = match flags.k {
                Some(k) => k,
                None => {
                    model
                        .ok_or_else(|| {
                            Error::Domain("--method asymptotic needs --k without a model".into())
                        })?
                        .dim() as u32
                }
            };
            Some(Calibration::Asymptotic { k })
        }
        Some(MethodFlag::GaussianSurrogate) => {
            let r = match flags.r {
                Some(r) => r,
                None => {
                    let d = data.ok_or_else(|| {
                        Error::Domain(
                            "--method gaussian-surrogate needs --r without data".into(),
                        )
                    })?;
                    (d.row_count() * d.row_dim()) as u32
                }
            };
            let n_samples = match flags.n_samples {
                Some(n) => n,
                None => match (model, data) {
                    (Some(m), Some(d)) => m.replication_count(d),
                    _ => 1,
                },
            };
            Some(Calibration::GaussianSurrogate { r, n_samples })
        }
        Some(MethodFlag::MonteCarlo) => Some(Calibration::MonteCarlo {
            trials: flags.trials.unwrap_or(DEFAULT_TRIALS),
        }),
        None => scenario.map(|s| s.calibration.clone()),
    };
    Ok(calibration)
}

fn empty_curve() -> BetaCurve {
    BetaCurve { points: Vec::new() }
}

fn cmd_solve(args: SolveArgs, ctx: &OutCtx) -> Result<()> {
    ctx.require_format(Format::Json, "solve")?;
    let resolved = resolve_inputs(&args.inputs)?;
    let mut model = resolved
        .model
        .clone()
        .ok_or_else(|| Error::Domain("pass --scenario or --model".into()))?;
    if let Some(indices) = &args.qoi_components {
        model.qoi = Qoi::Components {
            indices: indices.clone(),
        };
        model.validate()?;
    }
    let source = resolved
        .source
        .clone()
        .ok_or_else(|| Error::Domain("pass --data, --generate, or a scenario with data".into()))?;

    let stream = RandomStream::new(ctx.seed);
    let data = cases::resolve_data(&model, &source, &stream)?;
    let calibration = resolve_calibration(
        &args.calibration,
        resolved.scenario.as_ref(),
        Some(&model),
        Some(&data),
    )?;

    let (alpha, beta) = match args.alpha {
        Some(a) => {
            if !(a.is_finite() && a > 0.0) {
                return Err(Error::Domain(format!("rarity must be positive, got {a}")));
            }
            let beta = match &calibration {
                Some(c) if !matches!(c, Calibration::MonteCarlo { .. }) => {
                    Some(cases::beta_at(c, &empty_curve(), a)?)
                }
                _ => None,
            };
            (a, beta)
        }
        None => {
            let target = args
                .beta_star
                .or_else(|| resolved.scenario.as_ref().map(|s| s.beta_target))
                .ok_or_else(|| Error::Domain("pass --beta-star or --alpha".into()))?;
            let calibration = calibration.ok_or_else(|| {
                Error::Domain("calibrating from a target needs --method or a scenario".into())
            })?;
            let curve =
                cases::calibration_curve(&model, &data, resolved.mode, &calibration, &stream)?;
            let alpha = cases::alpha_for_target(&calibration, &curve, target)?;
            let beta = cases::beta_at(&calibration, &curve, alpha)?;
            (alpha, Some(beta))
        }
    };

    let mle = match resolved.mode {
        LikelihoodMode::Exact => Some(model.find_mle(&data, 0, &mut stream.split("mle"))?),
        LikelihoodMode::Surrogate => None,
    };
    let cfg = GameConfig {
        epsilon0: args.epsilon0,
        delta: args.delta,
        ..GameConfig::default()
    };
    let region = LikelihoodRegion::new(model.clone(), data, alpha, resolved.mode, mle)?;
    let solution = solve_game(&region, beta, &cfg, &stream.split("game"))?;

    ctx.emit("solution.json", &solution.to_json()?)?;
    ctx.summarize(&solution_summary(&solution));
    ctx.finish(
        "solve",
        json!({
            "scenario": resolved.scenario,
            "model": model,
            "mode": mode_name(resolved.mode),
            "data": source,
            "alpha": alpha,
            "beta_star": args.beta_star,
            "qoi_components": args.qoi_components,
            "epsilon0": args.epsilon0,
            "delta": args.delta,
        }),
    )
}

fn mode_name(mode: LikelihoodMode) -> &'static str {
    match mode {
        LikelihoodMode::Exact => "exact",
        LikelihoodMode::Surrogate => "surrogate",
    }
}

fn solution_summary(sol: &GameSolution) -> String {
    let beta = sol
        .beta
        .map(|b| sig(b, 5))
        .unwrap_or_else(|| "-".to_string());
    let decision = sol
        .decision
        .iter()
        .map(|d| sig(*d, 5))
        .collect::<Vec<_>>()
        .join(", ");
    format!(
        "alpha {}  beta {}\ndecision [{}]\nrisk {}  radius {}  enlarged {}\natoms {}  gap {}  iterations {}",
        sig(sol.alpha, 5),
        beta,
        decision,
        sig(sol.risk, 5),
        sig(sol.raw_radius, 5),
        sig(sol.enlarged_radius, 5),
        sol.atoms.len(),
        sig(sol.gap, 5),
        sol.iterations,
    )
}

fn cmd_beta_curve(args: BetaCurveArgs, ctx: &OutCtx) -> Result<()> {
    if args.grid < 2 {
        return Err(Error::Domain("the rarity grid needs at least 2 points".into()));
    }
    let resolved = resolve_inputs(&args.inputs)?;
    let stream = RandomStream::new(ctx.seed);
    // data materializes only when a source exists; closed forms run without
    let data = match (&resolved.model, &resolved.source) {
        (Some(m), Some(src)) => Some(cases::resolve_data(m, src, &stream)?),
        _ => None,
    };
    let calibration = resolve_calibration(
        &args.calibration,
        resolved.scenario.as_ref(),
        resolved.model.as_ref(),
        data.as_ref(),
    )?
    .ok_or_else(|| Error::Domain("pass --method or --scenario".into()))?;

    let alphas = log_spaced_alphas(args.grid);
    let curve = match &calibration {
        Calibration::Asymptotic { k } => closed_form_curve(&alphas, BetaMethod::Asymptotic, |a| {
            beta_asymptotic(*k, a)
        })?,
        Calibration::GaussianSurrogate { r, n_samples } => {
            closed_form_curve(&alphas, BetaMethod::GaussianSurrogate, |a| {
                beta_gaussian_surrogate(*r, *n_samples, a)
            })?
        }
        Calibration::MonteCarlo { trials } => {
            let model = resolved
                .model
                .as_ref()
                .ok_or_else(|| Error::Domain("monte-carlo needs --model or --scenario".into()))?;
            let data = data
                .as_ref()
                .ok_or_else(|| Error::Domain("monte-carlo needs --data or --generate".into()))?;
            let cfg = McConfig {
                trials: *trials,
                ..McConfig::default()
            };
            beta_curve_monte_carlo(
                model,
                data,
                resolved.mode,
                &alphas,
                &cfg,
                &stream.split("calibration"),
            )?
        }
    };

    match ctx.format_or(Format::Csv) {
        Format::Csv => ctx.emit("beta_curve.csv", &curve.to_csv())?,
        Format::Json => ctx.emit("beta_curve.json", &to_json_string(&curve)?)?,
    }
    ctx.summarize(&format!("{} rarity points", curve.points.len()));
    ctx.finish(
        "beta-curve",
        json!({
            "scenario": resolved.scenario,
            "model": resolved.model,
            "mode": mode_name(resolved.mode),
            "data": resolved.source,
            "calibration": calibration,
            "grid": args.grid,
        }),
    )
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

fn cli_sweep_targets(points: usize, floor: f64) -> Result<Vec<f64>> {
    if points < 2 {
        return Err(Error::Domain("the sweep needs at least 2 targets".into()));
    }
    if !(floor.is_finite() && floor > 0.0 && floor < 1.0) {
        return Err(Error::Domain(format!(
            "the sweep floor must lie in (0, 1), got {floor}"
        )));
    }
    Ok((0..points)
        .map(|j| {
            if j == points - 1 {
                1.0
            } else {
                floor * (1.0 / floor).powf(j as f64 / (points - 1) as f64)
            }
        })
        .collect())
}

fn cmd_risk_curve(args: RiskCurveArgs, ctx: &OutCtx) -> Result<()> {
    let scenario = load_scenario(&args.scenario)?;
    let targets = cli_sweep_targets(args.points, args.beta_floor)?;
    let stream = RandomStream::new(ctx.seed);
    let data = cases::resolve_data(&scenario.model, &scenario.data, &stream)?;
    let mle = match scenario.mode {
        LikelihoodMode::Exact => Some(scenario.model.find_mle(
            &data,
            0,
            &mut stream.split("mle"),
        )?),
        LikelihoodMode::Surrogate => None,
    };
    let curve = cases::calibration_curve(
        &scenario.model,
        &data,
        scenario.mode,
        &scenario.calibration,
        &stream,
    )?;
    let cfg = GameConfig {
        epsilon0: args.epsilon0,
        delta: args.delta,
        ..GameConfig::default()
    };

    let out_dim = scenario.model.qoi.output_dim(scenario.model.dim());
    let mut rows = Vec::with_capacity(targets.len());
    for (j, &beta_target) in targets.iter().enumerate() {
        let solved: Result<(f64, GameSolution)> = (|| {
            let alpha = cases::alpha_for_target(&scenario.calibration, &curve, beta_target)?;
            let region = LikelihoodRegion::new(
                scenario.model.clone(),
                data.clone(),
                alpha,
                scenario.mode,
                mle.clone(),
            )?;
            let solution = solve_game(
                &region,
                Some(beta_target),
                &cfg,
                &stream.split_index("sweep", j as u64),
            )?;
            Ok((alpha, solution))
        })();
        rows.push(match solved {
            Ok((alpha, sol)) => RiskRow {
                beta_target,
                alpha,
                risk: sol.risk,
                raw_radius: sol.raw_radius,
                decision: sol.decision,
                status: "ok".to_string(),
            },
            Err(e) => RiskRow {
                beta_target,
                alpha: f64::NAN,
                risk: f64::NAN,
                raw_radius: f64::NAN,
                decision: vec![f64::NAN; out_dim],
                status: e.category().name().to_string(),
            },
        });
    }

    match ctx.format_or(Format::Csv) {
        Format::Csv => {
            let mut text = String::from("beta_target,alpha,risk,raw_radius");
            for i in 1..=out_dim {
                text.push_str(&format!(",d_{i}"));
            }
            text.push_str(",status\n");
            for row in &rows {
                let mut vals = vec![row.beta_target, row.alpha, row.risk, row.raw_radius];
                vals.extend_from_slice(&row.decision);
                text.push_str(&csv_row(&vals));
                text.push(',');
                text.push_str(&row.status);
                text.push('\n');
            }
            ctx.emit("risk_curve.csv", &text)?;
        }
        Format::Json => {
            let points: Vec<serde_json::Value> = rows
                .iter()
                .map(|row| {
                    json!({
                        "beta_target": row.beta_target,
                        "alpha": row.alpha,
                        "risk": row.risk,
                        "raw_radius": row.raw_radius,
                        "decision": row.decision,
                        "status": row.status,
                    })
                })
                .collect();
            ctx.emit("risk_curve.json", &to_json_string(&json!({ "points": points }))?)?;
        }
    }
    let failures = rows.iter().filter(|r| r.status != "ok").count();
    ctx.summarize(&format!(
        "{} targets, {} failed",
        rows.len(),
        failures
    ));
    ctx.finish(
        "risk-curve",
        json!({
            "scenario": scenario,
            "points": args.points,
            "beta_floor": args.beta_floor,
            "epsilon0": args.epsilon0,
            "delta": args.delta,
        }),
    )
}

struct RiskRow {
    beta_target: f64,
    alpha: f64,
    risk: f64,
    raw_radius: f64,
    decision: Vec<f64>,
    status: String,
}

fn cmd_mc_validate(args: McValidateArgs, ctx: &OutCtx) -> Result<()> {
    if args.grid < 2 {
        return Err(Error::Domain("the rarity grid needs at least 2 points".into()));
    }
    let scenario = load_scenario(&args.scenario)?;
    let reference = match args.method {
        Some(MethodFlag::Asymptotic) => Calibration::Asymptotic {
            k: args.k.unwrap_or(scenario.model.dim() as u32),
        },
        Some(MethodFlag::GaussianSurrogate) => {
            let r = args.r.ok_or_else(|| {
                Error::Domain("a gaussian-surrogate reference needs --r".into())
            })?;
            Calibration::GaussianSurrogate {
                r,
                n_samples: args.n_samples.unwrap_or(1),
            }
        }
        Some(MethodFlag::MonteCarlo) => {
            return Err(Error::Domain(
                "the reference must be a closed form, not monte-carlo".into(),
            ))
        }
        None => match &scenario.calibration {
            c @ (Calibration::Asymptotic { .. } | Calibration::GaussianSurrogate { .. }) => {
                c.clone()
            }
            Calibration::MonteCarlo { .. } => {
                return Err(Error::Domain(
                    "the scenario calibrates by monte carlo; pass a closed-form reference via --method".into(),
                ))
            }
        },
    };
    let trials = args.trials.unwrap_or(match scenario.calibration {
        Calibration::MonteCarlo { trials } => trials,
        _ => DEFAULT_TRIALS,
    });
    let theta_grid = args.theta_grid.unwrap_or(DEFAULT_GRID_POINTS);

    let alphas = log_spaced_alphas(args.grid);
    let beta_ref: Vec<f64> = alphas
        .iter()
        .map(|&a| match &reference {
            Calibration::Asymptotic { k } => beta_asymptotic(*k, a),
            Calibration::GaussianSurrogate { r, n_samples } => {
                beta_gaussian_surrogate(*r, *n_samples, a)
            }
            Calibration::MonteCarlo { .. } => unreachable!("rejected above"),
        })
        .collect::<Result<Vec<f64>>>()?;

    let stream = RandomStream::new(ctx.seed);
    let mc: Vec<(f64, f64)> = if args.skip_mc {
        beta_ref.iter().map(|&b| (b, 0.0)).collect()
    } else {
        let data = cases::resolve_data(&scenario.model, &scenario.data, &stream)?;
        let cfg = McConfig {
            trials,
            grid_points: theta_grid,
            ..McConfig::default()
        };
        let curve = beta_curve_monte_carlo(
            &scenario.model,
            &data,
            scenario.mode,
            &alphas,
            &cfg,
            &stream.split("mc-validate"),
        )?;
        curve.points.iter().map(|p| (p.beta, p.stderr)).collect()
    };

    let mut text = String::from("alpha,beta_mc,stderr,beta_ref,within\n");
    let mut violations = 0usize;
    for ((&alpha, &bref), &(bmc, se)) in alphas.iter().zip(&beta_ref).zip(&mc) {
        let se_ref = (bref * (1.0 - bref) / trials as f64).sqrt();
        let within = (bmc - bref).abs() <= 3.0 * se.max(se_ref) + 1e-12;
        if !within {
            violations += 1;
        }
        text.push_str(&csv_row(&[alpha, bmc, se, bref]));
        text.push_str(if within { ",1\n" } else { ",0\n" });
    }
    ctx.emit("mc_validate.csv", &text)?;
    ctx.summarize(&format!(
        "{} rarity points, {} outside the 3-SE bracket",
        alphas.len(),
        violations
    ));
    ctx.finish(
        "mc-validate",
        json!({
            "scenario": scenario,
            "reference": reference,
            "trials": trials,
            "theta_grid": theta_grid,
            "grid": args.grid,
            "skip_mc": args.skip_mc,
        }),
    )?;
    if violations > 0 {
        return Err(Error::Calibration(format!(
            "{violations} of {} rarity points fall outside the 3-standard-error bracket",
            alphas.len()
        )));
    }
    Ok(())
}

fn cmd_scenario(action: ScenarioAction, ctx: &OutCtx) -> Result<()> {
    match action {
        ScenarioAction::List => {
            for name in BUILTIN_NAMES {
                println!("{name}");
            }
            Ok(())
        }
        ScenarioAction::Show { name } => {
            let scenario = load_scenario(&name)?;
            let text = scenario.to_json()?;
            match &ctx.out {
                Some(_) => {
                    ctx.emit("scenario.json", &text)?;
                    ctx.summarize(&format!("scenario {}", scenario.name));
                    ctx.finish("scenario-show", json!({ "scenario": scenario }))
                }
                None => {
                    println!("{text}");
                    Ok(())
                }
            }
        }
        ScenarioAction::Export { name } => {
            if ctx.out.is_none() {
                return Err(Error::Domain("scenario export needs --out".into()));
            }
            let scenario = load_scenario(&name)?;
            let file = format!("{}.scenario.json", scenario.name);
            ctx.emit(&file, &scenario.to_json()?)?;
            ctx.summarize(&format!("wrote {file}"));
            ctx.finish("scenario-export", json!({ "scenario": scenario }))
        }
        ScenarioAction::Run { name } => {
            if ctx.out.is_none() {
                return Err(Error::Domain("scenario run needs --out".into()));
            }
            let scenario = load_scenario(&name)?;
            let outputs = cases::run_scenario(&scenario, ctx.seed)?;
            ctx.emit("scenario.json", &scenario.to_json()?)?;
            ctx.emit("data.csv", &outputs.data.to_csv())?;
            ctx.emit("beta_curve.csv", &outputs.beta_curve.to_csv())?;
            ctx.emit("solution.json", &outputs.solution.to_json()?)?;
            ctx.emit("risk_curve.csv", &outputs.risk_curve.to_csv())?;
            ctx.emit("geometry.csv", &outputs.geometry.to_csv())?;
            ctx.summarize(&format!(
                "scenario {}\n{}",
                outputs.name,
                solution_summary(&outputs.solution)
            ));
            ctx.finish("scenario-run", json!({ "scenario": scenario }))
        }
    }
}

fn cmd_miniball(args: MiniballArgs, ctx: &OutCtx) -> Result<()> {
    ctx.require_format(Format::Json, "miniball")?;
    let data = Dataset::read_csv(&args.points)?;
    let (ball, support) = miniball_exact(data.rows())?;
    let report = json!({
        "center": ball.center,
        "radius": ball.radius,
        "support": support.points,
    });
    ctx.emit("miniball.json", &to_json_string(&report)?)?;
    ctx.summarize(&format!(
        "{} points, radius {}",
        data.row_count(),
        sig(ball.radius, 5)
    ));
    ctx.finish(
        "miniball",
        json!({ "points": args.points.to_string_lossy() }),
    )
}
