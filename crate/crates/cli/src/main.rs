//! Command-line front end: structural validation, the deterministic
//! identity suite, curvature-constant extraction, and the stochastic
//! checks, over catalog models (`heisenberg:d`, `su2:lambda`,
//! `product:n,m`) or JSON chart configs (`@path`).
//!
//! Exit codes: 0 all checks passed, 1 at least one check failed, 2 usage
//! or configuration error, 3 no failures but at least one inconclusive
//! result.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use folgeo::fields::ScalarField;
use folgeo::models::{
    heisenberg_model, load_model, product_model, su2_model, validate_model, CheckStatus,
    FoliationModel,
};
use folgeo::report::{CheckReport, Verdict};
use folgeo::stochastic::{
    check_equilibrium, check_feynman_kac, check_gradient_bound, check_li_yau,
    check_theta_isometry, DiffusionParams,
};
use folgeo::verify::{self, SuiteParams};

const DEFAULT_SEED: u64 = 0x0BC5_EED5;

#[derive(Parser)]
#[command(
    name = "folgeo",
    version,
    about = "Numerical workbench for totally geodesic Riemannian foliations"
)]
struct Cli {
    /// Size of the worker thread pool (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check the structural frame properties of a model.
    Validate(ValidateArgs),
    /// Run the deterministic identity and inequality checks.
    Verify(VerifyArgs),
    /// Extract curvature constants and the bounds they imply.
    Constants(ConstantsArgs),
    /// Run the stochastic (path-sampling) checks.
    Simulate(SimulateArgs),
}

#[derive(Args)]
struct ValidateArgs {
    /// Model: `heisenberg[:d]`, `su2[:lambda]`, `product[:n,m]`, or `@config.json`.
    model: String,
    /// Number of sampled interior points.
    #[arg(long, default_value_t = 64)]
    points: usize,
    /// Residual tolerance.
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Append the report to this file as a JSON line.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    /// Model: `heisenberg[:d]`, `su2[:lambda]`, `product[:n,m]`, or `@config.json`.
    model: String,
    /// Metric parameters swept by the eps-dependent checks.
    #[arg(long, value_delimiter = ',', default_value = "0.25,1,4")]
    eps: Vec<f64>,
    /// Number of random polynomial fields per check.
    #[arg(long, default_value_t = 20)]
    fields: usize,
    /// Number of sampled chart points.
    #[arg(long, default_value_t = 20)]
    points: usize,
    /// Maximum total degree of the random polynomials.
    #[arg(long, default_value_t = 3)]
    degree: u8,
    /// Residual tolerance.
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Append each check report to this file as a JSON line.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ConstantsArgs {
    /// Model: `heisenberg[:d]`, `su2[:lambda]`, `product[:n,m]`, or `@config.json`.
    model: String,
    /// Number of sampled chart points for the eigenvalue sweep.
    #[arg(long, default_value_t = 20)]
    points: usize,
    /// Mismatch/spread tolerance.
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Append the report to this file as a JSON line.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum StochasticCheck {
    /// Every check applicable to the model.
    All,
    /// Damped parallel transport preserves the weighted metric.
    Isometry,
    /// Transported-derivative route to `d(P_t f)` against finite differences.
    SemigroupDerivative,
    /// `|d P_t f|_eps <= exp((K + kappa/eps) t) P_t |d f|_eps`.
    Gradient,
    /// Parabolic Harnack-type inequality for `ln P_t f`.
    Harnack,
    /// Decay of a first-moment statistic between two horizons.
    Equilibrium,
}

#[derive(Args)]
struct SimulateArgs {
    /// Model: `heisenberg[:d]`, `su2[:lambda]`, `product[:n,m]`, or `@config.json`.
    model: String,
    /// Which check to run.
    #[arg(long, value_enum, default_value_t = StochasticCheck::All)]
    check: StochasticCheck,
    /// Vertical metric weight.
    #[arg(long, default_value_t = 1.0)]
    eps: f64,
    /// Diffusion horizon.
    #[arg(long, default_value_t = 0.25)]
    t: f64,
    /// Late horizon for the equilibrium comparison.
    #[arg(long, default_value_t = 2.0)]
    t_late: f64,
    /// Nominal step size.
    #[arg(long, default_value_t = 1e-3)]
    dt: f64,
    /// Number of independent paths.
    #[arg(long, default_value_t = 20_000)]
    paths: usize,
    /// Batches for batched standard errors.
    #[arg(long, default_value_t = 20)]
    batches: usize,
    /// Finite-difference stencil step around the start point.
    #[arg(long, default_value_t = 1e-3)]
    step: f64,
    /// Start point as comma-separated chart coordinates (default: chart center).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    x0: Option<Vec<f64>>,
    /// Scalar field for the semigroup-derivative and gradient checks.
    #[arg(long, default_value = "x1")]
    function: String,
    /// Positive scalar field for the Harnack check.
    #[arg(long, default_value = "exp(0 - x1/2)")]
    positive_function: String,
    /// Transport-isometry tolerance.
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Append each check report to this file as a JSON line.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .context("configuring the thread pool")?;
    }
    match cli.command {
        Command::Validate(args) => validate_cmd(args),
        Command::Verify(args) => verify_cmd(args),
        Command::Constants(args) => constants_cmd(args),
        Command::Simulate(args) => simulate_cmd(args),
    }
}

/// Resolve `heisenberg[:d]`, `su2[:lambda]`, `product[:n,m]`, or `@path`.
fn parse_model(spec: &str) -> Result<FoliationModel> {
    if let Some(path) = spec.strip_prefix('@') {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading model config `{path}`"))?;
        return load_model(&text).with_context(|| format!("parsing model config `{path}`"));
    }
    let (name, args) = match spec.split_once(':') {
        Some((n, a)) => (n, Some(a)),
        None => (spec, None),
    };
    let model = match name {
        "heisenberg" => heisenberg_model(parse_param(args, 1)?)?,
        "su2" => su2_model(parse_param(args, 1.0)?)?,
        "product" => {
            let (n, m) = match args {
                None | Some("") => (2, 1),
                Some(a) => {
                    let (n, m) = a
                        .split_once(',')
                        .ok_or_else(|| anyhow!("product takes `n,m`, got `{a}`"))?;
                    (
                        n.trim().parse().context("parsing product rank n")?,
                        m.trim().parse().context("parsing product rank m")?,
                    )
                }
            };
            product_model(n, m)?
        }
        other => bail!(
            "unknown model `{other}`; expected heisenberg[:d], su2[:lambda], \
             product[:n,m], or @path/to/config.json"
        ),
    };
    Ok(model)
}

fn parse_param<T>(args: Option<&str>, default: T) -> Result<T>
where
    T: std::str::FromStr,
    T::Err: std::error::Error + Send + Sync + 'static,
{
    match args {
        None | Some("") => Ok(default),
        Some(s) => s
            .trim()
            .parse()
            .with_context(|| format!("parsing model parameter `{s}`")),
    }
}

/// Exit code from a batch of reports: failure dominates, then inconclusive.
fn grade(reports: &[CheckReport]) -> ExitCode {
    if reports.iter().any(|r| r.verdict == Verdict::Fail) {
        ExitCode::from(1)
    } else if reports.iter().any(|r| r.verdict == Verdict::Inconclusive) {
        ExitCode::from(3)
    } else {
        ExitCode::SUCCESS
    }
}

fn append_json_line<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    use std::io::Write as _;
    let mut fh = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .with_context(|| format!("opening `{}`", path.display()))?;
    writeln!(fh, "{}", serde_json::to_string(value)?)?;
    Ok(())
}

fn validate_cmd(args: ValidateArgs) -> Result<ExitCode> {
    let model = parse_model(&args.model)?;
    let report = validate_model(&model, args.points, args.tol, args.seed)?;
    println!(
        "{}: {} structural checks on {} points",
        report.model,
        report.checks.len(),
        report.sample_count
    );
    for check in &report.checks {
        let status = match check.status {
            CheckStatus::Pass => "pass",
            CheckStatus::Fail => "FAIL",
            CheckStatus::Flagged => "flagged",
        };
        println!(
            "  {:<24} worst {:>12.3e}  tol {:>9.1e}  {status}  ({})",
            check.name, check.max_residual, check.tolerance, check.detail
        );
    }
    if let Some(path) = &args.out {
        append_json_line(path, &report)?;
    }
    Ok(if report.all_passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

fn verify_cmd(args: VerifyArgs) -> Result<ExitCode> {
    let model = Arc::new(parse_model(&args.model)?);
    let params = SuiteParams {
        eps: args.eps,
        field_count: args.fields,
        point_count: args.points,
        max_degree: args.degree,
        seed: args.seed,
        tol: args.tol,
    };
    let reports = verify::run_suite(&model, &params)?;
    for report in &reports {
        println!("{}", report.summary());
    }
    let failed = reports
        .iter()
        .filter(|r| r.verdict == Verdict::Fail)
        .count();
    println!(
        "{}: {} checks, {} failed",
        model.name(),
        reports.len(),
        failed
    );
    if let Some(path) = &args.out {
        for report in &reports {
            append_json_line(path, report)?;
        }
    }
    Ok(grade(&reports))
}

fn constants_cmd(args: ConstantsArgs) -> Result<ExitCode> {
    let model = parse_model(&args.model)?;
    let params = SuiteParams {
        point_count: args.points,
        seed: args.seed,
        tol: args.tol,
        ..SuiteParams::default()
    };
    let (report, constants) = verify::extract_constants(&model, &params)?;
    println!("{}", report.summary());
    println!("  {constants}");
    match verify::diameter_bound(&constants) {
        Some(v) => println!("  diameter <= {v:.9}"),
        None => println!("  diameter bound: not applicable"),
    }
    match verify::lambda1_bound(&constants) {
        Some(v) => println!("  lambda_1 >= {v:.9}"),
        None => println!("  spectral-gap bound: not applicable"),
    }
    if let Some(path) = &args.out {
        append_json_line(path, &report)?;
    }
    Ok(grade(std::slice::from_ref(&report)))
}

fn simulate_cmd(args: SimulateArgs) -> Result<ExitCode> {
    let model = Arc::new(parse_model(&args.model)?);
    let params = DiffusionParams {
        eps: args.eps,
        dt: args.dt,
        n_paths: args.paths,
        seed: args.seed,
    };
    let x0 = match &args.x0 {
        Some(p) => p.clone(),
        None => model.center(),
    };
    let f = ScalarField::parse(&args.function)?;
    let f_pos = ScalarField::parse(&args.positive_function)?;
    println!(
        "{}: t = {}, dt = {}, eps = {}, paths = {}, start = {:?}",
        model.name(),
        args.t,
        args.dt,
        args.eps,
        args.paths,
        x0
    );

    let want = |k: StochasticCheck| args.check == StochasticCheck::All || args.check == k;
    let has_constants = model.known_constants().is_some();
    let mut reports = Vec::new();
    if want(StochasticCheck::Isometry) {
        reports.push(check_theta_isometry(&model, &params, args.t, &x0, args.tol)?);
    }
    if want(StochasticCheck::SemigroupDerivative) {
        reports.push(check_feynman_kac(
            &model, &params, args.t, &x0, &f, args.step,
        )?);
    }
    if want(StochasticCheck::Gradient) {
        if has_constants {
            reports.push(check_gradient_bound(
                &model,
                &params,
                args.t,
                &x0,
                &f,
                args.step,
                args.batches,
            )?);
        } else if args.check == StochasticCheck::Gradient {
            bail!("the gradient check needs a model with curvature constants");
        } else {
            println!("gradient check skipped: no curvature constants for this model");
        }
    }
    if want(StochasticCheck::Harnack) {
        if has_constants {
            reports.push(check_li_yau(
                &model,
                &params,
                args.t,
                &x0,
                &f_pos,
                args.step,
                args.batches,
            )?);
        } else if args.check == StochasticCheck::Harnack {
            bail!("the Harnack check needs a model with curvature constants");
        } else {
            println!("Harnack check skipped: no curvature constants for this model");
        }
    }
    if want(StochasticCheck::Equilibrium) {
        reports.push(check_equilibrium(
            &model,
            &params,
            args.t,
            args.t_late,
            &x0,
            args.batches,
        )?);
    }

    for report in &reports {
        println!("{}", report.summary());
        for (key, value) in &report.details {
            println!("    {key}: {value}");
        }
    }
    if let Some(path) = &args.out {
        for report in &reports {
            append_json_line(path, report)?;
        }
    }
    Ok(grade(&reports))
}
