//! Command-line front end.
//!
//! Every command reads one JSON config holding a `game`, a `scenario`, or
//! (for `check-kernel` only) a bare `kernel`, plus optional defaults
//! (`grid`, `graded`, `solver`, `tolerances`). Flags override the config.
//! Bulk results go to files, the JSON summary to stdout and diagnostics to
//! stderr.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::closed_form::solve_equilibrium_exponential;
use crate::error::Error;
use crate::fredholm::solve_equilibrium_numeric;
use crate::game_model::{max_deviation, GameSpec, SolverKind};
use crate::grid::Grid;
use crate::kernels::{check_positive_type, DecayKernel};
use crate::scenarios::{
    build_scenario, solve, sweep, write_sweep_csv, FrontRunningScenario, SweepParam,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_SOLVER: i32 = 2;
pub const EXIT_TOLERANCE: i32 = 3;
pub const EXIT_NOT_POSITIVE_TYPE: i32 = 4;

const DEFAULT_GRID: usize = 1001;
const DEFAULT_KERNEL_NODES: usize = 200;
const DEFAULT_VERIFY_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Parser)]
#[command(
    name = "transient-impact",
    version,
    about = "Equilibrium execution under transient price impact"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve one game and write solution.csv and summary.json.
    Solve(SolveArgs),
    /// Sweep one scenario parameter and write sweep.csv.
    Sweep(SweepArgs),
    /// Cross-check the two solvers (or an analytic solution) on one grid.
    Verify(VerifyArgs),
    /// Test whether the configured kernel is of positive type.
    CheckKernel(CheckKernelArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SolverArg {
    ClosedForm,
    Fredholm,
}

impl From<SolverArg> for SolverKind {
    fn from(arg: SolverArg) -> Self {
        match arg {
            SolverArg::ClosedForm => SolverKind::ClosedForm,
            SolverArg::Fredholm => SolverKind::Fredholm,
        }
    }
}

#[derive(Debug, clap::Args)]
pub struct GridArgs {
    /// Number of grid nodes.
    #[arg(long = "grid", value_name = "M")]
    pub size: Option<usize>,
    /// Cluster nodes towards both ends of the horizon.
    #[arg(long)]
    pub graded: bool,
}

#[derive(Debug, clap::Args)]
pub struct SolveArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[command(flatten)]
    pub grid: GridArgs,
    #[arg(long, value_enum)]
    pub solver: Option<SolverArg>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, clap::Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, value_parser = parse_sweep_param)]
    pub vary: SweepParam,
    /// Comma-separated values.
    #[arg(long, value_parser = parse_values)]
    pub values: Values,
    #[command(flatten)]
    pub grid: GridArgs,
    #[arg(long, value_enum)]
    pub solver: Option<SolverArg>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, clap::Args)]
pub struct VerifyArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[command(flatten)]
    pub grid: GridArgs,
    /// Bound on every reported difference and residual.
    #[arg(long)]
    pub tol: Option<f64>,
    /// Also write verify.json here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, clap::Args)]
pub struct CheckKernelArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Number of uniform nodes for the Gram spectrum.
    #[arg(long)]
    pub nodes: Option<usize>,
    /// Also write kernel_report.json here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Values(pub Vec<f64>);

fn parse_values(s: &str) -> Result<Values, String> {
    let values = s
        .split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|e| format!("{v:?}: {e}")))
        .collect::<Result<Vec<_>, _>>()?;
    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
        return Err(format!("non-finite value {v}"));
    }
    Ok(Values(values))
}

fn parse_sweep_param(s: &str) -> Result<SweepParam, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    /// Bound used by `verify`.
    pub verify: Option<f64>,
    /// Eigenvalue floor used by `check-kernel`.
    pub psd: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub game: Option<GameSpec>,
    pub scenario: Option<FrontRunningScenario>,
    /// Standalone kernel for `check-kernel`.
    pub kernel: Option<DecayKernel>,
    /// Horizon for a standalone kernel; defaults to 1.
    pub horizon: Option<f64>,
    pub grid: Option<usize>,
    pub graded: Option<bool>,
    pub solver: Option<SolverKind>,
    #[serde(default)]
    pub tolerances: Tolerances,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = fs::read_to_string(path)
            .map_err(|e| Failure::config(format!("{}: {e}", path.display())))?;
        let config: RunConfig = serde_json::from_str(&text)
            .map_err(|e| Failure::config(format!("{}: {e}", path.display())))?;
        let sources = [
            config.game.is_some(),
            config.scenario.is_some(),
            config.kernel.is_some(),
        ];
        if sources.iter().filter(|s| **s).count() != 1 {
            return Err(Failure::config(format!(
                "{}: exactly one of \"game\", \"scenario\" or \"kernel\" must be given",
                path.display()
            )));
        }
        Ok(config)
    }

    pub fn game_spec(&self) -> Result<GameSpec, Failure> {
        match (&self.game, &self.scenario) {
            (Some(game), _) => Ok(game.clone()),
            (None, Some(scenario)) => build_scenario(scenario).map_err(Failure::from),
            (None, None) => Err(Failure::config(
                "this command needs a \"game\" or \"scenario\"",
            )),
        }
    }

    fn grid(&self, args: &GridArgs, horizon: f64) -> Result<Grid, Failure> {
        let size = args.size.or(self.grid).unwrap_or(DEFAULT_GRID);
        let graded = args.graded || self.graded.unwrap_or(false);
        let grid = if graded {
            Grid::cosine(horizon, size)
        } else {
            Grid::uniform(horizon, size)
        };
        grid.map_err(Failure::from)
    }
}

/// A command that did not complete normally.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    fn config(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_CONFIG,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = if e.is_solver_failure() {
            EXIT_SOLVER
        } else {
            EXIT_CONFIG
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure::config(format!("{}: {e}", path.display()))
}

fn write_file(path: &Path, contents: &[u8]) -> Result<(), Failure> {
    fs::write(path, contents).map_err(|e| io_failure(path, e))
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report types serialize");
    s.push('\n');
    s
}

fn default_solver(game: &GameSpec) -> SolverKind {
    match game.kernel().exponential_rate() {
        Some(rho) if rho > 0.0 => SolverKind::ClosedForm,
        _ => SolverKind::Fredholm,
    }
}

#[derive(Debug, Serialize)]
pub struct SolveSummary {
    pub solver: SolverKind,
    pub grid_size: usize,
    pub eta: Vec<f64>,
    pub costs: Vec<f64>,
    pub sigma: f64,
    pub residual: f64,
    pub liquidation_error: f64,
    pub condition_estimate: Option<f64>,
}

pub fn run_solve(args: &SolveArgs, stdout: &mut dyn Write) -> Result<i32, Failure> {
    let config = RunConfig::load(&args.config)?;
    let game = config.game_spec()?;
    let grid = config.grid(&args.grid, game.horizon())?;
    let solver = args
        .solver
        .map(SolverKind::from)
        .or(config.solver)
        .unwrap_or_else(|| default_solver(&game));
    let solution = solve(&game, &grid, solver)?;
    let summary = SolveSummary {
        solver,
        grid_size: grid.len(),
        eta: solution.eta.clone(),
        costs: solution.costs(&game)?,
        sigma: max_deviation(&solution.price)?,
        residual: solution.residual,
        liquidation_error: solution.liquidation_error(),
        condition_estimate: solution.condition_estimate,
    };
    fs::create_dir_all(&args.out).map_err(|e| io_failure(&args.out, e))?;
    let mut csv = Vec::new();
    solution
        .write_csv(&mut csv)
        .map_err(|e| io_failure(&args.out, e))?;
    write_file(&args.out.join("solution.csv"), &csv)?;
    let json = to_json(&summary);
    write_file(&args.out.join("summary.json"), json.as_bytes())?;
    stdout
        .write_all(json.as_bytes())
        .map_err(|e| io_failure(Path::new("<stdout>"), e))?;
    Ok(EXIT_OK)
}

#[derive(Debug, Serialize)]
#[allow(non_snake_case)]
struct SweepRow {
    swept_value: f64,
    J_liq: f64,
    J_opp_total: f64,
    J_opp_each: Option<f64>,
    sigma: f64,
    sign_changes: usize,
}

pub fn run_sweep(args: &SweepArgs, stdout: &mut dyn Write) -> Result<i32, Failure> {
    let config = RunConfig::load(&args.config)?;
    let template = config
        .scenario
        .clone()
        .ok_or_else(|| Failure::config("sweep needs a \"scenario\" config"))?;
    let grid = config.grid(&args.grid, template.horizon)?;
    let solver = args
        .solver
        .map(SolverKind::from)
        .or(config.solver)
        .unwrap_or(SolverKind::ClosedForm);
    let reports = sweep(&template, args.vary, &args.values.0, &grid, solver)?;
    fs::create_dir_all(&args.out).map_err(|e| io_failure(&args.out, e))?;
    let mut csv = Vec::new();
    write_sweep_csv(&reports, &mut csv).map_err(|e| io_failure(&args.out, e))?;
    write_file(&args.out.join("sweep.csv"), &csv)?;
    let rows: Vec<SweepRow> = reports
        .iter()
        .map(|r| SweepRow {
            swept_value: r.swept_value.unwrap_or(f64::NAN),
            J_liq: r.liquidator_cost,
            J_opp_total: r.opportunist_total_cost,
            J_opp_each: r.opportunist_cost_each,
            sigma: r.sigma,
            sign_changes: r.sign_changes,
        })
        .collect();
    stdout
        .write_all(to_json(&rows).as_bytes())
        .map_err(|e| io_failure(Path::new("<stdout>"), e))?;
    Ok(EXIT_OK)
}

#[derive(Debug, Serialize)]
pub struct VerifyReport {
    /// `closed_form` or `analytic`.
    pub reference: String,
    pub grid_size: usize,
    pub strategy_sup_diff: f64,
    pub eta_max_diff: f64,
    pub residual_fredholm: f64,
    /// Absent for the analytic reference.
    pub residual_reference: Option<f64>,
    pub tolerance: f64,
    pub pass: bool,
}

pub fn run_verify(args: &VerifyArgs, stdout: &mut dyn Write) -> Result<i32, Failure> {
    let config = RunConfig::load(&args.config)?;
    let game = config.game_spec()?;
    let grid = config.grid(&args.grid, game.horizon())?;
    let tolerance = args
        .tol
        .or(config.tolerances.verify)
        .unwrap_or(DEFAULT_VERIFY_TOLERANCE);
    if tolerance.is_nan() || tolerance < 0.0 {
        return Err(Failure::config(format!(
            "tolerance must be >= 0, got {tolerance}"
        )));
    }

    let (reference, reference_rates, reference_eta, residual_reference) = match game.kernel() {
        DecayKernel::Exponential { rho } if *rho > 0.0 => {
            let exact = solve_equilibrium_exponential(&game, &grid)?;
            ("closed_form", exact.profile.rates().to_vec(), exact.eta.clone(), Some(exact.residual))
        }
        DecayKernel::Constant if game.n_investors() == 1 => {
            // uniform trading: a = x/T, eta = gamma x/T + x
            let inv = game.investors()[0];
            let rate = inv.x / game.horizon();
            ("analytic", vec![vec![rate; grid.len()]], vec![inv.gamma * rate + inv.x], None)
        }
        other => {
            return Err(Failure::config(format!(
                "verify needs an exponential kernel with rho > 0, or a constant kernel with one investor; got {other:?}"
            )))
        }
    };
    let numeric = solve_equilibrium_numeric(&game, &grid)?;
    let strategy_sup_diff = reference_rates
        .iter()
        .zip(numeric.profile.rates())
        .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
        .fold(0.0, f64::max);
    let eta_max_diff = reference_eta
        .iter()
        .zip(&numeric.eta)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let mut checked = vec![strategy_sup_diff, eta_max_diff, numeric.residual];
    checked.extend(residual_reference);
    let pass = checked.iter().all(|v| *v <= tolerance);
    let report = VerifyReport {
        reference: reference.into(),
        grid_size: grid.len(),
        strategy_sup_diff,
        eta_max_diff,
        residual_fredholm: numeric.residual,
        residual_reference,
        tolerance,
        pass,
    };
    let json = to_json(&report);
    if let Some(dir) = &args.out {
        fs::create_dir_all(dir).map_err(|e| io_failure(dir, e))?;
        write_file(&dir.join("verify.json"), json.as_bytes())?;
    }
    stdout
        .write_all(json.as_bytes())
        .map_err(|e| io_failure(Path::new("<stdout>"), e))?;
    Ok(if pass { EXIT_OK } else { EXIT_TOLERANCE })
}

pub fn run_check_kernel(args: &CheckKernelArgs, stdout: &mut dyn Write) -> Result<i32, Failure> {
    let config = RunConfig::load(&args.config)?;
    let (kernel, horizon) = match &config.kernel {
        Some(kernel) => (kernel.clone(), config.horizon.unwrap_or(1.0)),
        None => {
            let game = config.game_spec()?;
            (game.kernel().clone(), game.horizon())
        }
    };
    let nodes = args.nodes.unwrap_or(DEFAULT_KERNEL_NODES);
    let report = check_positive_type(&kernel, horizon, nodes, config.tolerances.psd)?;
    let json = to_json(&report);
    if let Some(dir) = &args.out {
        fs::create_dir_all(dir).map_err(|e| io_failure(dir, e))?;
        write_file(&dir.join("kernel_report.json"), json.as_bytes())?;
    }
    stdout
        .write_all(json.as_bytes())
        .map_err(|e| io_failure(Path::new("<stdout>"), e))?;
    Ok(if report.is_positive_type {
        EXIT_OK
    } else {
        EXIT_NOT_POSITIVE_TYPE
    })
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                let _ = write!(stderr, "{text}");
                EXIT_CONFIG
            } else {
                let _ = write!(stdout, "{text}");
                EXIT_OK
            };
        }
    };
    let outcome = match &cli.command {
        Command::Solve(a) => run_solve(a, stdout),
        Command::Sweep(a) => run_sweep(a, stdout),
        Command::Verify(a) => run_verify(a, stdout),
        Command::CheckKernel(a) => run_check_kernel(a, stdout),
    };
    match outcome {
        Ok(code) => code,
        Err(failure) => {
            let _ = writeln!(stderr, "error: {}", failure.message);
            failure.code
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_value_lists() {
        assert_eq!(
            parse_values("0, 1,2.5").unwrap(),
            Values(vec![0.0, 1.0, 2.5])
        );
        assert!(parse_values("1,,2").is_err());
        assert!(parse_values("nan").is_err());
    }

    #[test]
    fn config_needs_exactly_one_source() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        fs::write(&path, r#"{"grid": 11}"#).unwrap();
        assert_eq!(RunConfig::load(&path).unwrap_err().code, EXIT_CONFIG);
        fs::write(&path, r#"{"kernel": {"kind": "constant"}, "bogus": 1}"#).unwrap();
        assert!(RunConfig::load(&path).is_err());
        fs::write(&path, r#"{"kernel": {"kind": "constant"}}"#).unwrap();
        assert!(RunConfig::load(&path).is_ok());
    }

    #[test]
    fn solver_failures_map_to_their_exit_code() {
        let singular = Error::Singular {
            context: "x".into(),
            condition: 1e20,
        };
        assert_eq!(Failure::from(singular).code, EXIT_SOLVER);
        assert_eq!(Failure::from(Error::Domain("x".into())).code, EXIT_CONFIG);
    }

    #[test]
    fn help_exits_cleanly() {
        let (mut out, mut err) = (Vec::new(), Vec::new());
        assert_eq!(
            run(["transient-impact", "--help"], &mut out, &mut err),
            EXIT_OK
        );
        assert!(String::from_utf8(out).unwrap().contains("check-kernel"));
        assert_eq!(
            run(
                ["transient-impact", "frobnicate"],
                &mut Vec::new(),
                &mut err
            ),
            EXIT_CONFIG
        );
    }
}
