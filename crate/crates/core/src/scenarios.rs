//! One liquidator facing `n` identical opportunistic traders.
//!
//! Investor 0 must sell (or buy) `x_liq` over the horizon; every other
//! investor has a zero net target and trades only to profit from the
//! liquidator's predictable impact.

use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::closed_form::solve_equilibrium_exponential;
use crate::error::{Error, Result};
use crate::fredholm::solve_equilibrium_numeric;
use crate::game_model::{
    format_float, max_deviation, EquilibriumSolution, GameSpec, InvestorSpec, SolverKind,
};
use crate::grid::Grid;
use crate::kernels::DecayKernel;

/// Values of the aggregate opportunist rate within this distance of zero
/// do not count as having a sign.
pub const SIGN_DEAD_BAND: f64 = 1e-9;

/// Relative tolerance for treating opportunists' schedules as identical.
pub const HOMOGENEITY_TOLERANCE: f64 = 1e-9;

fn default_liquidation() -> f64 {
    -1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrontRunningScenario {
    pub n_opportunists: usize,
    pub gamma_liq: f64,
    pub gamma_opp: f64,
    pub rho: f64,
    pub horizon: f64,
    #[serde(default = "default_liquidation")]
    pub x_liq: f64,
}

impl FrontRunningScenario {
    pub fn with(&self, param: SweepParam, value: f64) -> Result<Self> {
        let mut out = self.clone();
        match param {
            SweepParam::N => {
                if !(value >= 0.0 && value.fract() == 0.0 && value <= u32::MAX as f64) {
                    return Err(Error::Domain(format!(
                        "n must be a nonnegative integer, got {value}"
                    )));
                }
                out.n_opportunists = value as usize;
            }
            SweepParam::GammaOpp => out.gamma_opp = value,
            SweepParam::Rho => out.rho = value,
        }
        Ok(out)
    }
}

pub fn build_scenario(scenario: &FrontRunningScenario) -> Result<GameSpec> {
    for (name, value) in [
        ("gamma_liq", scenario.gamma_liq),
        ("gamma_opp", scenario.gamma_opp),
    ] {
        if !(value > 0.0 && value.is_finite()) {
            return Err(Error::InvalidGame(format!(
                "{name} = {value}: gamma_i > 0 is required"
            )));
        }
    }
    if !(scenario.rho > 0.0 && scenario.rho.is_finite()) {
        return Err(Error::Domain(format!(
            "rho must be finite and > 0, got {}",
            scenario.rho
        )));
    }
    if !scenario.x_liq.is_finite() {
        return Err(Error::Domain(format!(
            "x_liq must be finite, got {}",
            scenario.x_liq
        )));
    }
    let mut investors = vec![InvestorSpec::new(scenario.x_liq, scenario.gamma_liq)];
    investors.extend(std::iter::repeat_n(
        InvestorSpec::new(0.0, scenario.gamma_opp),
        scenario.n_opportunists,
    ));
    GameSpec::new(
        scenario.horizon,
        investors,
        DecayKernel::exponential(scenario.rho)?,
    )
}

pub fn solve(game: &GameSpec, grid: &Grid, solver: SolverKind) -> Result<EquilibriumSolution> {
    match solver {
        SolverKind::ClosedForm => solve_equilibrium_exponential(game, grid),
        SolverKind::Fredholm => solve_equilibrium_numeric(game, grid),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ScenarioReport {
    /// Value of the swept parameter, when produced by [`sweep`].
    pub swept_value: Option<f64>,
    pub solver: SolverKind,
    pub eta: Vec<f64>,
    /// `J_i` for every investor, liquidator first.
    pub costs: Vec<f64>,
    pub liquidator_cost: f64,
    pub opportunist_total_cost: f64,
    /// `None` without opportunists.
    pub opportunist_cost_each: Option<f64>,
    /// `sum_{i>=1} X_i(t_k)`: the net amount the opportunists still have to
    /// trade, which is zero at both ends.
    pub aggregate_opportunist_inventory: Vec<f64>,
    /// `sum_{i>=1} int_0^{t_k} a_i`: the opportunists' accumulated position,
    /// negative while they are net short.
    pub aggregate_opportunist_position: Vec<f64>,
    /// `sum_{i>=1} a_i(t_k)`.
    pub aggregate_opportunist_rate: Vec<f64>,
    /// `max_t |S(t) - S(0)|`.
    pub sigma: f64,
    pub sign_changes: usize,
    pub price: Vec<f64>,
    pub residual: f64,
}

/// Strict sign alternations between consecutive values, ignoring values
/// within [`SIGN_DEAD_BAND`] of zero.
pub fn count_sign_changes(values: &[f64]) -> usize {
    let mut changes = 0;
    let mut last_positive = None;
    for &v in values {
        if v.abs() <= SIGN_DEAD_BAND {
            continue;
        }
        let positive = v > 0.0;
        if last_positive.is_some_and(|p| p != positive) {
            changes += 1;
        }
        last_positive = Some(positive);
    }
    changes
}

fn check_homogeneous(solution: &EquilibriumSolution) -> Result<()> {
    let rates = solution.profile.rates();
    if rates.len() < 3 {
        return Ok(());
    }
    let scale = rates[1..]
        .iter()
        .flatten()
        .fold(1.0f64, |m, a| m.max(a.abs()));
    for (i, rate) in rates.iter().enumerate().skip(2) {
        let deviation = rate
            .iter()
            .zip(&rates[1])
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        if deviation > HOMOGENEITY_TOLERANCE * scale {
            return Err(Error::Inconsistent(format!(
                "opportunists 1 and {i} differ by {deviation:e} although their parameters are identical"
            )));
        }
    }
    Ok(())
}

pub fn report_from_solution(
    game: &GameSpec,
    solution: &EquilibriumSolution,
) -> Result<ScenarioReport> {
    check_homogeneous(solution)?;
    let m = solution.grid().len();
    let n = game.n_investors() - 1;
    let costs = solution.costs(game)?;
    let opportunist_total_cost: f64 = costs[1..].iter().sum();
    let sum_over = |rows: &[Vec<f64>]| -> Vec<f64> {
        (0..m)
            .map(|k| rows[1..].iter().map(|r| r[k]).sum())
            .collect()
    };
    let inventory = sum_over(&solution.inventories);
    let position = inventory.iter().map(|x| -x).collect();
    let rate = sum_over(solution.profile.rates());
    Ok(ScenarioReport {
        swept_value: None,
        solver: solution.solver,
        eta: solution.eta.clone(),
        liquidator_cost: costs[0],
        opportunist_total_cost,
        opportunist_cost_each: (n > 0).then(|| opportunist_total_cost / n as f64),
        costs,
        aggregate_opportunist_inventory: inventory,
        aggregate_opportunist_position: position,
        sign_changes: count_sign_changes(&rate),
        aggregate_opportunist_rate: rate,
        sigma: max_deviation(&solution.price)?,
        price: solution.price.clone(),
        residual: solution.residual,
    })
}

pub fn analyze_scenario(
    scenario: &FrontRunningScenario,
    grid: &Grid,
    solver: SolverKind,
) -> Result<ScenarioReport> {
    let game = build_scenario(scenario)?;
    let solution = solve(&game, grid, solver)?;
    report_from_solution(&game, &solution)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    N,
    GammaOpp,
    Rho,
}

impl FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "n" => Ok(SweepParam::N),
            "gamma_opp" => Ok(SweepParam::GammaOpp),
            "rho" => Ok(SweepParam::Rho),
            other => Err(Error::Domain(format!(
                "unknown sweep parameter {other:?} (expected n, gamma_opp or rho)"
            ))),
        }
    }
}

impl std::fmt::Display for SweepParam {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SweepParam::N => "n",
            SweepParam::GammaOpp => "gamma_opp",
            SweepParam::Rho => "rho",
        })
    }
}

/// Analyzes `template` with `vary` set to each of `values`, in parallel.
/// Reports come back in input order; on failure the error of the first
/// failing value (in input order) is returned.
pub fn sweep(
    template: &FrontRunningScenario,
    vary: SweepParam,
    values: &[f64],
    grid: &Grid,
    solver: SolverKind,
) -> Result<Vec<ScenarioReport>> {
    let results: Vec<Result<ScenarioReport>> = values
        .par_iter()
        .map(|&value| {
            let mut report = template
                .with(vary, value)
                .and_then(|s| analyze_scenario(&s, grid, solver))?;
            report.swept_value = Some(value);
            Ok(report)
        })
        .collect();
    results
        .into_iter()
        .zip(values)
        .map(|(r, &value)| {
            r.map_err(|e| Error::Sweep {
                parameter: vary.to_string(),
                value,
                source: Box::new(e),
            })
        })
        .collect()
}

/// `swept_value,J_liq,J_opp_total,J_opp_each,sigma,sign_changes`; the
/// per-opportunist column is empty without opportunists.
pub fn write_sweep_csv<W: Write>(reports: &[ScenarioReport], mut out: W) -> std::io::Result<()> {
    writeln!(
        out,
        "swept_value,J_liq,J_opp_total,J_opp_each,sigma,sign_changes"
    )?;
    for r in reports {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.swept_value.map(format_float).unwrap_or_default(),
            format_float(r.liquidator_cost),
            format_float(r.opportunist_total_cost),
            r.opportunist_cost_each
                .map(format_float)
                .unwrap_or_default(),
            format_float(r.sigma),
            r.sign_changes
        )?;
    }
    Ok(())
}
