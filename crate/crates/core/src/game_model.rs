//! Investors, strategy profiles and the functionals defined on them: the
//! impacted price, execution costs, remaining net amounts and the maximum
//! price deviation.
//!
//! The unaffected price is identically zero, so every price curve here is
//! pure impact: `S(t) = int_0^t G(t - s) sum_i a_i(s) ds`.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::kernels::DecayKernel;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InvestorSpec {
    /// Net amount to trade over the horizon; negative sells.
    pub x: f64,
    /// Quadratic transaction-cost coefficient, strictly positive.
    pub gamma: f64,
}

impl InvestorSpec {
    pub fn new(x: f64, gamma: f64) -> Self {
        InvestorSpec { x, gamma }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGameSpec")]
pub struct GameSpec {
    horizon: f64,
    investors: Vec<InvestorSpec>,
    kernel: DecayKernel,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGameSpec {
    horizon: f64,
    investors: Vec<InvestorSpec>,
    kernel: DecayKernel,
}

impl TryFrom<RawGameSpec> for GameSpec {
    type Error = Error;

    fn try_from(raw: RawGameSpec) -> Result<Self> {
        GameSpec::new(raw.horizon, raw.investors, raw.kernel)
    }
}

impl GameSpec {
    /// Requires a finite positive horizon, at least one investor, finite
    /// targets and every `gamma > 0`.
    pub fn new(horizon: f64, investors: Vec<InvestorSpec>, kernel: DecayKernel) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::InvalidGame(format!(
                "horizon must be finite and > 0, got {horizon}"
            )));
        }
        if investors.is_empty() {
            return Err(Error::InvalidGame(
                "at least one investor is required".into(),
            ));
        }
        for (i, inv) in investors.iter().enumerate() {
            if !inv.x.is_finite() {
                return Err(Error::InvalidGame(format!(
                    "investor {i}: net amount x must be finite, got {}",
                    inv.x
                )));
            }
            if !(inv.gamma > 0.0 && inv.gamma.is_finite()) {
                return Err(Error::InvalidGame(format!(
                    "investor {i}: transaction-cost coefficient gamma must be > 0 (gamma_i > 0 is required \
                     for an equilibrium to exist), got {}",
                    inv.gamma
                )));
            }
        }
        Ok(GameSpec {
            horizon,
            investors,
            kernel,
        })
    }

    /// Skips validation. Only for probing degenerate regimes such as
    /// `gamma = 0`, where solvers are expected to report failure.
    #[doc(hidden)]
    pub fn new_unchecked(horizon: f64, investors: Vec<InvestorSpec>, kernel: DecayKernel) -> Self {
        GameSpec {
            horizon,
            investors,
            kernel,
        }
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn investors(&self) -> &[InvestorSpec] {
        &self.investors
    }

    pub fn kernel(&self) -> &DecayKernel {
        &self.kernel
    }

    pub fn n_investors(&self) -> usize {
        self.investors.len()
    }

    pub fn targets(&self) -> Vec<f64> {
        self.investors.iter().map(|i| i.x).collect()
    }

    pub fn gammas(&self) -> Vec<f64> {
        self.investors.iter().map(|i| i.gamma).collect()
    }

    /// Same game with every net amount multiplied by `factor`.
    pub fn with_scaled_targets(&self, factor: f64) -> Self {
        let investors = self
            .investors
            .iter()
            .map(|i| InvestorSpec::new(factor * i.x, i.gamma))
            .collect();
        GameSpec {
            investors,
            ..self.clone()
        }
    }

    pub fn check_index(&self, investor: usize) -> Result<()> {
        if investor >= self.investors.len() {
            return Err(Error::IndexOutOfRange {
                index: investor,
                count: self.investors.len(),
            });
        }
        Ok(())
    }

    /// Errors unless `grid` spans exactly `[0, horizon]`.
    pub fn check_grid(&self, grid: &Grid) -> Result<()> {
        if (grid.horizon() - self.horizon).abs() > 1e-12 * self.horizon {
            return Err(Error::GridMismatch(format!(
                "grid ends at {} but the game horizon is {}",
                grid.horizon(),
                self.horizon
            )));
        }
        Ok(())
    }
}

/// Sampled trading rates, one row per investor.
#[derive(Debug, Clone, PartialEq)]
pub struct StrategyProfile {
    grid: Grid,
    rates: Vec<Vec<f64>>,
}

impl StrategyProfile {
    pub fn new(grid: Grid, rates: Vec<Vec<f64>>) -> Result<Self> {
        if rates.is_empty() {
            return Err(Error::Domain(
                "strategy profile needs at least one investor".into(),
            ));
        }
        if let Some(row) = rates.iter().find(|r| r.len() != grid.len()) {
            return Err(Error::GridMismatch(format!(
                "rate row of length {} on a grid of {} nodes",
                row.len(),
                grid.len()
            )));
        }
        Ok(StrategyProfile { grid, rates })
    }

    pub fn zeros(grid: Grid, n_investors: usize) -> Result<Self> {
        let m = grid.len();
        Self::new(grid, vec![vec![0.0; m]; n_investors])
    }

    /// Profile with `rates[i][k] = f(i, t_k)`.
    pub fn from_fn(grid: Grid, n_investors: usize, f: impl Fn(usize, f64) -> f64) -> Result<Self> {
        let rates = (0..n_investors)
            .map(|i| grid.nodes().iter().map(|&t| f(i, t)).collect())
            .collect();
        Self::new(grid, rates)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn n_investors(&self) -> usize {
        self.rates.len()
    }

    pub fn rates(&self) -> &[Vec<f64>] {
        &self.rates
    }

    pub fn rate(&self, investor: usize) -> Result<&[f64]> {
        self.rates
            .get(investor)
            .map(Vec::as_slice)
            .ok_or(Error::IndexOutOfRange {
                index: investor,
                count: self.rates.len(),
            })
    }

    /// `sum_i a_i(t_k)`.
    pub fn aggregate(&self) -> Vec<f64> {
        let mut total = vec![0.0; self.grid.len()];
        for row in &self.rates {
            for (acc, a) in total.iter_mut().zip(row) {
                *acc += a;
            }
        }
        total
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let rates = self
            .rates
            .iter()
            .map(|r| r.iter().map(|a| factor * a).collect())
            .collect();
        StrategyProfile {
            grid: self.grid.clone(),
            rates,
        }
    }
}

/// Impacted price `S(t_k)` under `profile`, with `S(t_0) = 0`.
pub fn price_path(kernel: &DecayKernel, profile: &StrategyProfile) -> Result<Vec<f64>> {
    profile
        .grid
        .causal_convolution(kernel, &profile.aggregate())
}

/// The two parts of an execution cost.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CostComponents {
    /// `int gamma/2 a^2`
    pub transaction: f64,
    /// `int a S`
    pub impact: f64,
}

impl CostComponents {
    pub fn total(&self) -> f64 {
        self.transaction + self.impact
    }
}

pub fn cost_components(
    game: &GameSpec,
    profile: &StrategyProfile,
    investor: usize,
) -> Result<CostComponents> {
    game.check_index(investor)?;
    let price = price_path(game.kernel(), profile)?;
    cost_components_with_price(game, profile, &price, investor)
}

fn cost_components_with_price(
    game: &GameSpec,
    profile: &StrategyProfile,
    price: &[f64],
    investor: usize,
) -> Result<CostComponents> {
    let gamma = game.investors()[investor].gamma;
    let rate = profile.rate(investor)?;
    let weights = profile.grid.weights();
    let mut transaction = 0.0;
    let mut impact = 0.0;
    for k in 0..rate.len() {
        transaction += weights[k] * 0.5 * gamma * rate[k] * rate[k];
        impact += weights[k] * rate[k] * price[k];
    }
    Ok(CostComponents {
        transaction,
        impact,
    })
}

/// Trapezoidal approximation of `J_i = int (gamma_i/2 a_i^2 + a_i S) dt`.
pub fn execution_cost(game: &GameSpec, profile: &StrategyProfile, investor: usize) -> Result<f64> {
    Ok(cost_components(game, profile, investor)?.total())
}

/// Costs of all investors, sharing one price evaluation.
pub fn execution_costs(game: &GameSpec, profile: &StrategyProfile) -> Result<Vec<f64>> {
    if profile.n_investors() != game.n_investors() {
        return Err(Error::Domain(format!(
            "profile has {} investors, game has {}",
            profile.n_investors(),
            game.n_investors()
        )));
    }
    let price = price_path(game.kernel(), profile)?;
    (0..game.n_investors())
        .map(|i| Ok(cost_components_with_price(game, profile, &price, i)?.total()))
        .collect()
}

/// Remaining net amount `X_i(t) = x - int_0^t a_i`.
pub fn inventory_path(profile: &StrategyProfile, investor: usize, x: f64) -> Result<Vec<f64>> {
    let traded = profile.grid.cumulative_integral(profile.rate(investor)?)?;
    Ok(traded.into_iter().map(|q| x - q).collect())
}

/// `max_k |S(t_k) - S(t_0)|`.
pub fn max_deviation(price: &[f64]) -> Result<f64> {
    let first = *price
        .first()
        .ok_or_else(|| Error::Domain("empty price curve".into()))?;
    Ok(price.iter().map(|s| (s - first).abs()).fold(0.0, f64::max))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    ClosedForm,
    Fredholm,
}

impl std::fmt::Display for SolverKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SolverKind::ClosedForm => "closed_form",
            SolverKind::Fredholm => "fredholm",
        })
    }
}

/// Equilibrium strategies sampled on a grid, with multipliers and provenance.
#[derive(Debug, Clone)]
pub struct EquilibriumSolution {
    pub profile: StrategyProfile,
    /// Constant value of each investor's optimality condition.
    pub eta: Vec<f64>,
    pub price: Vec<f64>,
    /// Remaining net amounts `X_i(t_k)`.
    pub inventories: Vec<Vec<f64>>,
    pub solver: SolverKind,
    /// Sup-norm residual of the discrete optimality conditions on the grid.
    pub residual: f64,
    /// 1-norm condition estimate of the final linear solve.
    pub condition_estimate: Option<f64>,
}

impl EquilibriumSolution {
    pub fn grid(&self) -> &Grid {
        self.profile.grid()
    }

    /// `max_i |X_i(T)|`.
    pub fn liquidation_error(&self) -> f64 {
        self.inventories
            .iter()
            .map(|x| x[x.len() - 1].abs())
            .fold(0.0, f64::max)
    }

    /// `max_i |sum_k w_k a_i(t_k) - x_i|`.
    pub fn quadrature_liquidation_error(&self, game: &GameSpec) -> Result<f64> {
        let grid = self.grid();
        let mut worst: f64 = 0.0;
        for (rate, inv) in self.profile.rates().iter().zip(game.investors()) {
            worst = worst.max((grid.integrate(rate)? - inv.x).abs());
        }
        Ok(worst)
    }

    pub fn costs(&self, game: &GameSpec) -> Result<Vec<f64>> {
        execution_costs(game, &self.profile)
    }

    /// Writes `t,alpha_0..alpha_n,X_0..X_n,S`, one row per node.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let n = self.profile.n_investors();
        let mut header = vec!["t".to_string()];
        header.extend((0..n).map(|i| format!("alpha_{i}")));
        header.extend((0..n).map(|i| format!("X_{i}")));
        header.push("S".into());
        writeln!(out, "{}", header.join(","))?;
        for (k, t) in self.grid().nodes().iter().enumerate() {
            let mut row = vec![format_float(*t)];
            row.extend(self.profile.rates().iter().map(|r| format_float(r[k])));
            row.extend(self.inventories.iter().map(|x| format_float(x[k])));
            row.push(format_float(self.price[k]));
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// 17 significant digits in scientific notation.
pub fn format_float(value: f64) -> String {
    format!("{value:.16e}")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(kernel: DecayKernel, x: f64, gamma: f64) -> GameSpec {
        GameSpec::new(1.0, vec![InvestorSpec::new(x, gamma)], kernel).unwrap()
    }

    #[test]
    fn validation_requires_positive_gamma() {
        let err = GameSpec::new(
            1.0,
            vec![InvestorSpec::new(-1.0, 0.0)],
            DecayKernel::Constant,
        )
        .unwrap_err();
        assert!(err.to_string().contains("gamma"), "{err}");
        assert!(GameSpec::new(1.0, vec![], DecayKernel::Constant).is_err());
        assert!(GameSpec::new(
            -1.0,
            vec![InvestorSpec::new(1.0, 1.0)],
            DecayKernel::Constant
        )
        .is_err());
        assert!(GameSpec::new(
            1.0,
            vec![InvestorSpec::new(f64::NAN, 1.0)],
            DecayKernel::Constant
        )
        .is_err());
        let json = r#"{"horizon":1,"kernel":{"kind":"constant"},"investors":[{"x":-1,"gamma":0}]}"#;
        assert!(serde_json::from_str::<GameSpec>(json).is_err());
    }

    #[test]
    fn zero_profile_has_zero_price_and_cost() {
        let game = single(DecayKernel::exponential(0.95).unwrap(), 0.0, 1.0);
        let profile = StrategyProfile::zeros(Grid::uniform(1.0, 51).unwrap(), 1).unwrap();
        assert!(price_path(game.kernel(), &profile)
            .unwrap()
            .iter()
            .all(|&s| s == 0.0));
        assert_eq!(execution_cost(&game, &profile, 0).unwrap(), 0.0);
        assert!(inventory_path(&profile, 0, 0.0)
            .unwrap()
            .iter()
            .all(|&x| x == 0.0));
    }

    #[test]
    fn front_loaded_sale_under_permanent_impact() {
        // rate -2 on [0, 1/2], then idle
        let grid = Grid::uniform(1.0, 1001).unwrap();
        let profile =
            StrategyProfile::from_fn(grid.clone(), 1, |_, t| if t <= 0.5 { -2.0 } else { 0.0 })
                .unwrap();
        let price = price_path(&DecayKernel::Constant, &profile).unwrap();
        assert_eq!(price[0], 0.0);
        for (t, s) in grid.nodes().iter().zip(&price) {
            let exact = if *t <= 0.5 { -2.0 * t } else { -1.0 };
            // the rate jump falls inside one cell: O(h) error there
            assert!(
                (s - exact).abs() <= 1.0e-3 + 1e-12,
                "t = {t}: {s} vs {exact}"
            );
        }
    }

    #[test]
    fn constant_rate_under_exponential_decay() {
        let (rate, rho) = (-1.5, 0.95);
        let kernel = DecayKernel::exponential(rho).unwrap();
        for m in [201, 401] {
            let grid = Grid::uniform(1.0, m).unwrap();
            let profile = StrategyProfile::from_fn(grid.clone(), 1, |_, _| rate).unwrap();
            let price = price_path(&kernel, &profile).unwrap();
            let h = 1.0 / (m - 1) as f64;
            for (t, s) in grid.nodes().iter().zip(&price) {
                let exact = rate * (1.0 - (-rho * t).exp()) / rho;
                assert!((s - exact).abs() <= 0.2 * h * h, "m = {m}, t = {t}");
            }
        }
    }

    #[test]
    fn constant_rate_costs() {
        let game = single(DecayKernel::Constant, -1.0, 1.0);
        let profile =
            StrategyProfile::from_fn(Grid::uniform(1.0, 101).unwrap(), 1, |_, _| -1.0).unwrap();
        let parts = cost_components(&game, &profile, 0).unwrap();
        assert!((parts.transaction - 0.5).abs() < 1e-14);
        assert!((parts.impact - 0.5).abs() < 1e-14);
        assert!((execution_cost(&game, &profile, 0).unwrap() - 1.0).abs() < 1e-14);
        assert!(matches!(
            execution_cost(&game, &profile, 1),
            Err(Error::IndexOutOfRange { .. })
        ));
    }

    #[test]
    fn permanent_impact_cost_is_strategy_independent() {
        let game = single(DecayKernel::Constant, -1.0, 1.0);
        let grid = Grid::uniform(1.0, 801).unwrap();
        // several admissible schedules integrating to -1
        let schedules: [fn(f64) -> f64; 3] = [
            |_| -1.0,
            |t| -2.0 * (1.0 - t),
            |t| -1.0 + 3.0 * (std::f64::consts::PI * t).cos(),
        ];
        for schedule in schedules {
            let profile = StrategyProfile::from_fn(grid.clone(), 1, |_, t| schedule(t)).unwrap();
            let impact = cost_components(&game, &profile, 0).unwrap().impact;
            assert!((impact - 0.5).abs() < 1e-5, "{impact}");
        }
    }

    #[test]
    fn linear_inventory_for_constant_rate() {
        let grid = Grid::uniform(2.0, 41).unwrap();
        let x = -3.0;
        let profile = StrategyProfile::from_fn(grid.clone(), 1, |_, _| x / 2.0).unwrap();
        let inventory = inventory_path(&profile, 0, x).unwrap();
        assert_eq!(inventory[0], x);
        for (t, xi) in grid.nodes().iter().zip(&inventory) {
            assert!((xi - x * (1.0 - t / 2.0)).abs() < 1e-14);
        }
    }

    #[test]
    fn max_deviation_cases() {
        assert_eq!(max_deviation(&[2.0; 5]).unwrap(), 0.0);
        assert_eq!(max_deviation(&[0.0, -0.1, -0.5, -0.9]).unwrap(), 0.9);
        assert_eq!(max_deviation(&[1.0, 1.5, 0.2]).unwrap(), 0.8);
        assert!(max_deviation(&[]).is_err());
    }

    #[test]
    fn quadratic_scaling_of_costs() {
        let game = GameSpec::new(
            1.0,
            vec![InvestorSpec::new(-1.0, 0.3), InvestorSpec::new(0.0, 0.7)],
            DecayKernel::exponential(0.5).unwrap(),
        )
        .unwrap();
        let grid = Grid::uniform(1.0, 101).unwrap();
        let profile =
            StrategyProfile::from_fn(
                grid,
                2,
                |i, t| if i == 0 { -1.0 + t } else { (4.0 * t).sin() },
            )
            .unwrap();
        let base = execution_costs(&game, &profile).unwrap();
        let scaled = execution_costs(&game, &profile.scaled(-2.5)).unwrap();
        for (b, s) in base.iter().zip(&scaled) {
            assert!((s - 6.25 * b).abs() <= 1e-13 * b.abs().max(1.0));
        }
        let price = price_path(game.kernel(), &profile).unwrap();
        let flipped = price_path(game.kernel(), &profile.scaled(-1.0)).unwrap();
        for (p, q) in price.iter().zip(&flipped) {
            assert_eq!(*p, -q);
        }
        assert_eq!(
            max_deviation(&price).unwrap(),
            max_deviation(&flipped).unwrap()
        );
    }

    #[test]
    fn csv_layout() {
        let grid = Grid::uniform(1.0, 3).unwrap();
        let profile = StrategyProfile::from_fn(grid, 2, |i, _| i as f64).unwrap();
        let solution = EquilibriumSolution {
            inventories: vec![vec![0.0; 3], vec![1.0, 0.5, 0.0]],
            price: vec![0.0, 0.1, 0.2],
            eta: vec![0.0, 0.0],
            profile,
            solver: SolverKind::Fredholm,
            residual: 0.0,
            condition_estimate: None,
        };
        let mut buf = Vec::new();
        solution.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "t,alpha_0,alpha_1,X_0,X_1,S");
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[2].split(',').count(), 6);
        let parsed: f64 = lines[2].split(',').next_back().unwrap().parse().unwrap();
        assert_eq!(parsed, 0.1);
        assert_eq!(format_float(0.1), "1.0000000000000001e-1");
    }
}
