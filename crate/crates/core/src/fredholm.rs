//! General-kernel equilibrium solver.
//!
//! The equilibrium is characterized by a coupled system of Fredholm
//! equations of the second kind: for every investor `i` the function
//!
//! ```text
//! (F a)_i(t) = gamma_i a_i(t) + int_0^t G(t - s) sum_j a_j(s) ds + int_t^T G(s - t) a_i(s) ds
//! ```
//!
//! is constant (equal to a multiplier `eta_i`) and `int_0^T a_i = x_i`.
//! Nyström collocation with trapezoidal weights turns this into one dense
//! square system in the unknowns `(a_i(t_k), eta_i)`, solved by LU.

use faer::prelude::*;

use crate::error::{Error, Result};
use crate::game_model::{
    inventory_path, price_path, EquilibriumSolution, GameSpec, SolverKind, StrategyProfile,
};
use crate::grid::Grid;
use crate::linalg::{column, solve_checked};

/// The operator `F` on a grid.
///
/// Block `(i, j)` of the full matrix is `causal` for `i != j` and
/// `gamma_i I + causal + anticipation` on the diagonal.
#[derive(Debug, Clone)]
pub struct DiscreteOperator {
    grid: Grid,
    gammas: Vec<f64>,
    /// Lower triangular, `w~_kj G(t_k - t_j)`.
    causal: Mat<f64>,
    /// Upper triangular, `w^_kj G(t_j - t_k)`.
    anticipation: Mat<f64>,
}

/// The three terms of `F a`, evaluated separately.
#[derive(Debug, Clone)]
pub struct OperatorTerms {
    /// `gamma_i a_i(t_k)` per investor.
    pub transaction: Vec<Vec<f64>>,
    /// Impact of the aggregate rate, shared by all investors.
    pub causal: Vec<f64>,
    /// Anticipated own future impact per investor.
    pub anticipation: Vec<Vec<f64>>,
}

pub fn discretize_operator(game: &GameSpec, grid: &Grid) -> Result<DiscreteOperator> {
    game.check_grid(grid)?;
    let m = grid.len();
    let nodes = grid.nodes();
    let kernel = game.kernel();
    let mut causal = Mat::<f64>::zeros(m, m);
    let mut anticipation = Mat::<f64>::zeros(m, m);
    for k in 0..m {
        for j in 0..=k {
            causal[(k, j)] = grid.causal_weight(k, j) * kernel.eval(nodes[k] - nodes[j])?;
        }
        for j in k..m {
            anticipation[(k, j)] =
                grid.anticipation_weight(k, j) * kernel.eval(nodes[j] - nodes[k])?;
        }
    }
    Ok(DiscreteOperator {
        grid: grid.clone(),
        gammas: game.gammas(),
        causal,
        anticipation,
    })
}

impl DiscreteOperator {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn n_investors(&self) -> usize {
        self.gammas.len()
    }

    pub fn causal(&self) -> MatRef<'_, f64> {
        self.causal.as_ref()
    }

    pub fn anticipation(&self) -> MatRef<'_, f64> {
        self.anticipation.as_ref()
    }

    fn check_profile(&self, profile: &StrategyProfile) -> Result<()> {
        if profile.n_investors() != self.n_investors() {
            return Err(Error::Domain(format!(
                "profile has {} investors, operator has {}",
                profile.n_investors(),
                self.n_investors()
            )));
        }
        if profile.grid().nodes() != self.grid.nodes() {
            return Err(Error::GridMismatch(
                "profile and operator use different grids".into(),
            ));
        }
        Ok(())
    }

    pub fn terms(&self, profile: &StrategyProfile) -> Result<OperatorTerms> {
        self.check_profile(profile)?;
        let m = self.grid.len();
        let aggregate = profile.aggregate();
        // same summation order as `Grid::causal_convolution`
        let causal = (0..m)
            .map(|k| {
                let mut acc = 0.0;
                for (j, a) in aggregate.iter().enumerate().take(k + 1) {
                    acc += self.causal[(k, j)] * a;
                }
                acc
            })
            .collect();
        let transaction = profile
            .rates()
            .iter()
            .zip(&self.gammas)
            .map(|(r, g)| r.iter().map(|a| g * a).collect())
            .collect();
        let anticipation = profile
            .rates()
            .iter()
            .map(|rate| {
                (0..m)
                    .map(|k| {
                        let mut acc = 0.0;
                        for (j, a) in rate.iter().enumerate().skip(k) {
                            acc += self.anticipation[(k, j)] * a;
                        }
                        acc
                    })
                    .collect()
            })
            .collect();
        Ok(OperatorTerms {
            transaction,
            causal,
            anticipation,
        })
    }

    /// `(F a)_i(t_k)`, one row per investor.
    pub fn apply(&self, profile: &StrategyProfile) -> Result<Vec<Vec<f64>>> {
        let terms = self.terms(profile)?;
        Ok(terms
            .transaction
            .iter()
            .zip(&terms.anticipation)
            .map(|(tr, an)| {
                (0..tr.len())
                    .map(|k| tr[k] + terms.causal[k] + an[k])
                    .collect()
            })
            .collect())
    }

    /// `max_{i,k} |(F a)_i(t_k) - eta_i|`.
    pub fn residual(&self, profile: &StrategyProfile, eta: &[f64]) -> Result<f64> {
        if eta.len() != self.n_investors() {
            return Err(Error::Domain(format!(
                "{} multipliers for {} investors",
                eta.len(),
                self.n_investors()
            )));
        }
        let applied = self.apply(profile)?;
        Ok(applied
            .iter()
            .zip(eta)
            .flat_map(|(row, e)| row.iter().map(move |v| (v - e).abs()))
            .fold(0.0, f64::max))
    }

    /// The full `(n+1) m` square matrix, investor-major.
    pub fn matrix(&self) -> Mat<f64> {
        let (n, m) = (self.n_investors(), self.grid.len());
        let mut full = Mat::<f64>::zeros(n * m, n * m);
        self.fill_blocks(full.as_mut());
        full
    }

    fn fill_blocks(&self, mut target: MatMut<'_, f64>) {
        let m = self.grid.len();
        for (i, gamma) in self.gammas.iter().enumerate() {
            for j in 0..self.n_investors() {
                for k in 0..m {
                    for l in 0..=k {
                        target[(i * m + k, j * m + l)] = self.causal[(k, l)];
                    }
                }
            }
            for k in 0..m {
                for l in k..m {
                    target[(i * m + k, i * m + l)] += self.anticipation[(k, l)];
                }
                target[(i * m + k, i * m + k)] += gamma;
            }
        }
    }
}

/// Solves the collocated optimality conditions together with the
/// liquidation constraints `sum_k w_k a_i(t_k) = x_i`.
///
/// The kernel should be of positive type; nothing checks it here, but an
/// unsuitable kernel or a vanishing `gamma` typically shows up as
/// [`Error::Singular`].
pub fn solve_equilibrium_numeric(game: &GameSpec, grid: &Grid) -> Result<EquilibriumSolution> {
    let operator = discretize_operator(game, grid)?;
    let (n, m) = (game.n_investors(), grid.len());
    let size = n * (m + 1);
    let mut system = Mat::<f64>::zeros(size, size);
    operator.fill_blocks(system.as_mut().submatrix_mut(0, 0, n * m, n * m));
    for i in 0..n {
        for k in 0..m {
            system[(i * m + k, n * m + i)] = -1.0;
            system[(n * m + i, i * m + k)] = grid.weights()[k];
        }
    }
    let mut rhs = vec![0.0; size];
    rhs[n * m..].copy_from_slice(&game.targets());
    let (unknowns, condition) = solve_checked(
        system.as_ref(),
        column(&rhs).as_ref(),
        "Fredholm equilibrium system",
    )?;
    drop(system);

    let rates = (0..n)
        .map(|i| (0..m).map(|k| unknowns[(i * m + k, 0)]).collect())
        .collect();
    let eta: Vec<f64> = (0..n).map(|i| unknowns[(n * m + i, 0)]).collect();
    let profile = StrategyProfile::new(grid.clone(), rates)?;
    let price = price_path(game.kernel(), &profile)?;
    let inventories = game
        .investors()
        .iter()
        .enumerate()
        .map(|(i, inv)| inventory_path(&profile, i, inv.x))
        .collect::<Result<_>>()?;
    let residual = operator.residual(&profile, &eta)?;
    Ok(EquilibriumSolution {
        profile,
        eta,
        price,
        inventories,
        solver: SolverKind::Fredholm,
        residual,
        condition_estimate: Some(condition),
    })
}

/// Sup-norm residual of the optimality conditions for any solution on a
/// grid spanning the game's horizon.
pub fn fredholm_residual(game: &GameSpec, solution: &EquilibriumSolution) -> Result<f64> {
    if solution.profile.n_investors() != game.n_investors() {
        return Err(Error::GridMismatch(format!(
            "solution has {} investors, game has {}",
            solution.profile.n_investors(),
            game.n_investors()
        )));
    }
    discretize_operator(game, solution.grid())?.residual(&solution.profile, &solution.eta)
}
