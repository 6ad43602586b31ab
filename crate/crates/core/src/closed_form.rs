//! Exact equilibrium for exponential decay `G(t) = exp(-rho t)`.
//!
//! With exponential decay, the stacked state `psi = (a_0, ..., a_n, S)`
//! solves the linear ODE `psi' = M psi - V^T eta` with `eta = U psi(T)`,
//! so that `psi(t) = (exp(M t) + N1 exp(M T)) z` where `z` is fixed by the
//! liquidation constraints through a single `(n+2)`-dimensional solve.

use faer::prelude::*;

use crate::error::{Error, Result};
use crate::expm::matrix_exponential;
use crate::fredholm::fredholm_residual;
use crate::game_model::{EquilibriumSolution, GameSpec, SolverKind, StrategyProfile};
use crate::grid::Grid;
use crate::linalg::{column, column_to_vec, max_abs, solve_checked, LuSolver};

/// Number of propagation steps between fresh exponentials on uniform grids.
const REFRESH_EVERY: usize = 64;

/// The matrices of the exponential-kernel closed form for `n + 1` investors.
///
/// Investor coordinates come first, the price coordinate last.
#[derive(Debug, Clone)]
pub struct SystemMatrices {
    pub horizon: f64,
    pub rho: f64,
    pub gammas: Vec<f64>,
    /// `M`: generator of the state dynamics.
    pub dynamics: Mat<f64>,
    pub dynamics_inverse: Mat<f64>,
    /// `N1`: maps `exp(M T) z` to the constant part of the state.
    pub terminal_coupling: Mat<f64>,
    /// `W = (I | 0)`: picks the investor coordinates.
    pub selector: Mat<f64>,
    /// `v`: unit vector of the price coordinate.
    pub price_unit: Mat<f64>,
    /// `U`: `eta = U psi(T)`, i.e. `eta_i = gamma_i a_i(T) + S(T)`.
    pub multiplier_map: Mat<f64>,
    /// `V`: how the multipliers enter the dynamics.
    pub multiplier_feedback: Mat<f64>,
    /// `N2`: boundary-value system for `z`.
    pub boundary: Mat<f64>,
    /// `exp(M T)`.
    pub terminal_exponential: Mat<f64>,
    /// `(x_0, ..., x_n, 0)`.
    pub augmented_targets: Vec<f64>,
}

impl SystemMatrices {
    pub fn n_investors(&self) -> usize {
        self.gammas.len()
    }

    /// `-rho (1 + sum 1/(rho gamma_i + 1)) prod (rho + 1/gamma_i)`.
    pub fn determinant_formula(&self) -> f64 {
        let rho = self.rho;
        let sum: f64 = self.gammas.iter().map(|g| 1.0 / (rho * g + 1.0)).sum();
        let prod: f64 = self.gammas.iter().map(|g| rho + 1.0 / g).product();
        -rho * (1.0 + sum) * prod
    }
}

pub fn build_system_matrices(game: &GameSpec) -> Result<SystemMatrices> {
    let rho = game.kernel().exponential_rate().ok_or_else(|| {
        Error::Domain(format!(
            "closed form requires an exponential kernel, got {:?}",
            game.kernel()
        ))
    })?;
    if rho <= 0.0 {
        return Err(Error::Domain(format!(
            "closed form requires rho > 0, got {rho}"
        )));
    }
    let gammas = game.gammas();
    if let Some(g) = gammas.iter().find(|g| !(**g > 0.0 && g.is_finite())) {
        return Err(Error::Domain(format!("gamma_i > 0 is required, got {g}")));
    }
    let horizon = game.horizon();
    let n = gammas.len();
    let dim = n + 1;
    let last = n;

    let dynamics = Mat::<f64>::from_fn(dim, dim, |r, c| match (r, c) {
        (r, c) if r == last => {
            if c == last {
                -rho
            } else {
                1.0
            }
        }
        (r, c) if c == last => 2.0 * rho / gammas[r],
        (r, c) if r == c => rho,
        (r, _) => -1.0 / gammas[r],
    });
    let terminal_coupling = Mat::<f64>::from_fn(dim, dim, |r, c| match (r, c) {
        (r, c) if r == last => {
            if c == last {
                n as f64
            } else {
                gammas[c]
            }
        }
        (_, c) if c == last => rho,
        (r, c) if r == c => rho * gammas[r],
        _ => 0.0,
    });
    let selector = Mat::<f64>::from_fn(n, dim, |r, c| if r == c { 1.0 } else { 0.0 });
    let price_unit = Mat::<f64>::from_fn(dim, 1, |r, _| if r == last { 1.0 } else { 0.0 });
    let multiplier_map = Mat::<f64>::from_fn(n, dim, |r, c| {
        if c == last {
            1.0
        } else if r == c {
            gammas[r]
        } else {
            0.0
        }
    });
    let multiplier_feedback =
        Mat::<f64>::from_fn(n, dim, |r, c| if r == c { rho / gammas[r] } else { 0.0 });

    let identity = Mat::<f64>::identity(dim, dim);
    let dynamics_lu = LuSolver::new(dynamics.as_ref())?;
    let dynamics_inverse = dynamics_lu.solve(identity.as_ref());
    if max_abs(dynamics_inverse.as_ref()).is_nan()
        || dynamics_lu.condition_estimate() > crate::linalg::MAX_CONDITION
    {
        return Err(Error::Singular {
            context: "state dynamics matrix".into(),
            condition: dynamics_lu.condition_estimate(),
        });
    }
    let terminal_exponential = matrix_exponential((Scale(horizon) * &dynamics).as_ref())?;

    // investor rows: W((M^-1 + N1 T) e^{MT} - M^-1); last row: v^T (I + N1 e^{MT})
    let integral_rows = &(&(&dynamics_inverse + &(Scale(horizon) * &terminal_coupling))
        * &terminal_exponential)
        - &dynamics_inverse;
    let terminal_rows = &identity + &(&terminal_coupling * &terminal_exponential);
    let boundary = Mat::<f64>::from_fn(dim, dim, |r, c| {
        if r == last {
            terminal_rows[(last, c)]
        } else {
            integral_rows[(r, c)]
        }
    });
    let mut augmented_targets = game.targets();
    augmented_targets.push(0.0);

    Ok(SystemMatrices {
        horizon,
        rho,
        gammas,
        dynamics,
        dynamics_inverse,
        terminal_coupling,
        selector,
        price_unit,
        multiplier_map,
        multiplier_feedback,
        boundary,
        terminal_exponential,
        augmented_targets,
    })
}

/// The closed form sampled on a grid.
struct Trajectory {
    /// `psi(t_k)` per node.
    states: Vec<Vec<f64>>,
    /// `int_0^{t_k} psi` per node.
    integrals: Vec<Vec<f64>>,
    eta: Vec<f64>,
    condition: f64,
}

fn trajectory(mats: &SystemMatrices, grid: &Grid) -> Result<Trajectory> {
    let (z, condition) = solve_checked(
        mats.boundary.as_ref(),
        column(&mats.augmented_targets).as_ref(),
        "closed-form boundary system",
    )?;
    let constant = &mats.terminal_coupling * (&mats.terminal_exponential * &z);
    let dim = z.nrows();

    // e^{M t_k} z at every node
    let nodes = grid.nodes();
    let mut transient = Vec::with_capacity(grid.len());
    match grid.uniform_step() {
        Some(h) => {
            let step = matrix_exponential((Scale(h) * &mats.dynamics).as_ref())?;
            let mut current = z.clone();
            for (k, &t) in nodes.iter().enumerate() {
                if k > 0 {
                    current = if k % REFRESH_EVERY == 0 {
                        &matrix_exponential((Scale(t) * &mats.dynamics).as_ref())? * &z
                    } else {
                        &step * &current
                    };
                }
                transient.push(current.clone());
            }
        }
        None => {
            for &t in nodes {
                transient.push(&matrix_exponential((Scale(t) * &mats.dynamics).as_ref())? * &z);
            }
        }
    }

    let mut states = Vec::with_capacity(grid.len());
    let mut integrals = Vec::with_capacity(grid.len());
    for (p, &t) in transient.iter().zip(nodes) {
        states.push(column_to_vec((p + &constant).as_ref()));
        // M^-1 (e^{Mt} - I) z + t N1 e^{MT} z
        let integral = &(&mats.dynamics_inverse * &(p - &z)) + &(Scale(t) * &constant);
        integrals.push(column_to_vec(integral.as_ref()));
    }
    let terminal = column(&states[states.len() - 1]);
    let eta = column_to_vec((&mats.multiplier_map * &terminal).as_ref());
    if states.iter().flatten().chain(&eta).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!(
            "closed-form state (dimension {dim})"
        )));
    }
    Ok(Trajectory {
        states,
        integrals,
        eta,
        condition,
    })
}

/// Samples the exact equilibrium on `grid`. Inventories are integrated
/// analytically, so `X_i(T)` is zero up to rounding; the reported residual
/// is the collocated optimality residual on the same grid.
pub fn solve_equilibrium_exponential(game: &GameSpec, grid: &Grid) -> Result<EquilibriumSolution> {
    game.check_grid(grid)?;
    let mats = build_system_matrices(game)?;
    let traj = trajectory(&mats, grid)?;
    let n = mats.n_investors();
    let rates = (0..n)
        .map(|i| traj.states.iter().map(|s| s[i]).collect())
        .collect();
    let price = traj.states.iter().map(|s| s[n]).collect();
    let inventories = game
        .investors()
        .iter()
        .enumerate()
        .map(|(i, inv)| traj.integrals.iter().map(|q| inv.x - q[i]).collect())
        .collect();
    let mut solution = EquilibriumSolution {
        profile: StrategyProfile::new(grid.clone(), rates)?,
        eta: traj.eta,
        price,
        inventories,
        solver: SolverKind::ClosedForm,
        residual: f64::NAN,
        condition_estimate: Some(traj.condition),
    };
    solution.residual = fredholm_residual(game, &solution)?;
    Ok(solution)
}

/// Deviations from the exact algebraic identities satisfied by the system
/// matrices, and from the state ODE along the sampled solution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdentityReport {
    /// `max |(M - V^T U)(N1 - v v^T)/rho - I|`.
    pub inverse_identity: f64,
    /// `max |V^T U (I + N1) - M N1|`.
    pub coupling_identity: f64,
    /// `coupling_identity / max |M N1|`.
    pub coupling_identity_relative: f64,
    /// `|det M - formula| / |formula|`.
    pub determinant_relative: f64,
    /// Central-difference residual of `psi' - M psi + V^T eta` at interior
    /// nodes, relative to `max |psi'|` on the grid.
    pub ode_residual: f64,
}

pub fn verify_matrix_identities(mats: &SystemMatrices, grid: &Grid) -> Result<IdentityReport> {
    let dim = mats.n_investors() + 1;
    let identity = Mat::<f64>::identity(dim, dim);
    let feedback_map = mats.multiplier_feedback.transpose() * &mats.multiplier_map;
    let rank_one = &mats.price_unit * mats.price_unit.transpose();
    let product = &(&mats.dynamics - &feedback_map) * &(&mats.terminal_coupling - &rank_one);
    let inverse_identity = max_abs((&(Scale(1.0 / mats.rho) * &product) - &identity).as_ref());
    let lhs = &feedback_map * &(&identity + &mats.terminal_coupling);
    let rhs = &mats.dynamics * &mats.terminal_coupling;
    let coupling_identity = max_abs((&lhs - &rhs).as_ref());
    let coupling_identity_relative = coupling_identity / max_abs(rhs.as_ref());
    let formula = mats.determinant_formula();
    let determinant_relative = (mats.dynamics.determinant() - formula).abs() / formula.abs();

    let ode_residual = if grid.len() >= 3 {
        let traj = trajectory(mats, grid)?;
        let forcing: Vec<f64> = (0..dim)
            .map(|r| {
                if r < mats.n_investors() {
                    mats.multiplier_feedback[(r, r)] * traj.eta[r]
                } else {
                    0.0
                }
            })
            .collect();
        let nodes = grid.nodes();
        let (mut worst, mut scale): (f64, f64) = (0.0, 0.0);
        for k in 1..grid.len() - 1 {
            let (h0, h1) = (nodes[k] - nodes[k - 1], nodes[k + 1] - nodes[k]);
            let (prev, here, next) = (&traj.states[k - 1], &traj.states[k], &traj.states[k + 1]);
            for r in 0..dim {
                // second-order derivative on a possibly non-uniform stencil
                let derivative = (h0 * h0 * next[r] - h1 * h1 * prev[r]
                    + (h1 * h1 - h0 * h0) * here[r])
                    / (h0 * h1 * (h0 + h1));
                let drift: f64 = (0..dim).map(|c| mats.dynamics[(r, c)] * here[c]).sum();
                worst = worst.max((derivative - drift + forcing[r]).abs());
                scale = scale.max(derivative.abs());
            }
        }
        worst / scale.max(f64::MIN_POSITIVE)
    } else {
        0.0
    };

    Ok(IdentityReport {
        inverse_identity,
        coupling_identity,
        coupling_identity_relative,
        determinant_relative,
        ode_residual,
    })
}
