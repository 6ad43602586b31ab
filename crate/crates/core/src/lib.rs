//! Equilibrium execution strategies for several investors trading one asset
//! under transient price impact.
//!
//! A [`GameSpec`] describes the horizon, the investors' liquidation targets
//! and transaction-cost levels, and the decay kernel of price impact. The
//! Nash equilibrium can be computed for any kernel of positive type with
//! [`solve_equilibrium_numeric`], or exactly for exponential decay with
//! [`solve_equilibrium_exponential`]. The [`scenarios`] module sets up the
//! liquidator-versus-opportunists game and sweeps its parameters.

pub mod cli;
pub mod closed_form;
pub mod error;
pub mod expm;
pub mod fredholm;
pub mod game_model;
pub mod grid;
pub mod kernels;
pub mod linalg;
pub mod scenarios;

pub use closed_form::{
    build_system_matrices, solve_equilibrium_exponential, verify_matrix_identities, SystemMatrices,
};
pub use error::{Error, Result};
pub use fredholm::{
    discretize_operator, fredholm_residual, solve_equilibrium_numeric, DiscreteOperator,
};
pub use game_model::{
    cost_components, execution_cost, execution_costs, inventory_path, price_path,
    EquilibriumSolution, GameSpec, InvestorSpec, SolverKind, StrategyProfile,
};
pub use grid::Grid;
pub use kernels::{check_positive_type, DecayKernel, PositiveTypeReport};
pub use scenarios::{
    analyze_scenario, build_scenario, sweep, FrontRunningScenario, ScenarioReport, SweepParam,
};
