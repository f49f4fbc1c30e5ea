//! Numerical core for two-scale (slow/fast) optimal control.
//!
//! The crate covers the control model, box grids, a semi-Lagrangian solver for the
//! perturbed value function, the cell problem (critical value, intrinsic distance,
//! weak KAM certificates) and the effective limit equation.
//!
//! Builds with `no_std` + `alloc`. The `parallel` feature pulls in `std` and rayon
//! and spreads node-wise work over a thread pool; results are identical with and
//! without it.
#![cfg_attr(not(feature = "std"), no_std)]
// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

extern crate alloc;

pub mod audit;
pub mod cell;
pub mod critical;
pub mod effective;
mod error;
pub mod expr;
pub mod graph;
pub mod grid;
pub mod hjb;
pub mod lp;
mod par;
pub mod problem;
pub mod sublevel;
pub mod viscosity;

pub use audit::{check_assumptions, AssumptionReport};
pub use cell::{default_y_halfwidth, freeze, hamiltonian_h0, CellInstance};
pub use critical::{
    bounded_subsolution, build_supersolution, classify_level, critical_value, weighted_distance,
    CriticalOptions, CriticalResult, Subsolution, Supersolution,
};
pub use effective::{
    hopf_lax_oracle, solve_limit, table_diagnostics, tabulate_effective, EffectiveTable, LimitSolution,
    TableDiagnostics,
};
pub use error::Error;
pub use graph::{build_metric_graph, distance_field, min_cycle_length, CycleOutcome, MetricGraph};
pub use grid::{gradient, interpolate, make_box_grid, BoxGrid, Field};
pub use hjb::{
    simulate_trajectory, solve_value_function, steer_fast, y_oscillation, SteerOptions, SteerResult,
    Trajectory, ValueFunction,
};
pub use problem::{bar_u0, builtin_problem, ControlProblem, ControlSet, Model};
pub use sublevel::{support_sigma, SupportError};
pub use viscosity::{verify_viscosity, Mode, VerifyReport};

pub type Result<T> = core::result::Result<T, Error>;
