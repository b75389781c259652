//! Numerical homogenization of KPP fronts with nonlocal dispersal in
//! stationary ergodic media.
//!
//! The crate covers random reaction-rate fields ([`media`]), discrete
//! nonlocal operators ([`nonlocal`]), the KPP time stepper ([`kpp`]), the
//! cell problem and effective Hamiltonian ([`cell`], [`table`]), the metric
//! problem ([`metric`]) and the effective variational inequality ([`hj`]).

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cell;
pub mod error;
pub mod grid;
pub mod hj;
pub mod kpp;
pub mod media;
pub mod metric;
pub mod nonlocal;
pub mod table;

pub use cell::{estimate_hbar, solve_cell, tabulate_hbar, CellOptions, CellSolution, HbarEstimate};
pub use error::{Error, Result};
pub use grid::{Grid, GridField, Point};
pub use hj::{front_indicator, predicted_speed, solve_vi, ObstacleState};
pub use kpp::{simulate, simulate_scaled, InitialCondition, ReactionSpec, Region, Trajectory};
pub use media::{CoefficientField, GeneratorKind, MediaContext};
pub use metric::{dual_formula, radial_limit, solve_metric, MetricLimit, MetricSolution};
pub use nonlocal::{build_weights, Kernel, KernelProfile, StencilWeights};
pub use table::HamiltonianTable;
