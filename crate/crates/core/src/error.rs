use thiserror::Error;

use crate::cell::CellSolution;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("oscillation {osc} of the reaction rate must be below the kernel mass {j_bar}")]
    OscillationViolation { osc: f64, j_bar: f64 },

    #[error("node {node} needs neighbor offset {offset:?} outside the truncated field")]
    HaloMissing { node: usize, offset: [i32; 2] },

    #[error("exponent {exponent} exceeds the cap {cap} at node {node}")]
    Overflow { node: usize, exponent: f64, cap: f64 },

    #[error("time step {dt} exceeds the stability bound {bound}")]
    CflViolation { dt: f64, bound: f64 },

    #[error("value {value} at node {node} left [0, 1] at step {step}")]
    RangeViolation { node: usize, step: usize, value: f64 },

    #[error("the field never crosses the requested level")]
    EmptyFront,

    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    MaxIterExceeded { iterations: usize, residual: f64, best: Option<Box<CellSolution>> },

    #[error("lambda sequence does not settle: successive gaps {gaps:?}")]
    NonConvergent { gaps: Vec<f64> },

    #[error("mu = {mu} must lie below Hbar(p) - margin = {bound}")]
    IllPosed { mu: f64, bound: f64 },

    #[error("level set {level} of the effective Hamiltonian reaches the table boundary")]
    LevelSetEscapesTable { level: f64 },

    #[error("slope {slope:?} at node {node} lies outside the tabulated range")]
    TableRangeExceeded { node: usize, slope: [f64; 2] },

    #[error("table: {0}")]
    Table(String),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
