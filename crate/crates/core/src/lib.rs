//! Lagrangian compressible gravity water waves on a periodic slab.
//!
//! The crate evolves the tangentially smoothed approximate system, builds the same
//! solution by Picard iteration of its linearisation, and measures the energies,
//! identities and monitored conditions that control both constructions.

pub mod correction;
pub mod diagnostics;
pub mod dynamics;
pub mod eos;
pub mod geometry;
pub mod grid;
pub mod harmonic;
pub mod initdata;
pub mod io;
pub mod picard;
pub mod verify;

pub use grid::{BoundaryField, MatrixField, ScalarField, SlabGrid, VectorField};

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("flow map is singular: det = {det:.4e} at node {node:?} (floor 0.1)")]
    SingularMap { det: f64, node: (usize, usize, usize) },
    #[error("inadmissible enthalpy h = {h:.6e} at node {node:?} (1 + (gamma-1) h <= 0)")]
    InadmissibleEnthalpy { h: f64, node: (usize, usize, usize) },
    #[error("harmonic extension needs mean-free boundary data, mean = {0:.3e}")]
    NonZeroMean(f64),
    #[error("{what} = {value:.6e} exceeds ceiling {ceiling:.6e}")]
    Blowup { what: String, value: f64, ceiling: f64 },
    #[error("time step {dt:.4e} exceeds stability limit {limit:.4e}")]
    CflViolation { dt: f64, limit: f64 },
    #[error("no contraction: difference energy failed to decrease for 3 consecutive iterations (last n = {iter})")]
    NoContraction { iter: usize },
    #[error("history holds {have} samples, {need} needed")]
    InsufficientHistory { need: usize, have: usize },
    #[error("Taylor sign condition violated: min(-d3 h) = {min:.6e} < {bound:.6e}")]
    TaylorViolated { min: f64, bound: f64 },
    #[error("grid mismatch between compared runs")]
    GridMismatch,
    #[error("precondition violated: {0}")]
    PreconditionViolated(String),
    #[error("config line {line}: {msg}")]
    Config { line: usize, msg: String },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
