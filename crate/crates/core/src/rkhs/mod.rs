//! Gaussian matrix-valued kernel `K(x, y) = exp(-|x - y|² / λ²) I₃`, the
//! evaluation grid, discrete currents and their grid representatives.
//!
//! Because `K` is a scalar kernel times the identity, every vector-valued
//! operator on the grid factors as (N×N scalar matrix) ⊗ I₃. Grid-sampled
//! vector fields are stored as N×3 matrices and the scalar matrix acts on each
//! column independently.

mod current;
mod grid;
mod inner;
mod kernel;

use nalgebra::DMatrix;
use thiserror::Error;

pub use current::{
    project_to_grid, read_current_repr, write_current_repr, CurrentRepr, GridKernel, RawCurrent,
};
pub use grid::{Grid, GridError};
pub use inner::{hk_inner, l2_inner, KernelExpansion, SingleAtom};
pub use kernel::KernelSpec;

/// Grid-sampled vector field: row `i` is the value at grid point `a_i`.
pub type Field = DMatrix<f64>;

#[derive(Debug, Error)]
pub enum RkhsError {
    #[error("kernel bandwidth must be positive and finite, got {0}")]
    InvalidBandwidth(f64),
    #[error("kernel mismatch: bandwidth {0} vs {1}")]
    KernelMismatch(f64, f64),
    #[error("shape mismatch: expected {expected:?}, found {found:?}")]
    Shape {
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error("current has no atoms")]
    EmptyCurrent,
    #[error("non-finite atom at index {0}")]
    NonFinite(usize),
    #[error("grid kernel system is numerically singular (ridge {ridge}); increase the ridge or change the bandwidth")]
    Singular { ridge: f64 },
    #[error("negative ridge {0}")]
    NegativeRidge(f64),
    #[error("grid mismatch: {0} vs {1}")]
    GridMismatch(String, String),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Format(#[from] crate::textio::TextFormatError),
}
