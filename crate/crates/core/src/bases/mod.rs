//! Truncated bases for grid-sampled fields.
//!
//! * **kernel**: `ρ_l = √λ_l ψ_l` from the eigen-decomposition of the
//!   discretized integral operator `L_K`; orthonormal in H_K.
//! * **covariance**: eigenfunctions `v_l` of the sample covariance operator
//!   `L_Γ`; orthonormal in L².
//! * **mixed**: `u_j = L_K^{1/2} w_j` with `(η_j, w_j)` eigenpairs of
//!   `G = L_K^{1/2} L_Γ L_K^{1/2}`; simultaneously diagonalizes both operators.
//!
//! Discretization: `L_K ↦ w·K_grid` (⊗ I₃), `L_Γ ↦ w·Ĉ` and
//! `⟨f, g⟩_{L²} ↦ w Σ_i f(a_i)·g(a_i)`. Inverses and square roots of `L_K`
//! act on the span of kernel eigenvalues above `1e-12 · λ_max` only.

mod build;
mod io;
mod spectrum;

use thiserror::Error;

pub use build::{
    basis_hk_gram, covariance_basis, covariance_basis_from_fields, kernel_basis, mixed_basis,
    mixed_basis_from_fields, BasisKind, BasisSet, CoefficientVector,
};
pub use io::{read_basis, write_basis};
pub use spectrum::KernelSpectrum;

/// Eigenvalues below this fraction of the largest are discarded.
pub const RANK_THRESHOLD: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum BasisError {
    #[error("truncation r = {r} exceeds the available rank {max}")]
    TruncationTooLarge { r: usize, max: usize },
    #[error("truncation order must be at least 1")]
    ZeroTruncation,
    #[error("sample size n ≥ 2 required, got {0}")]
    SampleTooSmall(usize),
    #[error("degenerate sample: all fields are identical")]
    DegenerateSample,
    #[error("kernel spectrum has numerical rank {rank} (vector rank {vector_rank}) below r = {r}; decrease λ or refine the grid")]
    KernelRankDeficient {
        r: usize,
        rank: usize,
        vector_rank: usize,
    },
    #[error("context mismatch: {0}")]
    Mismatch(String),
    #[error("unknown basis kind `{0}`")]
    UnknownKind(String),
    #[error(transparent)]
    Rkhs(#[from] crate::rkhs::RkhsError),
    #[error(transparent)]
    Format(#[from] crate::textio::TextFormatError),
}
