use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::RANK_THRESHOLD;
use crate::linalg::{numerical_rank, sym_eigen_desc};
use crate::rkhs::{Field, Grid, KernelSpec};

/// Spectrum of the discretized kernel operator `w·K_grid` (scalar part).
///
/// Vector-valued eigenfunctions are `ψ_{l,a} = u_l ⊗ e_a / √w`, so every
/// scalar eigenvalue has multiplicity 3.
#[derive(Debug, Clone)]
pub struct KernelSpectrum {
    grid: Arc<Grid>,
    kernel: KernelSpec,
    values: Vec<f64>,
    vectors: DMatrix<f64>,
    rank: usize,
}

impl KernelSpectrum {
    pub fn new(grid: Arc<Grid>, kernel: KernelSpec) -> Self {
        let op = kernel.gram(grid.points()) * grid.weight();
        let eig = sym_eigen_desc(&op);
        let rank = numerical_rank(&eig.values, RANK_THRESHOLD);
        Self {
            grid,
            kernel,
            values: eig.values,
            vectors: eig.vectors,
            rank,
        }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    /// All scalar eigenvalues, descending.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Euclidean-orthonormal scalar eigenvectors (columns), N×N.
    pub fn vectors(&self) -> &DMatrix<f64> {
        &self.vectors
    }

    /// Number of scalar eigenvalues above the rank threshold.
    pub fn rank(&self) -> usize {
        self.rank
    }

    /// Discarded eigenvalue mass relative to the retained mass.
    pub fn tail_mass_ratio(&self) -> f64 {
        let kept: f64 = self.values[..self.rank].iter().sum();
        let tail: f64 = self.values[self.rank..].iter().map(|v| v.max(0.0)).sum();
        if kept > 0.0 {
            tail / kept
        } else {
            f64::INFINITY
        }
    }

    /// L²-normalized scalar eigenfunction `u_l / √w` sampled on the grid.
    pub fn scalar_eigenfunction(&self, l: usize) -> DVector<f64> {
        self.vectors.column(l) / self.grid.weight().sqrt()
    }

    /// `U_r diag(g(s)) U_rᵀ f` applied to each axis column.
    fn spectral_apply(&self, f: &Field, g: impl Fn(f64) -> f64) -> Field {
        let u = self.vectors.columns(0, self.rank);
        let mut coords = u.transpose() * f;
        for l in 0..self.rank {
            let s = g(self.values[l]);
            coords.row_mut(l).scale_mut(s);
        }
        u * coords
    }

    /// `L_K f` on the full grid (no truncation).
    pub fn apply(&self, f: &Field) -> Field {
        self.kernel.gram(self.grid.points()) * f * self.grid.weight()
    }

    /// `L_K^{1/2} f` restricted to the retained span.
    pub fn sqrt_apply(&self, f: &Field) -> Field {
        self.spectral_apply(f, f64::sqrt)
    }

    /// `L_K^{-1/2} f` restricted to the retained span.
    pub fn inv_sqrt_apply(&self, f: &Field) -> Field {
        self.spectral_apply(f, |s| 1.0 / s.sqrt())
    }

    /// `L_K^{-1} f` restricted to the retained span.
    pub fn inv_apply(&self, f: &Field) -> Field {
        self.spectral_apply(f, |s| 1.0 / s)
    }

    /// Spectral coordinates `√(w/λ_k) ⟨f_a, u_k⟩` (rank × 3). Their Euclidean
    /// inner products give the truncated series
    /// `⟨f, g⟩_{H_K} = Σ_k λ_k⁻¹ ⟨f, ψ_k⟩_{L²} ⟨g, ψ_k⟩_{L²}`.
    pub fn hk_coordinates(&self, f: &Field) -> DMatrix<f64> {
        let w = self.grid.weight();
        let u = self.vectors.columns(0, self.rank);
        let mut coords = u.transpose() * f;
        for l in 0..self.rank {
            coords.row_mut(l).scale_mut((w / self.values[l]).sqrt());
        }
        coords
    }

    /// H_K inner product of two grid-sampled fields via the spectral series.
    pub fn hk_inner_fields(&self, f: &Field, g: &Field) -> f64 {
        self.hk_coordinates(f).dot(&self.hk_coordinates(g))
    }

    /// Gram matrix `⟨f_i, f_j⟩_{H_K}` via the spectral series.
    pub fn hk_gram(&self, fields: &[Field]) -> DMatrix<f64> {
        let coords: Vec<DMatrix<f64>> = fields.iter().map(|f| self.hk_coordinates(f)).collect();
        let r = fields.len();
        let mut g = DMatrix::zeros(r, r);
        for i in 0..r {
            for j in i..r {
                let v = coords[i].dot(&coords[j]);
                g[(i, j)] = v;
                g[(j, i)] = v;
            }
        }
        g
    }
}
