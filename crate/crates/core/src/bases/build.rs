use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{BasisError, KernelSpectrum, RANK_THRESHOLD};
use crate::linalg::{fix_sign, numerical_rank, sym_eigen_desc};
use crate::rkhs::{CurrentRepr, Field};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BasisKind {
    Kernel,
    Covariance,
    Mixed,
}

impl BasisKind {
    pub const ALL: [BasisKind; 3] = [BasisKind::Kernel, BasisKind::Covariance, BasisKind::Mixed];

    pub fn as_str(self) -> &'static str {
        match self {
            BasisKind::Kernel => "kernel",
            BasisKind::Covariance => "covariance",
            BasisKind::Mixed => "mixed",
        }
    }

    /// Default truncation order.
    pub fn default_r(self) -> usize {
        match self {
            BasisKind::Kernel => 7,
            BasisKind::Covariance => 8,
            BasisKind::Mixed => 7,
        }
    }

    /// Covariance and mixed bases depend on the sample.
    pub fn is_data_dependent(self) -> bool {
        self != BasisKind::Kernel
    }
}

impl fmt::Display for BasisKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BasisKind {
    type Err = BasisError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "kernel" => Ok(BasisKind::Kernel),
            "covariance" => Ok(BasisKind::Covariance),
            "mixed" => Ok(BasisKind::Mixed),
            other => Err(BasisError::UnknownKind(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientVector {
    pub label: String,
    pub kind: BasisKind,
    pub values: Vec<f64>,
}

/// A truncated basis with everything needed to extract coefficients and to
/// evaluate the linear predictor.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisSet {
    pub kind: BasisKind,
    pub(super) elements: Vec<Field>,
    /// Representers of the coefficient functionals (covariance: `v_l`,
    /// mixed: `L_K^{-1/2} w_l`); empty for the kernel basis.
    pub(super) functionals: Vec<Field>,
    pub(super) eigenvalues: Vec<f64>,
    pub(super) numerical_rank: usize,
    pub(super) hk_gram: DMatrix<f64>,
    pub(super) sample_mean: Option<Field>,
    pub(super) grid_hash: String,
    pub(super) grid_weight: f64,
    pub(super) lambda: f64,
    pub(super) tail_mass: f64,
}

impl BasisSet {
    pub fn r(&self) -> usize {
        self.elements.len()
    }

    pub fn elements(&self) -> &[Field] {
        &self.elements
    }

    pub fn functionals(&self) -> &[Field] {
        &self.functionals
    }

    /// Operator eigenvalues attached to the retained elements
    /// (λ_l for kernel, l_k for covariance, η_j for mixed).
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Numerical rank of the operator the basis was extracted from
    /// (vector-valued count).
    pub fn numerical_rank(&self) -> usize {
        self.numerical_rank
    }

    pub fn hk_gram(&self) -> &DMatrix<f64> {
        &self.hk_gram
    }

    pub fn sample_mean(&self) -> Option<&Field> {
        self.sample_mean.as_ref()
    }

    pub fn grid_hash(&self) -> &str {
        &self.grid_hash
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn tail_mass(&self) -> f64 {
        self.tail_mass
    }

    /// The H_K Gram relies on a spectral series whose discarded tail exceeds
    /// 1% of the retained mass.
    pub fn hk_gram_is_approximate(&self) -> bool {
        self.kind != BasisKind::Kernel && self.tail_mass > 0.01
    }

    /// First `r` elements (with the matching Gram block).
    pub fn truncated(&self, r: usize) -> Result<BasisSet, BasisError> {
        if r == 0 {
            return Err(BasisError::ZeroTruncation);
        }
        if r > self.r() {
            return Err(BasisError::TruncationTooLarge { r, max: self.r() });
        }
        let mut out = self.clone();
        out.elements.truncate(r);
        if !out.functionals.is_empty() {
            out.functionals.truncate(r);
        }
        out.eigenvalues.truncate(r);
        out.hk_gram = self.hk_gram.view((0, 0), (r, r)).into_owned();
        Ok(out)
    }

    fn check_context(&self, repr: &CurrentRepr) -> Result<(), BasisError> {
        if repr.grid().hash() != self.grid_hash {
            return Err(BasisError::Mismatch(format!(
                "current `{}` is on grid {} but the basis uses grid {}",
                repr.label,
                repr.grid().hash(),
                self.grid_hash
            )));
        }
        if repr.kernel().bandwidth().to_bits() != self.lambda.to_bits() {
            return Err(BasisError::Mismatch(format!(
                "current `{}` has λ = {} but the basis uses λ = {}",
                repr.label,
                repr.kernel().bandwidth(),
                self.lambda
            )));
        }
        Ok(())
    }

    /// Coefficients of a projected current:
    /// kernel `μ_l = Σ_i β_i · ρ_l(a_i)` (reproducing property),
    /// covariance `ς_l = ⟨φ̄ − mean, v_l⟩_{L²}`,
    /// mixed `ξ_l = ⟨φ̄ − mean, L_K^{-1/2} w_l⟩_{L²}`.
    pub fn coefficients(&self, repr: &CurrentRepr) -> Result<CoefficientVector, BasisError> {
        self.check_context(repr)?;
        let values = match self.kind {
            BasisKind::Kernel => self
                .elements
                .iter()
                .map(|rho| repr.beta().dot(rho))
                .collect(),
            _ => {
                let centered = match &self.sample_mean {
                    Some(m) => repr.values() - m,
                    None => repr.values().clone(),
                };
                self.project_centered(&centered)
            }
        };
        Ok(CoefficientVector {
            label: repr.label.clone(),
            kind: self.kind,
            values,
        })
    }

    /// Coefficients of a field that is already centered (no-op centering for
    /// the kernel basis, whose coefficients come from the spectral H_K series).
    pub fn project_centered(&self, f: &Field) -> Vec<f64> {
        match self.kind {
            BasisKind::Kernel => self
                .elements
                .iter()
                .zip(&self.eigenvalues)
                .map(|(rho, lam)| self.grid_weight / lam * rho.dot(f))
                .collect(),
            _ => self
                .functionals
                .iter()
                .map(|d| self.grid_weight * d.dot(f))
                .collect(),
        }
    }

    /// `Σ_l c_l e_l` over the first `c.len()` elements.
    pub fn expand(&self, c: &[f64]) -> Field {
        assert!(c.len() <= self.r(), "more coefficients than basis elements");
        let mut out = DMatrix::zeros(self.elements[0].nrows(), 3);
        for (e, &ci) in self.elements.iter().zip(c) {
            out += e * ci;
        }
        out
    }

    /// Expansion plus the sample mean (when the basis is centered).
    pub fn reconstruct(&self, c: &[f64]) -> Field {
        let mut out = self.expand(c);
        if let Some(m) = &self.sample_mean {
            out += m;
        }
        out
    }
}

/// H_K Gram of the basis elements (identity for the kernel basis).
pub fn basis_hk_gram(basis: &BasisSet) -> DMatrix<f64> {
    basis.hk_gram.clone()
}

fn flatten(f: &Field) -> DVector<f64> {
    DVector::from_column_slice(f.as_slice())
}

fn unflatten(v: &[f64], n_points: usize) -> Field {
    DMatrix::from_column_slice(n_points, 3, v)
}

/// Within clusters of (numerically) equal eigenvalues, rotate the
/// eigenvectors to diagonalize the axis operator so that axis-aligned
/// directions come first, in canonical axis order.
fn canonicalize_ties(values: &[f64], vectors: &mut DMatrix<f64>, n_points: usize) {
    if values.is_empty() {
        return;
    }
    let tol = 1e-9 * values[0].abs();
    let dim = vectors.nrows();
    let axis_of: Vec<f64> = (0..dim).map(|i| (i / n_points) as f64).collect();
    let mut start = 0;
    while start < values.len() {
        let mut end = start + 1;
        while end < values.len() && (values[end - 1] - values[end]).abs() <= tol {
            end += 1;
        }
        let m = end - start;
        if m > 1 {
            let q = vectors.columns(start, m).into_owned();
            let mut dq = q.clone();
            for (i, mut row) in dq.row_iter_mut().enumerate() {
                row.scale_mut(axis_of[i]);
            }
            let a = q.transpose() * dq;
            let eig = sym_eigen_desc(&a);
            // ascending axis index
            let mut rot = eig.vectors.clone();
            for j in 0..m {
                rot.set_column(j, &eig.vectors.column(m - 1 - j));
            }
            let rotated = q * rot;
            vectors.columns_mut(start, m).copy_from(&rotated);
        }
        start = end;
    }
}

/// Eigenpairs of `scale · XᵀX` for a sample matrix `X` (n × 3N, one
/// flattened field per row), truncated to the numerical rank. Uses the thin
/// SVD of `X` (dual form) when n < 3N.
fn sample_operator_eigen(
    rows: &DMatrix<f64>,
    scale: f64,
    n_points: usize,
) -> (Vec<f64>, DMatrix<f64>) {
    let (n, dim) = rows.shape();
    let (values, mut vectors) = if n < dim {
        let svd = rows.clone().svd(false, true);
        let vt = svd.v_t.expect("requested V");
        let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
        order.sort_by(|&a, &b| {
            svd.singular_values[b]
                .total_cmp(&svd.singular_values[a])
                .then(a.cmp(&b))
        });
        let values: Vec<f64> = order
            .iter()
            .map(|&i| scale * svd.singular_values[i] * svd.singular_values[i])
            .collect();
        let mut vecs = DMatrix::zeros(dim, order.len());
        for (dst, &src) in order.iter().enumerate() {
            vecs.set_column(dst, &vt.row(src).transpose());
        }
        (values, vecs)
    } else {
        let m = rows.transpose() * rows * scale;
        let eig = sym_eigen_desc(&m);
        (eig.values, eig.vectors)
    };
    let rank = numerical_rank(&values, RANK_THRESHOLD);
    let values = values[..rank].to_vec();
    vectors = vectors.columns(0, rank).into_owned();
    canonicalize_ties(&values, &mut vectors, n_points);
    for j in 0..rank {
        let mut col = vectors.column(j).into_owned();
        fix_sign(&mut col);
        vectors.set_column(j, &col);
    }
    (values, vectors)
}

struct CenteredSample {
    mean: Field,
    rows: DMatrix<f64>,
}

fn center_sample(fields: &[Field], n_points: usize) -> Result<CenteredSample, BasisError> {
    let n = fields.len();
    if n < 2 {
        return Err(BasisError::SampleTooSmall(n));
    }
    for f in fields {
        if f.shape() != (n_points, 3) {
            return Err(BasisError::Mismatch(format!(
                "field shape {:?}, grid expects ({n_points}, 3)",
                f.shape()
            )));
        }
    }
    let mut mean = DMatrix::zeros(n_points, 3);
    for f in fields {
        mean += f;
    }
    mean /= n as f64;
    let scale = fields.iter().map(|f| f.amax()).fold(0.0, f64::max);
    let mut rows = DMatrix::zeros(n, 3 * n_points);
    for (k, f) in fields.iter().enumerate() {
        rows.set_row(k, &flatten(&(f - &mean)).transpose());
    }
    if rows.amax() <= 1e-12 * scale {
        return Err(BasisError::DegenerateSample);
    }
    Ok(CenteredSample { mean, rows })
}

fn check_sample(
    sample: &[CurrentRepr],
    spectrum: &KernelSpectrum,
) -> Result<Vec<Field>, BasisError> {
    for s in sample {
        if s.grid().hash() != spectrum.grid().hash() {
            return Err(BasisError::Mismatch(format!(
                "current `{}` is not on the spectrum's grid",
                s.label
            )));
        }
        spectrum.kernel().check_same(s.kernel())?;
    }
    Ok(sample.iter().map(|s| s.values().clone()).collect())
}

fn check_r(r: usize) -> Result<(), BasisError> {
    if r == 0 {
        Err(BasisError::ZeroTruncation)
    } else {
        Ok(())
    }
}

/// Kernel-operator basis `ρ_l = √λ_l ψ_l`, ordered by (eigenvalue desc, axis).
pub fn kernel_basis(spectrum: &KernelSpectrum, r: usize) -> Result<BasisSet, BasisError> {
    check_r(r)?;
    let max = 3 * spectrum.rank();
    if r > max {
        return Err(BasisError::TruncationTooLarge { r, max });
    }
    let grid = spectrum.grid();
    let n = grid.len();
    let mut elements = Vec::with_capacity(r);
    let mut eigenvalues = Vec::with_capacity(r);
    for l in 0..r {
        let (q, axis) = (l / 3, l % 3);
        let lam = spectrum.values()[q];
        let psi = spectrum.scalar_eigenfunction(q);
        let mut rho = DMatrix::zeros(n, 3);
        rho.set_column(axis, &(psi * lam.sqrt()));
        elements.push(rho);
        eigenvalues.push(lam);
    }
    Ok(BasisSet {
        kind: BasisKind::Kernel,
        elements,
        functionals: Vec::new(),
        eigenvalues,
        numerical_rank: max,
        hk_gram: DMatrix::identity(r, r),
        sample_mean: None,
        grid_hash: grid.hash().to_string(),
        grid_weight: grid.weight(),
        lambda: spectrum.kernel().bandwidth(),
        tail_mass: spectrum.tail_mass_ratio(),
    })
}

pub fn covariance_basis(
    sample: &[CurrentRepr],
    spectrum: &KernelSpectrum,
    r: usize,
) -> Result<BasisSet, BasisError> {
    let fields = check_sample(sample, spectrum)?;
    covariance_basis_from_fields(&fields, spectrum, r)
}

/// Covariance-operator basis from grid-sampled fields. The empirical
/// covariance uses the `n − 1` denominator, so coefficient sample variances
/// equal the eigenvalues.
pub fn covariance_basis_from_fields(
    fields: &[Field],
    spectrum: &KernelSpectrum,
    r: usize,
) -> Result<BasisSet, BasisError> {
    check_r(r)?;
    let grid = spectrum.grid();
    let n_points = grid.len();
    let w = grid.weight();
    let sample = center_sample(fields, n_points)?;
    let scale = w / (fields.len() - 1) as f64;
    let (values, vectors) = sample_operator_eigen(&sample.rows, scale, n_points);
    if r > values.len() {
        return Err(BasisError::TruncationTooLarge {
            r,
            max: values.len(),
        });
    }
    let elements: Vec<Field> = (0..r)
        .map(|j| unflatten(vectors.column(j).as_slice(), n_points) / w.sqrt())
        .collect();
    let hk_gram = spectrum.hk_gram(&elements);
    Ok(BasisSet {
        kind: BasisKind::Covariance,
        functionals: elements.clone(),
        elements,
        eigenvalues: values[..r].to_vec(),
        numerical_rank: values.len(),
        hk_gram,
        sample_mean: Some(sample.mean),
        grid_hash: grid.hash().to_string(),
        grid_weight: w,
        lambda: spectrum.kernel().bandwidth(),
        tail_mass: spectrum.tail_mass_ratio(),
    })
}

pub fn mixed_basis(
    sample: &[CurrentRepr],
    spectrum: &KernelSpectrum,
    r: usize,
) -> Result<BasisSet, BasisError> {
    let fields = check_sample(sample, spectrum)?;
    mixed_basis_from_fields(&fields, spectrum, r)
}

/// Mixed basis from grid-sampled fields: eigenpairs `(η_j, w_j)` of
/// `G = S^{1/2} Ĉ S^{1/2}`, elements `u_j = S^{1/2} w_j`, coefficient
/// representers `S^{-1/2} w_j`, where `S` is the discretized `L_K`.
pub fn mixed_basis_from_fields(
    fields: &[Field],
    spectrum: &KernelSpectrum,
    r: usize,
) -> Result<BasisSet, BasisError> {
    check_r(r)?;
    let vector_rank = 3 * spectrum.rank();
    if vector_rank < r {
        return Err(BasisError::KernelRankDeficient {
            r,
            rank: spectrum.rank(),
            vector_rank,
        });
    }
    let grid = spectrum.grid();
    let n_points = grid.len();
    let w = grid.weight();
    let sample = center_sample(fields, n_points)?;
    let mut rows = DMatrix::zeros(sample.rows.nrows(), sample.rows.ncols());
    for k in 0..rows.nrows() {
        let centered = unflatten(sample.rows.row(k).transpose().as_slice(), n_points);
        rows.set_row(k, &flatten(&spectrum.sqrt_apply(&centered)).transpose());
    }
    let scale = w / (fields.len() - 1) as f64;
    let (values, vectors) = sample_operator_eigen(&rows, scale, n_points);
    if r > values.len() {
        return Err(BasisError::TruncationTooLarge {
            r,
            max: values.len(),
        });
    }
    let mut elements = Vec::with_capacity(r);
    let mut functionals = Vec::with_capacity(r);
    for j in 0..r {
        let wj = unflatten(vectors.column(j).as_slice(), n_points) / w.sqrt();
        elements.push(spectrum.sqrt_apply(&wj));
        functionals.push(spectrum.inv_sqrt_apply(&wj));
    }
    let hk_gram = spectrum.hk_gram(&elements);
    Ok(BasisSet {
        kind: BasisKind::Mixed,
        elements,
        functionals,
        eigenvalues: values[..r].to_vec(),
        numerical_rank: values.len(),
        hk_gram,
        sample_mean: Some(sample.mean),
        grid_hash: grid.hash().to_string(),
        grid_weight: w,
        lambda: spectrum.kernel().bandwidth(),
        tail_mass: spectrum.tail_mass_ratio(),
    })
}
