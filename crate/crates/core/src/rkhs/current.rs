use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, Dyn, Point3, Vector3};

use super::{Field, Grid, KernelSpec, RkhsError};
use crate::geometry::DescriptorSet;
use crate::textio::{TextDocument, TextWriter};

/// Discrete current `Σ_j K(x_j, ·) τ_j` of a triangulated surface.
#[derive(Debug, Clone)]
pub struct RawCurrent {
    pub label: String,
    centers: Vec<Point3<f64>>,
    vectors: Vec<Vector3<f64>>,
    kernel: KernelSpec,
}

impl RawCurrent {
    pub fn new(
        label: impl Into<String>,
        centers: Vec<Point3<f64>>,
        vectors: Vec<Vector3<f64>>,
        kernel: KernelSpec,
    ) -> Result<Self, RkhsError> {
        assert_eq!(centers.len(), vectors.len(), "one vector per center");
        if centers.is_empty() {
            return Err(RkhsError::EmptyCurrent);
        }
        for (i, (c, v)) in centers.iter().zip(&vectors).enumerate() {
            if !(c.iter().chain(v.iter()).all(|x| x.is_finite())) {
                return Err(RkhsError::NonFinite(i));
            }
        }
        Ok(Self {
            label: label.into(),
            centers,
            vectors,
            kernel,
        })
    }

    /// Atoms are the (center, area vector) pairs of the mesh, in face order.
    pub fn from_descriptors(set: &DescriptorSet, kernel: KernelSpec) -> Result<Self, RkhsError> {
        let centers = set.descriptors.iter().map(|d| d.center).collect();
        let vectors = set.descriptors.iter().map(|d| d.area_vector).collect();
        Self::new(set.label.clone(), centers, vectors, kernel)
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn with_kernel(&self, kernel: KernelSpec) -> Self {
        Self {
            kernel,
            ..self.clone()
        }
    }

    pub fn centers(&self) -> &[Point3<f64>] {
        &self.centers
    }

    pub fn vectors(&self) -> &[Vector3<f64>] {
        &self.vectors
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    /// `Σ_j k(x_j, y) τ_j`.
    pub fn evaluate(&self, y: &Point3<f64>) -> Vector3<f64> {
        self.centers
            .iter()
            .zip(&self.vectors)
            .fold(Vector3::zeros(), |acc, (c, v)| {
                acc + v * self.kernel.k(c, y)
            })
    }

    pub fn evaluate_at(&self, points: &[Point3<f64>]) -> Field {
        let mut out = DMatrix::zeros(points.len(), 3);
        for (i, p) in points.iter().enumerate() {
            let v = self.evaluate(p);
            for a in 0..3 {
                out[(i, a)] = v[a];
            }
        }
        out
    }
}

/// Grid-anchored representative `Σ_i K(a_i, ·) β_i` of a current.
#[derive(Debug, Clone)]
pub struct CurrentRepr {
    pub label: String,
    grid: Arc<Grid>,
    kernel: KernelSpec,
    beta: DMatrix<f64>,
    values: Field,
    pub epsilon: f64,
    /// Max over grid points of |φ̄(a_i) − φ(a_i)|.
    pub residual: f64,
    /// Content hash of the source mesh, when known.
    pub source: Option<String>,
}

impl CurrentRepr {
    /// Representative with given coefficients; grid values are `K_grid β`.
    pub fn from_beta(
        label: impl Into<String>,
        grid: Arc<Grid>,
        kernel: KernelSpec,
        beta: DMatrix<f64>,
    ) -> Result<Self, RkhsError> {
        if beta.shape() != (grid.len(), 3) {
            return Err(RkhsError::Shape {
                expected: (grid.len(), 3),
                found: beta.shape(),
            });
        }
        if let Some(i) = beta.iter().position(|x| !x.is_finite()) {
            return Err(RkhsError::NonFinite(i));
        }
        let values = kernel.gram(grid.points()) * &beta;
        Ok(Self {
            label: label.into(),
            grid,
            kernel,
            beta,
            values,
            epsilon: 0.0,
            residual: 0.0,
            source: None,
        })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    /// N×3 coefficient array β.
    pub fn beta(&self) -> &DMatrix<f64> {
        &self.beta
    }

    /// φ̄ evaluated on the grid (N×3).
    pub fn values(&self) -> &Field {
        &self.values
    }

    pub fn evaluate(&self, y: &Point3<f64>) -> Vector3<f64> {
        let mut out = Vector3::zeros();
        for (i, a) in self.grid.points().iter().enumerate() {
            let k = self.kernel.k(a, y);
            for ax in 0..3 {
                out[ax] += k * self.beta[(i, ax)];
            }
        }
        out
    }
}

/// Kernel matrix of a grid, factorized once and shared by every projection.
#[derive(Debug, Clone)]
pub struct GridKernel {
    grid: Arc<Grid>,
    kernel: KernelSpec,
    gram: DMatrix<f64>,
    ridge: f64,
    chol: Cholesky<f64, Dyn>,
}

impl GridKernel {
    /// Default ridge `1e-10 · trace(K_grid) / N`.
    pub fn default_ridge(_grid: &Grid) -> f64 {
        // trace / N is exactly 1 for a Gaussian Gram
        1e-10
    }

    pub fn new(grid: Arc<Grid>, kernel: KernelSpec, ridge: Option<f64>) -> Result<Self, RkhsError> {
        let ridge = ridge.unwrap_or_else(|| Self::default_ridge(&grid));
        if !(ridge >= 0.0) {
            return Err(RkhsError::NegativeRidge(ridge));
        }
        let gram = kernel.gram(grid.points());
        let n = gram.nrows();
        let mut a = gram.clone();
        for i in 0..n {
            a[(i, i)] += ridge;
        }
        let chol = a.clone().cholesky().ok_or(RkhsError::Singular { ridge })?;
        // Cholesky can succeed on numerically rank-deficient matrices; reject
        // pivots that have lost essentially all significance.
        let l = chol.l_dirty();
        for i in 0..n {
            if l[(i, i)] * l[(i, i)] < 1e-13 * a[(i, i)] {
                return Err(RkhsError::Singular { ridge });
            }
        }
        Ok(Self {
            grid,
            kernel,
            gram,
            ridge,
            chol,
        })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    pub fn ridge(&self) -> f64 {
        self.ridge
    }

    /// Solve `(K_grid + εI) β = values` column by column.
    pub fn solve(&self, values: &Field) -> DMatrix<f64> {
        self.chol.solve(values)
    }

    pub fn project(&self, current: &RawCurrent) -> Result<CurrentRepr, RkhsError> {
        self.kernel.check_same(current.kernel())?;
        let target = current.evaluate_at(self.grid.points());
        let mut repr = self.repr_from_values(current.label.clone(), &target)?;
        repr.residual = max_row_norm(&(repr.values() - &target));
        Ok(repr)
    }

    /// Representative whose grid values best match `values`.
    pub fn repr_from_values(
        &self,
        label: impl Into<String>,
        values: &Field,
    ) -> Result<CurrentRepr, RkhsError> {
        if values.shape() != (self.grid.len(), 3) {
            return Err(RkhsError::Shape {
                expected: (self.grid.len(), 3),
                found: values.shape(),
            });
        }
        let beta = self.solve(values);
        if let Some(i) = beta.iter().position(|x| !x.is_finite()) {
            return Err(RkhsError::NonFinite(i));
        }
        let fitted = &self.gram * &beta;
        let residual = max_row_norm(&(&fitted - values));
        Ok(CurrentRepr {
            label: label.into(),
            grid: self.grid.clone(),
            kernel: self.kernel,
            beta,
            values: fitted,
            epsilon: self.ridge,
            residual,
            source: None,
        })
    }
}

fn max_row_norm(m: &DMatrix<f64>) -> f64 {
    m.row_iter().map(|r| r.norm()).fold(0.0, f64::max)
}

/// Project a raw current onto the grid with ridge ε (default when `None`).
pub fn project_to_grid(
    current: &RawCurrent,
    grid: Arc<Grid>,
    ridge: Option<f64>,
) -> Result<CurrentRepr, RkhsError> {
    GridKernel::new(grid, *current.kernel(), ridge)?.project(current)
}

const REPR_KIND: &str = "current-repr";

/// Columnar text: header (grid hash, λ, ε, label, ...) then N rows of (a_i, β_i).
pub fn write_current_repr(repr: &CurrentRepr) -> String {
    let g = repr.grid();
    let (lo, hi) = g.domain();
    let mut w = TextWriter::new(REPR_KIND);
    w.key("label", &repr.label)
        .key("grid_hash", g.hash())
        .key_f64("lambda", repr.kernel.bandwidth())
        .key_f64("epsilon", repr.epsilon)
        .key_f64("residual", repr.residual)
        .key("source", repr.source.as_deref().unwrap_or("-"))
        .key_f64s("grid_lo", &lo)
        .key_f64s("grid_hi", &hi)
        .key_f64("grid_gap", g.gap())
        .key_f64("grid_weight", g.weight())
        .key(
            "grid_counts",
            format!("{} {} {}", g.counts()[0], g.counts()[1], g.counts()[2]),
        );
    let n = g.len();
    let mut atoms = DMatrix::zeros(n, 6);
    for (i, p) in g.points().iter().enumerate() {
        for a in 0..3 {
            atoms[(i, a)] = p[a];
            atoms[(i, 3 + a)] = repr.beta[(i, a)];
        }
    }
    w.matrix("atoms", &atoms);
    w.finish()
}

pub fn read_current_repr(text: &str) -> Result<CurrentRepr, RkhsError> {
    let doc = TextDocument::parse(text)?;
    doc.expect_kind(REPR_KIND)?;
    let lo = to3(doc.get_f64s("grid_lo")?)?;
    let hi = to3(doc.get_f64s("grid_hi")?)?;
    let counts_raw: Vec<usize> = doc
        .get("grid_counts")?
        .split_whitespace()
        .filter_map(|t| t.parse().ok())
        .collect();
    if counts_raw.len() != 3 {
        return Err(crate::textio::TextFormatError::MissingKey("grid_counts".into()).into());
    }
    let atoms = doc.matrix("atoms")?;
    if atoms.ncols() != 6 {
        return Err(RkhsError::Shape {
            expected: (atoms.nrows(), 6),
            found: atoms.shape(),
        });
    }
    let points: Vec<Point3<f64>> = atoms
        .row_iter()
        .map(|r| Point3::new(r[0], r[1], r[2]))
        .collect();
    let grid = Grid::assemble(
        lo,
        hi,
        doc.get_f64("grid_gap")?,
        [counts_raw[0], counts_raw[1], counts_raw[2]],
        points,
        doc.get_f64("grid_weight")?,
    );
    let expected_hash = doc.get("grid_hash")?;
    if grid.hash() != expected_hash {
        return Err(RkhsError::GridMismatch(
            expected_hash.to_string(),
            grid.hash().to_string(),
        ));
    }
    let beta = atoms.columns(3, 3).into_owned();
    let kernel = KernelSpec::new(doc.get_f64("lambda")?)?;
    let mut repr = CurrentRepr::from_beta(doc.get("label")?, Arc::new(grid), kernel, beta)?;
    repr.epsilon = doc.get_f64("epsilon")?;
    repr.residual = doc.get_f64("residual")?;
    repr.source = match doc.get("source")? {
        "-" => None,
        s => Some(s.to_string()),
    };
    Ok(repr)
}

fn to3(v: Vec<f64>) -> Result<[f64; 3], RkhsError> {
    v.try_into().map_err(|v: Vec<f64>| RkhsError::Shape {
        expected: (1, 3),
        found: (1, v.len()),
    })
}
