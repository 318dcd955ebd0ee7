use nalgebra::{DMatrix, Matrix3, Point3};

use super::RkhsError;

/// Scalar Gaussian kernel `k(x, y) = exp(-|x - y|² / λ²)`, lifted to
/// `K = k · I₃`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSpec {
    bandwidth: f64,
}

impl KernelSpec {
    pub fn new(bandwidth: f64) -> Result<Self, RkhsError> {
        if bandwidth > 0.0 && bandwidth.is_finite() {
            Ok(Self { bandwidth })
        } else {
            Err(RkhsError::InvalidBandwidth(bandwidth))
        }
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    #[inline]
    pub fn k(&self, x: &Point3<f64>, y: &Point3<f64>) -> f64 {
        let d2 = (x - y).norm_squared();
        (-d2 / (self.bandwidth * self.bandwidth)).exp()
    }

    /// Matrix-valued kernel `K(x, y)`.
    pub fn eval(&self, x: &Point3<f64>, y: &Point3<f64>) -> Matrix3<f64> {
        Matrix3::identity() * self.k(x, y)
    }

    /// Scalar Gram matrix over `points`; each unordered pair is evaluated once
    /// so the result is exactly symmetric.
    pub fn gram(&self, points: &[Point3<f64>]) -> DMatrix<f64> {
        let n = points.len();
        let mut g = DMatrix::zeros(n, n);
        for i in 0..n {
            g[(i, i)] = 1.0;
            for j in (i + 1)..n {
                let v = self.k(&points[i], &points[j]);
                g[(i, j)] = v;
                g[(j, i)] = v;
            }
        }
        g
    }

    /// `cross[(i, j)] = k(rows[i], cols[j])`.
    pub fn cross(&self, rows: &[Point3<f64>], cols: &[Point3<f64>]) -> DMatrix<f64> {
        DMatrix::from_fn(rows.len(), cols.len(), |i, j| self.k(&rows[i], &cols[j]))
    }

    pub fn check_same(&self, other: &KernelSpec) -> Result<(), RkhsError> {
        if self.bandwidth.to_bits() == other.bandwidth.to_bits() {
            Ok(())
        } else {
            Err(RkhsError::KernelMismatch(self.bandwidth, other.bandwidth))
        }
    }
}
