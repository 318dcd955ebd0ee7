//! Dense symmetric eigen-solvers with deterministic ordering and sign.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// Eigen-decomposition of a symmetric matrix sorted by descending eigenvalue.
/// Columns of `vectors` are orthonormal in the Euclidean inner product.
#[derive(Debug, Clone)]
pub struct SortedEigen {
    pub values: Vec<f64>,
    pub vectors: DMatrix<f64>,
}

/// Symmetrize, decompose, sort descending and fix each eigenvector's sign so
/// that its largest-magnitude entry is positive.
pub fn sym_eigen_desc(m: &DMatrix<f64>) -> SortedEigen {
    let n = m.nrows();
    assert_eq!(n, m.ncols(), "matrix must be square");
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .total_cmp(&eig.eigenvalues[a])
            .then(a.cmp(&b))
    });
    let mut vectors = DMatrix::zeros(n, n);
    let mut values = Vec::with_capacity(n);
    for (dst, &src) in order.iter().enumerate() {
        values.push(eig.eigenvalues[src]);
        let mut col = eig.eigenvectors.column(src).into_owned();
        fix_sign(&mut col);
        vectors.set_column(dst, &col);
    }
    SortedEigen { values, vectors }
}

/// Flip `v` so that its largest-magnitude entry (first on ties) is positive.
pub fn fix_sign(v: &mut DVector<f64>) {
    let mut best = 0usize;
    let mut best_abs = -1.0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > best_abs * (1.0 + 1e-12) {
            best_abs = x.abs();
            best = i;
        }
    }
    if !v.is_empty() && v[best] < 0.0 {
        v.neg_mut();
    }
}

/// Number of leading eigenvalues above `rel_tol * max(values[0], 0)`.
pub fn numerical_rank(values: &[f64], rel_tol: f64) -> usize {
    let top = values.first().copied().unwrap_or(0.0);
    if top <= 0.0 {
        return 0;
    }
    values.iter().take_while(|&&v| v > rel_tol * top).count()
}

/// Sines of the principal angles between the column spans of `a` and `b`
/// (both assumed to have full column rank), in descending order.
pub fn principal_angle_sines(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Vec<f64> {
    let qa = a.clone().qr().q();
    let qb = b.clone().qr().q();
    let resid = &qb - &qa * (qa.transpose() * &qb);
    let sv = resid.svd(false, false).singular_values;
    let mut s: Vec<f64> = sv.iter().copied().collect();
    s.sort_by(|x, y| y.total_cmp(x));
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sorted_descending_with_positive_dominant_entry() {
        let m = DMatrix::from_row_slice(3, 3, &[2.0, -1.0, 0.0, -1.0, 2.0, -1.0, 0.0, -1.0, 2.0]);
        let e = sym_eigen_desc(&m);
        assert!(e.values[0] >= e.values[1] && e.values[1] >= e.values[2]);
        for j in 0..3 {
            let col = e.vectors.column(j);
            let imax = col.iamax();
            assert!(col[imax] > 0.0);
            let mv = &m * col;
            for i in 0..3 {
                assert!((mv[i] - e.values[j] * col[i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn identical_spans_have_zero_angles() {
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        let b = DMatrix::from_row_slice(3, 2, &[1.0, 1.0, 1.0, -1.0, 0.0, 0.0]);
        assert!(principal_angle_sines(&a, &b)[0] < 1e-14);
        let c = DMatrix::from_row_slice(3, 1, &[0.0, 0.0, 1.0]);
        let s = principal_angle_sines(&a.columns(0, 1).into_owned(), &c);
        assert!((s[0] - 1.0).abs() < 1e-14);
    }
}
