//! BasisSet text serialization.

use super::{BasisError, BasisKind, BasisSet};
use crate::textio::{TextDocument, TextWriter};

const BASIS_KIND: &str = "basis-set";

pub fn write_basis(b: &BasisSet) -> String {
    let mut w = TextWriter::new(BASIS_KIND);
    w.key("kind", b.kind)
        .key("r", b.r())
        .key("grid_hash", &b.grid_hash)
        .key_f64("grid_weight", b.grid_weight)
        .key_f64("lambda", b.lambda)
        .key_f64("rank_threshold", super::RANK_THRESHOLD)
        .key("numerical_rank", b.numerical_rank)
        .key_f64("tail_mass", b.tail_mass)
        .key_f64s("eigenvalues", &b.eigenvalues);
    for (l, e) in b.elements.iter().enumerate() {
        w.matrix(&format!("element_{l}"), e);
    }
    if b.kind == BasisKind::Mixed {
        for (l, d) in b.functionals.iter().enumerate() {
            w.matrix(&format!("functional_{l}"), d);
        }
    }
    if let Some(m) = &b.sample_mean {
        w.matrix("sample_mean", m);
    }
    w.matrix("hk_gram", &b.hk_gram);
    w.finish()
}

pub fn read_basis(text: &str) -> Result<BasisSet, BasisError> {
    let doc = TextDocument::parse(text)?;
    doc.expect_kind(BASIS_KIND)?;
    let kind: BasisKind = doc.get("kind")?.parse()?;
    let r = doc.get_usize("r")?;
    let elements = (0..r)
        .map(|l| doc.matrix(&format!("element_{l}")).cloned())
        .collect::<Result<Vec<_>, _>>()?;
    let functionals = match kind {
        BasisKind::Kernel => Vec::new(),
        BasisKind::Covariance => elements.clone(),
        BasisKind::Mixed => (0..r)
            .map(|l| doc.matrix(&format!("functional_{l}")).cloned())
            .collect::<Result<Vec<_>, _>>()?,
    };
    let sample_mean = if doc.has_matrix("sample_mean") {
        Some(doc.matrix("sample_mean")?.clone())
    } else {
        None
    };
    let eigenvalues = doc.get_f64s("eigenvalues")?;
    if eigenvalues.len() != r {
        return Err(BasisError::Mismatch(format!(
            "{} eigenvalues for r = {r}",
            eigenvalues.len()
        )));
    }
    Ok(BasisSet {
        kind,
        elements,
        functionals,
        eigenvalues,
        numerical_rank: doc.get_usize("numerical_rank")?,
        hk_gram: doc.matrix("hk_gram")?.clone(),
        sample_mean,
        grid_hash: doc.get("grid_hash")?.to_string(),
        grid_weight: doc.get_f64("grid_weight")?,
        lambda: doc.get_f64("lambda")?,
        tail_mass: doc.get_f64("tail_mass")?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bases::{kernel_basis, mixed_basis_from_fields, KernelSpectrum};
    use crate::rkhs::{Grid, KernelSpec};
    use nalgebra::DMatrix;
    use std::sync::Arc;

    #[test]
    fn round_trip_is_exact() {
        let grid = Arc::new(Grid::build([0.0; 3], [2.0, 3.0, 1.0], 1.0).unwrap());
        let sp = KernelSpectrum::new(grid.clone(), KernelSpec::new(0.9).unwrap());
        let n = grid.len();
        let fields: Vec<_> = (0..5)
            .map(|s| {
                DMatrix::from_fn(n, 3, |i, a| {
                    ((i as f64 + 1.0) * (a as f64 + 0.4 * s as f64)).sin()
                })
            })
            .collect();
        for b in [
            kernel_basis(&sp, 4).unwrap(),
            mixed_basis_from_fields(&fields, &sp, 3).unwrap(),
        ] {
            let text = write_basis(&b);
            let back = read_basis(&text).unwrap();
            assert_eq!(back, b);
            assert_eq!(write_basis(&back), text);
        }
    }
}
