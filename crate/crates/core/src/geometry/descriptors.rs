use nalgebra::{Point3, Vector3};

use super::mesh::TriMesh;

/// Center of mass and area vector of one oriented triangle.
///
/// `area_vector = (b - a) x (c - a)`: normal to the triangle with magnitude
/// equal to **twice** its area. This convention is used everywhere in the
/// crate; only consistency matters for the downstream inner products.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TriangleDescriptor {
    pub center: Point3<f64>,
    pub area_vector: Vector3<f64>,
}

#[derive(Debug, Clone)]
pub struct DescriptorSet {
    pub label: String,
    pub descriptors: Vec<TriangleDescriptor>,
    /// Count of zero-area (degenerate) triangles, kept with a zero area vector.
    pub degenerate: usize,
}

pub fn triangle_descriptors(mesh: &TriMesh) -> DescriptorSet {
    let v = mesh.vertices();
    let mut degenerate = 0;
    let descriptors = mesh
        .triangles()
        .iter()
        .map(|&[i, j, k]| {
            let (a, b, c) = (v[i], v[j], v[k]);
            let center = Point3::from((a.coords + b.coords + c.coords) / 3.0);
            let area_vector = (b - a).cross(&(c - a));
            if area_vector == Vector3::zeros() {
                degenerate += 1;
            }
            TriangleDescriptor {
                center,
                area_vector,
            }
        })
        .collect();
    if degenerate > 0 {
        log::warn!("mesh `{}`: {degenerate} degenerate triangle(s)", mesh.label);
    }
    DescriptorSet {
        label: mesh.label.clone(),
        descriptors,
        degenerate,
    }
}

/// Σ τ_j together with Σ |τ_j| (the total area mass, in twice-area units).
pub fn area_vector_sum(set: &[TriangleDescriptor]) -> (Vector3<f64>, f64) {
    set.iter().fold((Vector3::zeros(), 0.0), |(s, m), d| {
        (s + d.area_vector, m + d.area_vector.norm())
    })
}

/// Median distance over all unordered pairs of triangle centers.
pub fn median_pairwise_distance(set: &[TriangleDescriptor]) -> Option<f64> {
    let n = set.len();
    if n < 2 {
        return None;
    }
    let mut d = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            d.push((set[i].center - set[j].center).norm());
        }
    }
    let mid = d.len() / 2;
    let (_, m, _) = d.select_nth_unstable_by(mid, f64::total_cmp);
    let upper = *m;
    if d.len() % 2 == 1 {
        Some(upper)
    } else {
        let lower = d[..mid].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Some(0.5 * (lower + upper))
    }
}
