use nalgebra::Point3;
use thiserror::Error;

use crate::hashing::ContentHasher;

#[derive(Debug, Error)]
pub enum GridError {
    #[error("axis {axis}: empty or inverted interval [{lo}, {hi}]")]
    EmptyAxis { axis: usize, lo: f64, hi: f64 },
    #[error("grid gap must be positive and finite, got {0}")]
    InvalidGap(f64),
    #[error("grid weight must be positive and finite, got {0}")]
    InvalidWeight(f64),
    #[error("grid has no points")]
    Empty,
    #[error("grid points {0} and {1} coincide")]
    Duplicate(usize, usize),
}

/// Regular evaluation grid over an axis-aligned box.
///
/// Points sit at cell centers `lo + (m + ½)Δ` for `m = 0..ceil(L/Δ)` on each
/// axis and are ordered lexicographically by (x, y, z). The quadrature weight
/// is `Δ³` for every point unless overridden.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    lo: [f64; 3],
    hi: [f64; 3],
    gap: f64,
    counts: [usize; 3],
    points: Vec<Point3<f64>>,
    weight: f64,
    hash: String,
}

/// `ceil(len / gap)`, treating ratios within 1e-9 of an integer as exact.
fn cells_per_axis(len: f64, gap: f64) -> usize {
    let ratio = len / gap;
    let nearest = ratio.round();
    let n = if (ratio - nearest).abs() <= 1e-9 * ratio.max(1.0) {
        nearest
    } else {
        ratio.ceil()
    };
    (n as usize).max(1)
}

impl Grid {
    pub fn build(lo: [f64; 3], hi: [f64; 3], gap: f64) -> Result<Self, GridError> {
        if !(gap > 0.0 && gap.is_finite()) {
            return Err(GridError::InvalidGap(gap));
        }
        for axis in 0..3 {
            if !(hi[axis] > lo[axis]) || !lo[axis].is_finite() || !hi[axis].is_finite() {
                return Err(GridError::EmptyAxis {
                    axis,
                    lo: lo[axis],
                    hi: hi[axis],
                });
            }
        }
        let counts = [0, 1, 2].map(|a| cells_per_axis(hi[a] - lo[a], gap));
        let coord = |axis: usize, m: usize| lo[axis] + (m as f64 + 0.5) * gap;
        let mut points = Vec::with_capacity(counts.iter().product());
        for i in 0..counts[0] {
            for j in 0..counts[1] {
                for k in 0..counts[2] {
                    points.push(Point3::new(coord(0, i), coord(1, j), coord(2, k)));
                }
            }
        }
        Ok(Self::assemble(lo, hi, gap, counts, points, gap * gap * gap))
    }

    /// Grid from explicit points (used for tests and custom layouts). The
    /// bounding box is taken from the points; `gap` is recorded as 0.
    pub fn from_points(points: Vec<Point3<f64>>, weight: f64) -> Result<Self, GridError> {
        if points.is_empty() {
            return Err(GridError::Empty);
        }
        if !(weight > 0.0 && weight.is_finite()) {
            return Err(GridError::InvalidWeight(weight));
        }
        for i in 0..points.len() {
            for j in (i + 1)..points.len() {
                if points[i] == points[j] {
                    return Err(GridError::Duplicate(i, j));
                }
            }
        }
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for p in &points {
            for a in 0..3 {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        let n = points.len();
        Ok(Self::assemble(lo, hi, 0.0, [n, 1, 1], points, weight))
    }

    pub(crate) fn assemble(
        lo: [f64; 3],
        hi: [f64; 3],
        gap: f64,
        counts: [usize; 3],
        points: Vec<Point3<f64>>,
        weight: f64,
    ) -> Self {
        let mut h = ContentHasher::new();
        for a in 0..3 {
            h.f64(lo[a]).f64(hi[a]).u64(counts[a] as u64);
        }
        h.f64(gap).f64(weight).u64(points.len() as u64);
        for p in &points {
            h.f64(p.x).f64(p.y).f64(p.z);
        }
        let hash = h.finish_hex();
        Self {
            lo,
            hi,
            gap,
            counts,
            points,
            weight,
            hash,
        }
    }

    /// Same points with a different quadrature weight.
    pub fn with_weight(&self, weight: f64) -> Result<Self, GridError> {
        if !(weight > 0.0 && weight.is_finite()) {
            return Err(GridError::InvalidWeight(weight));
        }
        Ok(Self::assemble(
            self.lo,
            self.hi,
            self.gap,
            self.counts,
            self.points.clone(),
            weight,
        ))
    }

    pub fn points(&self) -> &[Point3<f64>] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn weight(&self) -> f64 {
        self.weight
    }

    pub fn gap(&self) -> f64 {
        self.gap
    }

    pub fn counts(&self) -> [usize; 3] {
        self.counts
    }

    pub fn domain(&self) -> ([f64; 3], [f64; 3]) {
        (self.lo, self.hi)
    }

    /// Stable content hash (hex) identifying this grid in serialized artifacts.
    pub fn hash(&self) -> &str {
        &self.hash
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_cube_half_gap() {
        let g = Grid::build([0.0; 3], [1.0; 3], 0.5).unwrap();
        assert_eq!(g.len(), 8);
        assert_eq!(g.weight(), 0.125);
        assert_eq!(g.points()[0], Point3::new(0.25, 0.25, 0.25));
        assert_eq!(g.points()[1], Point3::new(0.25, 0.25, 0.75));
    }

    #[test]
    fn rectangular_box() {
        let g = Grid::build([0.0; 3], [1.0, 2.0, 3.0], 1.0).unwrap();
        assert_eq!(g.counts(), [1, 2, 3]);
        assert_eq!(g.len(), 6);
    }

    #[test]
    fn near_integer_ratios_do_not_add_a_cell() {
        let g = Grid::build([0.0; 3], [1.1, 0.3, 0.7], 0.1).unwrap();
        assert_eq!(g.counts(), [11, 3, 7]);
    }

    #[test]
    fn points_are_lexicographic_and_inside() {
        let g = Grid::build([-1.0, 0.0, 2.0], [1.0, 1.5, 3.0], 0.4).unwrap();
        for w in g.points().windows(2) {
            let a = [w[0].x, w[0].y, w[0].z];
            let b = [w[1].x, w[1].y, w[1].z];
            assert!(a < b);
        }
        // the last cell center may overhang the box by at most half a gap
        for p in g.points() {
            assert!(p.x > -1.0 && p.x < 1.0 + 0.2);
        }
    }

    #[test]
    fn paper_scale_domain_reports_count() {
        let g = Grid::build([-472.73, -824.72, -156.70], [487.27, 735.28, 203.30], 200.0).unwrap();
        assert_eq!(g.counts(), [5, 8, 2]);
        assert_eq!(g.len(), 80);
    }

    #[test]
    fn invalid_inputs() {
        assert!(matches!(
            Grid::build([0.0; 3], [1.0; 3], 0.0),
            Err(GridError::InvalidGap(_))
        ));
        assert!(matches!(
            Grid::build([0.0; 3], [1.0, -1.0, 1.0], 0.5),
            Err(GridError::EmptyAxis { axis: 1, .. })
        ));
        assert!(Grid::from_points(vec![Point3::origin(), Point3::origin()], 1.0).is_err());
    }

    #[test]
    fn hash_depends_on_weight() {
        let g = Grid::build([0.0; 3], [1.0; 3], 0.5).unwrap();
        let h = g.with_weight(1.0).unwrap();
        assert_ne!(g.hash(), h.hash());
        assert_eq!(
            g.hash(),
            Grid::build([0.0; 3], [1.0; 3], 0.5).unwrap().hash()
        );
    }
}
