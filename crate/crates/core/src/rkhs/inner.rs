use nalgebra::{Point3, Vector3};

use super::{CurrentRepr, Field, Grid, KernelSpec, RawCurrent, RkhsError};

/// A finite kernel expansion `Σ_j K(c_j, ·) v_j`.
pub trait KernelExpansion {
    fn kernel(&self) -> &KernelSpec;
    fn num_atoms(&self) -> usize;
    fn atom(&self, j: usize) -> (Point3<f64>, Vector3<f64>);
}

impl KernelExpansion for RawCurrent {
    fn kernel(&self) -> &KernelSpec {
        RawCurrent::kernel(self)
    }
    fn num_atoms(&self) -> usize {
        self.len()
    }
    fn atom(&self, j: usize) -> (Point3<f64>, Vector3<f64>) {
        (self.centers()[j], self.vectors()[j])
    }
}

impl KernelExpansion for CurrentRepr {
    fn kernel(&self) -> &KernelSpec {
        CurrentRepr::kernel(self)
    }
    fn num_atoms(&self) -> usize {
        self.grid().len()
    }
    fn atom(&self, j: usize) -> (Point3<f64>, Vector3<f64>) {
        let b = self.beta();
        (
            self.grid().points()[j],
            Vector3::new(b[(j, 0)], b[(j, 1)], b[(j, 2)]),
        )
    }
}

/// `K(center, ·) vector`.
#[derive(Debug, Clone, Copy)]
pub struct SingleAtom {
    pub center: Point3<f64>,
    pub vector: Vector3<f64>,
    pub kernel: KernelSpec,
}

impl KernelExpansion for SingleAtom {
    fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }
    fn num_atoms(&self) -> usize {
        1
    }
    fn atom(&self, _j: usize) -> (Point3<f64>, Vector3<f64>) {
        (self.center, self.vector)
    }
}

/// `⟨f, g⟩_{H_K} = Σ_j Σ_l v_j · k(c_j, c'_l) v'_l`.
pub fn hk_inner<F, G>(f: &F, g: &G) -> Result<f64, RkhsError>
where
    F: KernelExpansion + ?Sized,
    G: KernelExpansion + ?Sized,
{
    let kernel = f.kernel();
    kernel.check_same(g.kernel())?;
    let g_atoms: Vec<_> = (0..g.num_atoms()).map(|l| g.atom(l)).collect();
    let mut total = 0.0;
    for j in 0..f.num_atoms() {
        let (cj, vj) = f.atom(j);
        let mut acc = Vector3::zeros();
        for (cl, vl) in &g_atoms {
            acc += vl * kernel.k(&cj, cl);
        }
        total += vj.dot(&acc);
    }
    Ok(total)
}

/// Discretized L² pairing `w Σ_i f(a_i) · g(a_i)`.
pub fn l2_inner(f: &Field, g: &Field, grid: &Grid) -> Result<f64, RkhsError> {
    let expected = (grid.len(), 3);
    for m in [f, g] {
        if m.shape() != expected {
            return Err(RkhsError::Shape {
                expected,
                found: m.shape(),
            });
        }
    }
    Ok(grid.weight() * f.dot(g))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    #[test]
    fn coincident_single_atoms() {
        let k = KernelSpec::new(1.3).unwrap();
        let c = Point3::new(0.5, 0.1, -0.2);
        let a = SingleAtom {
            center: c,
            vector: Vector3::new(1.0, 2.0, 3.0),
            kernel: k,
        };
        let b = SingleAtom {
            center: c,
            vector: Vector3::new(-1.0, 0.5, 2.0),
            kernel: k,
        };
        assert_eq!(hk_inner(&a, &b).unwrap(), 6.0);
    }

    #[test]
    fn kernel_mismatch() {
        let c = Point3::origin();
        let a = SingleAtom {
            center: c,
            vector: Vector3::x(),
            kernel: KernelSpec::new(1.0).unwrap(),
        };
        let b = SingleAtom {
            center: c,
            vector: Vector3::x(),
            kernel: KernelSpec::new(2.0).unwrap(),
        };
        assert!(hk_inner(&a, &b).is_err());
    }

    #[test]
    fn l2_constant_fields() {
        let grid = Grid::build([0.0; 3], [1.0; 3], 0.5).unwrap();
        let mut e1 = DMatrix::zeros(8, 3);
        let mut e2 = DMatrix::zeros(8, 3);
        for i in 0..8 {
            e1[(i, 0)] = 1.0;
            e2[(i, 1)] = 1.0;
        }
        assert_eq!(l2_inner(&e1, &e1, &grid).unwrap(), 0.125 * 8.0);
        assert_eq!(l2_inner(&e1, &e2, &grid).unwrap(), 0.0);
        assert!(l2_inner(&e1, &DMatrix::zeros(7, 3), &grid).is_err());
    }
}
