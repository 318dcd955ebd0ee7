use std::collections::HashMap;

use nalgebra::Point3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::SynthError;
use crate::geometry::TriMesh;

/// Number of low-frequency shape modes.
pub const SHAPE_MODES: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BodyParams {
    /// Scale along z.
    pub height: f64,
    /// Scale along x and y.
    pub girth: f64,
    /// Coefficients of the radial shape modes.
    pub shape: [f64; SHAPE_MODES],
    /// Amplitude of the seed-driven smooth perturbation (0 disables it).
    pub jitter: f64,
    pub sex: u8,
    pub age: f64,
    /// Icosahedron subdivision level.
    pub resolution: u32,
    pub seed: u64,
}

impl Default for BodyParams {
    fn default() -> Self {
        Self {
            height: 1.0,
            girth: 1.0,
            shape: [0.0; SHAPE_MODES],
            jitter: 0.0,
            sex: 0,
            age: 0.0,
            resolution: 2,
            seed: 0,
        }
    }
}

impl BodyParams {
    pub fn validate(&self) -> Result<(), SynthError> {
        if !(self.height > 0.0
            && self.height.is_finite()
            && self.girth > 0.0
            && self.girth.is_finite())
        {
            return Err(SynthError::InvalidParams(format!(
                "scales must be positive (height {}, girth {})",
                self.height, self.girth
            )));
        }
        if !(1..=6).contains(&self.resolution) {
            return Err(SynthError::InvalidParams(format!(
                "resolution must be in 1..=6, got {}",
                self.resolution
            )));
        }
        // |mode| ≤ 1 on the unit sphere, so this keeps the radius positive
        let amp: f64 = self.shape.iter().map(|c| c.abs()).sum::<f64>() + 2.0 * self.jitter.abs();
        if !(amp < 0.8) {
            return Err(SynthError::InvalidParams(format!(
                "deformation amplitude {amp} too large (must stay below 0.8)"
            )));
        }
        Ok(())
    }
}

/// Unit icosphere with outward (counter-clockwise seen from outside)
/// triangles: 20·4^level faces.
pub fn icosphere(level: u32) -> (Vec<Point3<f64>>, Vec<[usize; 3]>) {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut verts: Vec<Point3<f64>> = [
        [-1.0, t, 0.0],
        [1.0, t, 0.0],
        [-1.0, -t, 0.0],
        [1.0, -t, 0.0],
        [0.0, -1.0, t],
        [0.0, 1.0, t],
        [0.0, -1.0, -t],
        [0.0, 1.0, -t],
        [t, 0.0, -1.0],
        [t, 0.0, 1.0],
        [-t, 0.0, -1.0],
        [-t, 0.0, 1.0],
    ]
    .iter()
    .map(|p| Point3::from(nalgebra::Vector3::from(*p).normalize()))
    .collect();
    let mut faces: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..level {
        let mut cache: HashMap<(usize, usize), usize> = HashMap::new();
        let mut midpoint = |a: usize, b: usize, verts: &mut Vec<Point3<f64>>| -> usize {
            let key = (a.min(b), a.max(b));
            *cache.entry(key).or_insert_with(|| {
                let m = (verts[a].coords + verts[b].coords).normalize();
                verts.push(Point3::from(m));
                verts.len() - 1
            })
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for [a, b, c] in faces {
            let ab = midpoint(a, b, &mut verts);
            let bc = midpoint(b, c, &mut verts);
            let ca = midpoint(c, a, &mut verts);
            next.extend_from_slice(&[[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    (verts, faces)
}

/// Low-frequency radial modes on the unit sphere, each bounded by 1 in
/// absolute value.
fn shape_modes(p: &Point3<f64>) -> [f64; SHAPE_MODES] {
    let (x, y, z) = (p.x, p.y, p.z);
    [
        0.5 * (3.0 * z * z - 1.0),
        2.0 * x * z,
        x * x - y * y,
        0.5 * z * (5.0 * z * z - 3.0),
    ]
}

fn jitter_modes(p: &Point3<f64>) -> [f64; 8] {
    let m = shape_modes(p);
    [
        m[0],
        m[1],
        m[2],
        m[3],
        2.0 * p.x * p.y,
        2.0 * p.y * p.z,
        p.x,
        p.y,
    ]
}

/// Deterministic closed, oriented body-like mesh: a subdivided icosahedron
/// deformed radially by the shape modes, perturbed by a seed-driven smooth
/// field, then scaled by girth (x, y) and height (z) about the origin.
pub fn generate_body(params: &BodyParams) -> Result<TriMesh, SynthError> {
    params.validate()?;
    let (sphere, faces) = icosphere(params.resolution);
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let eps: Vec<f64> = (0..8).map(|_| StandardNormal.sample(&mut rng)).collect();
    let norm = eps.iter().map(|e: &f64| e.abs()).sum::<f64>().max(1.0);
    let vertices = sphere
        .iter()
        .map(|p| {
            let modes = shape_modes(p);
            let mut rho = 1.0;
            for (c, h) in params.shape.iter().zip(modes) {
                rho += c * h;
            }
            if params.jitter != 0.0 {
                let jm = jitter_modes(p);
                let field: f64 = eps.iter().zip(jm).map(|(e, h)| e * h).sum::<f64>() / norm;
                rho += params.jitter * field;
            }
            Point3::new(
                params.girth * (rho * p.x),
                params.girth * (rho * p.y),
                params.height * (rho * p.z),
            )
        })
        .collect();
    Ok(TriMesh::new(
        format!("body-{:016x}", params.seed),
        vertices,
        faces,
    )?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{area_vector_sum, triangle_descriptors};

    fn signed_volume(m: &TriMesh) -> f64 {
        let v = m.vertices();
        m.triangles()
            .iter()
            .map(|&[a, b, c]| v[a].coords.dot(&v[b].coords.cross(&v[c].coords)) / 6.0)
            .sum()
    }

    #[test]
    fn unit_params_give_closed_outward_icosphere() {
        let m = generate_body(&BodyParams::default()).unwrap();
        assert_eq!(m.num_triangles(), 320);
        let (sum, mass) = area_vector_sum(&triangle_descriptors(&m).descriptors);
        assert!(sum.norm() <= 1e-9 * mass);
        assert!(signed_volume(&m) > 0.0);
        for v in m.vertices() {
            assert!((v.coords.norm() - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn doubled_height_doubles_z_extent() {
        let base = BodyParams {
            shape: [0.1, -0.05, 0.08, 0.03],
            jitter: 0.05,
            seed: 17,
            height: 1.3,
            girth: 0.4,
            ..BodyParams::default()
        };
        let tall = BodyParams {
            height: 2.6,
            ..base.clone()
        };
        let (lo1, hi1) = generate_body(&base).unwrap().bounding_box();
        let (lo2, hi2) = generate_body(&tall).unwrap().bounding_box();
        assert_eq!(hi2[2] - lo2[2], 2.0 * (hi1[2] - lo1[2]));
        assert_eq!(hi2[0], hi1[0]);
    }

    #[test]
    fn seeds_control_the_perturbation() {
        let p = BodyParams {
            jitter: 0.05,
            seed: 1,
            ..BodyParams::default()
        };
        let a = generate_body(&p).unwrap();
        let b = generate_body(&p).unwrap();
        let c = generate_body(&BodyParams {
            seed: 2,
            ..p.clone()
        })
        .unwrap();
        assert_eq!(a, b);
        assert_ne!(a.vertices(), c.vertices());
    }

    #[test]
    fn invalid_params_rejected() {
        assert!(generate_body(&BodyParams {
            height: 0.0,
            ..BodyParams::default()
        })
        .is_err());
        assert!(generate_body(&BodyParams {
            resolution: 0,
            ..BodyParams::default()
        })
        .is_err());
        assert!(generate_body(&BodyParams {
            shape: [0.5, 0.5, 0.0, 0.0],
            ..BodyParams::default()
        })
        .is_err());
    }
}
