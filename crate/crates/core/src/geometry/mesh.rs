use nalgebra::Point3;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("line {line}: face has {count} vertices, only triangles are supported")]
    NonTriangular { line: usize, count: usize },
    #[error("line {line}: vertex index {index} out of range (mesh has {count} vertices)")]
    IndexOutOfRange {
        line: usize,
        index: i64,
        count: usize,
    },
    #[error("mesh has no triangles")]
    Empty,
    #[error("non-finite vertex coordinate at vertex {0}")]
    NonFinite(usize),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

/// Oriented triangulated surface. Triangle vertex order carries orientation.
#[derive(Debug, Clone, PartialEq)]
pub struct TriMesh {
    pub label: String,
    vertices: Vec<Point3<f64>>,
    triangles: Vec<[usize; 3]>,
}

impl TriMesh {
    pub fn new(
        label: impl Into<String>,
        vertices: Vec<Point3<f64>>,
        triangles: Vec<[usize; 3]>,
    ) -> Result<Self, MeshError> {
        if triangles.is_empty() {
            return Err(MeshError::Empty);
        }
        if let Some(i) = vertices
            .iter()
            .position(|v| !(v.x.is_finite() && v.y.is_finite() && v.z.is_finite()))
        {
            return Err(MeshError::NonFinite(i));
        }
        for t in &triangles {
            for &i in t {
                if i >= vertices.len() {
                    return Err(MeshError::IndexOutOfRange {
                        line: 0,
                        index: i as i64,
                        count: vertices.len(),
                    });
                }
            }
        }
        Ok(Self {
            label: label.into(),
            vertices,
            triangles,
        })
    }

    pub fn vertices(&self) -> &[Point3<f64>] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    /// Same surface with every face orientation reversed.
    pub fn flipped(&self) -> Self {
        Self {
            label: self.label.clone(),
            vertices: self.vertices.clone(),
            triangles: self.triangles.iter().map(|&[a, b, c]| [a, c, b]).collect(),
        }
    }

    /// Axis-aligned bounding box as (min, max).
    pub fn bounding_box(&self) -> ([f64; 3], [f64; 3]) {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for v in &self.vertices {
            for k in 0..3 {
                lo[k] = lo[k].min(v[k]);
                hi[k] = hi[k].max(v[k]);
            }
        }
        (lo, hi)
    }
}
