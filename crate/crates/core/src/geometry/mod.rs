//! Oriented triangle meshes and their per-triangle current descriptors.

mod descriptors;
mod io;
mod mesh;

pub use descriptors::{
    area_vector_sum, median_pairwise_distance, triangle_descriptors, DescriptorSet,
    TriangleDescriptor,
};
pub use io::{load_mesh, parse_obj, parse_off, write_off, MeshFormat};
pub use mesh::{MeshError, TriMesh};
