//! Meshes, similarity transforms, distances and the octahedral view set.

mod distance;
mod mesh;
mod octahedral;
mod pose;

pub use distance::{
    closest_point_on_triangle, is_inside, mesh_triangles, min_distance, min_distance_sq, ray_triangle,
    signed_point_mesh_distance, to_v3, unsigned_distance, SignedDistance,
};
pub use mesh::{TriangleMesh, VertexSelection};
pub use octahedral::octahedral_rotations;
pub use pose::{quaternion_angle, rotation_angle_between, rotation_log, slerp, Pose6DoF};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("vertex index {index} out of range for {count} vertices")]
    IndexOutOfRange { index: usize, count: usize },
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),
    #[error("invalid pose: {0}")]
    InvalidPose(String),
    #[error("OBJ line {line}: {message}")]
    Obj { line: usize, message: String },
    #[error("io: {0}")]
    Io(String),
}
