//! Hard and soft rasterization of posed triangle meshes.

mod coverage;
pub mod hard;
pub mod image;
pub mod soft;

pub use hard::{rasterize_hard, surface_point, SurfaceBuffer, SurfaceSample};
pub use image::{DepthImage, Grid, GridError, SilhouetteImage};
pub use soft::{
    pose_gradient, posed_vertices, posed_vertices_jet, rasterize_static, render_layers, render_soft, SoftLayers,
    SoftParams, StaticLayer,
};
