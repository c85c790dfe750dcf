//! Deterministic software rasterization into G-buffers and the renderers
//! built on them.

mod camera;
mod rasterize;
mod render;

pub use camera::{Camera, CameraMode, Projection, Projector, NEAR};
pub use rasterize::{
    edge, is_top_left, rasterize, setup_triangles, GBuffer, RasterOptions, Setup, DEPTH_TIE, NO_TRIANGLE, TILE,
};
pub use render::{majority_class, render_depth, render_normals, render_semantic, render_shaded};
