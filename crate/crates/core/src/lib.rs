//! Geometric core for personalised monocular face capture.
//!
//! - [`mesh`]: indexed triangle meshes, normals, Laplacians, closest points, I/O
//! - [`deform`]: skinned parametric head model with expression and pose
//!   corrective offsets
//! - [`neural`]: small dense networks, Adam, positional and hash-grid encodings,
//!   and the neural expression basis
//! - [`appearance`]: split diffuse/specular shading and the training objective
//! - [`raster`]: deterministic software rasterizer and G-buffer renderers
//! - [`metrics`]: semantic IoU, geometry-based warp PSNR, landmark error
//! - [`remesh`]: isotropic remeshing with barycentric transfer of model tables
//! - [`synth`]: procedural head model and ground-truth sequences
//!
//! All multi-array assets are stored in the [`fwb`] container.

pub mod appearance;
pub mod config;
pub mod deform;
pub mod error;
pub mod fwb;
pub mod image;
pub mod mesh;
pub mod metrics;
pub mod neural;
pub mod raster;
pub mod remesh;
pub mod synth;
pub mod track;

pub use error::{Error, Result};
pub use mesh::{BaryCoord, TriMesh, Vec3};
