//! Triangle-mesh geometry: ray casting, voxelization, depth rendering,
//! surface sampling and isosurface extraction.

pub mod bvh;
pub mod camera;
pub mod mc;
mod mc_tables;
pub mod mesh;
pub mod sample;
pub mod voxelize;

pub use bvh::Bvh;
pub use camera::{depth_to_partial_grid, render_depth, CameraPose, DepthImage};
pub use mc::{marching_cubes, marching_cubes_closed};
pub use mesh::TriMesh;
pub use sample::sample_surface;
pub use voxelize::{solid_voxelize, solid_voxelize_in_frame};
