//! Voxel shape completion from single partial views.
//!
//! The pipeline: render partial views of meshes into occupancy grids
//! ([`datagen`]), train a 3D convolutional completion network ([`net`]),
//! complete new partial clouds ([`complete`]), turn completions into
//! meshes ([`postprocess`]) and score them ([`metrics`]).

pub mod complete;
pub mod datagen;
pub mod error;
pub mod formats;
pub mod geom;
pub mod grid;
pub mod metrics;
pub mod net;
pub mod postprocess;
pub mod shapes;
pub mod spatial;
pub mod timing;

pub use error::{Error, Result};
pub use grid::{EmbedTransform, OccupancyGrid, PointCloud, Vec3, WeightedGrid};
