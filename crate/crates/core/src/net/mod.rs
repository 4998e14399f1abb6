//! A from-scratch 3D convolutional completion network.
//!
//! Layout: valid conv + ReLU + max-pool stages, then dense layers with ReLU,
//! the last one with a sigmoid producing one occupancy probability per voxel.

pub mod adam;
pub mod arch;
pub mod io;
mod layers;
pub mod model;
pub mod train;

pub use adam::{adam_step, AdamConfig};
pub use arch::{Architecture, ConvSpec};
pub use io::{load_model, read_model, save_model, write_model};
pub use model::{cross_entropy, Model};
pub use train::{train, EvalRecord, TrainConfig, TrainOutcome};
