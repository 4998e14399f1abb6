use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use voxc_core::complete::DEFAULT_CLUSTER_TOL;
use voxc_core::shapes::Family;

use crate::eval::Method;

#[derive(Debug, Parser)]
#[command(name = "voxc", version, about = "Voxel shape completion from single partial views")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a procedural desk-object mesh set as OFF files.
    GenShapes(GenShapesArgs),
    /// Render partial/ground-truth grid pairs from a directory of meshes.
    GenData(GenDataArgs),
    /// Train a completion network on a dataset file.
    Train(TrainArgs),
    /// Complete one object of a point cloud scene and write its mesh.
    Complete(CompleteArgs),
    /// Score completion methods on every split of a dataset.
    Evaluate(EvaluateArgs),
}

/// Roll x pitch x yaw view lattice, written `RxPxY`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Views(pub [usize; 3]);

impl FromStr for Views {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<&str> = s.split('x').collect();
        if parts.len() != 3 {
            return Err(format!("expected RxPxY, got '{s}'"));
        }
        let mut v = [0; 3];
        for (slot, p) in v.iter_mut().zip(&parts) {
            *slot = p.parse().map_err(|_| format!("bad view count '{p}' in '{s}'"))?;
            if *slot == 0 {
                return Err(format!("view counts must be positive in '{s}'"));
            }
        }
        Ok(Views(v))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ArchKind {
    Compact,
    Standard,
    Reference,
}

impl ArchKind {
    pub fn name(self) -> &'static str {
        match self {
            ArchKind::Compact => "compact",
            ArchKind::Standard => "standard",
            ArchKind::Reference => "reference",
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct GenShapesArgs {
    pub out_dir: PathBuf,
    /// Comma-separated family names; all families when omitted.
    #[arg(long, value_delimiter = ',')]
    pub families: Vec<Family>,
    #[arg(long, default_value_t = 3)]
    pub per_family: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args)]
pub struct GenDataArgs {
    pub mesh_dir: PathBuf,
    pub out: PathBuf,
    #[arg(long, default_value_t = 24)]
    pub grid_side: usize,
    #[arg(long, default_value = "4x3x4")]
    pub views: Views,
    /// Fraction of meshes held out entirely.
    #[arg(long, default_value_t = 0.2)]
    pub holdout_frac: f64,
    /// Mesh ids to hold out instead of a random fraction.
    #[arg(long, value_delimiter = ',')]
    pub holdout_meshes: Vec<String>,
    /// Fraction of each training mesh's views held out.
    #[arg(long, default_value_t = 0.2)]
    pub holdout_view_frac: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    pub dataset: PathBuf,
    /// Final model; the peak checkpoint and history go next to it.
    pub out: PathBuf,
    #[arg(long, default_value_t = 2000)]
    pub batches: usize,
    #[arg(long, default_value_t = 0.0001)]
    pub lr: f64,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 100)]
    pub eval_every: usize,
    /// Pairs per split scored at each evaluation.
    #[arg(long, default_value_t = 32)]
    pub eval_samples: usize,
    #[arg(long, value_enum, default_value_t = ArchKind::Compact)]
    pub arch: ArchKind,
}

#[derive(Debug, Clone, Args)]
pub struct CompleteArgs {
    /// ASCII XYZ or binary VXPC point cloud.
    pub cloud: PathBuf,
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long, default_value = "cnn")]
    pub method: Method,
    /// Marching cubes on the completion only, skipping refinement.
    #[arg(long)]
    pub fast: bool,
    #[arg(long, default_value = "mesh.off")]
    pub out: PathBuf,
    /// Write binary STL instead of OFF.
    #[arg(long)]
    pub stl: bool,
    #[arg(long, default_value_t = 0)]
    pub cluster_index: usize,
    #[arg(long, default_value_t = DEFAULT_CLUSTER_TOL)]
    pub cluster_tol: f64,
    /// Grid side for the partial and mirror methods.
    #[arg(long, default_value_t = 24)]
    pub grid_side: usize,
}

#[derive(Debug, Clone, Args)]
pub struct EvaluateArgs {
    pub dataset: PathBuf,
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', num_args = 0.., default_value = "cnn,mirror,partial")]
    pub methods: Vec<Method>,
    #[arg(long, default_value = "report.tsv")]
    pub out: PathBuf,
    /// Source meshes: views are re-rendered and scored against the mesh
    /// surface instead of the ground-truth grid surface.
    #[arg(long)]
    pub mesh_dir: Option<PathBuf>,
    /// Full refinement for the cnn method.
    #[arg(long)]
    pub detailed: bool,
    /// Score Jaccard on grids instead of voxelized meshes.
    #[arg(long)]
    pub grid_jaccard: bool,
    #[arg(long)]
    pub max_per_split: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}
