//! Running completion methods over dataset views and scoring them.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use voxc_core::complete::{Completer, Completion};
use voxc_core::datagen::{render_view_cloud, CameraConfig, Dataset, Split};
use voxc_core::geom::TriMesh;
use voxc_core::grid::grid_to_pointcloud;
use voxc_core::metrics::{evaluate_suite, jaccard, MetricConfig, SuiteItem, SuiteReport};
use voxc_core::net::Model;
use voxc_core::postprocess::{fast_mesh, partial_mesh, reconstruct_detailed, ReconstructConfig};
use voxc_core::{Error, PointCloud, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Partial,
    Mirror,
    Cnn,
    /// Ground-truth passthrough, for testing the evaluation itself.
    Oracle,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Partial => "partial",
            Method::Mirror => "mirror",
            Method::Cnn => "cnn",
            Method::Oracle => "oracle",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "partial" => Ok(Method::Partial),
            "mirror" => Ok(Method::Mirror),
            "cnn" => Ok(Method::Cnn),
            "oracle" => Ok(Method::Oracle),
            _ => Err(format!("unknown method '{s}' (partial, mirror, cnn)")),
        }
    }
}

/// Where the observed cloud and the reference surface of a view come from.
pub enum Truth<'a> {
    /// Source meshes by id: views are re-rendered, the reference is the mesh.
    Meshes(&'a HashMap<String, TriMesh>, CameraConfig),
    /// Only the dataset: the observed cloud is the partial grid's voxel
    /// centers, the reference is the surface of the ground-truth grid.
    Grids,
}

pub struct View {
    pub cloud: PointCloud,
    pub truth: TriMesh,
}

pub fn view(ds: &Dataset, i: usize, truth: &Truth) -> Result<View> {
    let pair = &ds.pairs[i];
    match truth {
        Truth::Meshes(meshes, cam) => {
            let spec = &ds.manifest[i];
            let m = meshes
                .get(&spec.mesh_id)
                .ok_or_else(|| Error::InvalidArgument(format!("mesh '{}' not found", spec.mesh_id)))?;
            Ok(View {
                cloud: render_view_cloud(m, &spec.pose, cam)?,
                truth: spec.pose.mesh_to_camera(m),
            })
        }
        Truth::Grids => Ok(View {
            cloud: grid_to_pointcloud(&pair.x, &pair.transform),
            truth: fast_mesh(&pair.y, &pair.transform),
        }),
    }
}

pub fn completer(method: Method, model: Option<&Model>) -> Result<Option<Completer>> {
    Ok(match method {
        Method::Partial => Some(Completer::Partial),
        Method::Mirror => Some(Completer::Mirror),
        Method::Cnn => {
            Some(Completer::cnn(model.cloned().ok_or_else(|| {
                Error::InvalidArgument("the cnn method needs a model".into())
            })?))
        }
        Method::Oracle => None,
    })
}

/// The grid each method produces for view `i`, in the pair's frame.
pub fn complete_view(ds: &Dataset, i: usize, c: Option<&Completer>, cloud: &PointCloud) -> Result<Completion> {
    let pair = &ds.pairs[i];
    match c {
        Some(c) => c.complete_in_frame(cloud, &pair.transform, ds.side),
        None => Ok(Completion {
            grid: pair.y.clone(),
            transform: pair.transform,
            raw: None,
        }),
    }
}

/// Mean grid-level Jaccard against the ground truth over `indices`.
pub fn mean_grid_jaccard(
    ds: &Dataset,
    indices: &[usize],
    method: Method,
    model: Option<&Model>,
    truth: &Truth,
) -> Result<f64> {
    if indices.is_empty() {
        return Err(Error::InvalidArgument("no views to score".into()));
    }
    let c = completer(method, model)?;
    let scores: Vec<f64> = indices
        .par_iter()
        .map(|&i| {
            let v = view(ds, i, truth)?;
            let out = complete_view(ds, i, c.as_ref(), &v.cloud)?;
            jaccard(&out.grid, &ds.pairs[i].y)
        })
        .collect::<Result<_>>()?;
    Ok(scores.iter().sum::<f64>() / scores.len() as f64)
}

#[derive(Debug, Clone)]
pub struct EvalOptions {
    pub methods: Vec<Method>,
    /// Detailed reconstruction for the cnn method instead of the fast mesh.
    pub detailed: bool,
    /// Score Jaccard on the dataset grids instead of mesh voxelizations.
    pub grid_jaccard: bool,
    pub max_per_split: Option<usize>,
    pub metrics: MetricConfig,
    pub reconstruct: ReconstructConfig,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            methods: vec![Method::Cnn, Method::Mirror, Method::Partial],
            detailed: false,
            grid_jaccard: false,
            max_per_split: None,
            metrics: MetricConfig::default(),
            reconstruct: ReconstructConfig::default(),
        }
    }
}

/// The views scored per split: all of them, or the first `max` of each.
pub fn selected(ds: &Dataset, max: Option<usize>) -> Vec<usize> {
    Split::ALL
        .iter()
        .flat_map(|&s| {
            let idx = ds.indices(s);
            let n = max.unwrap_or(idx.len()).min(idx.len());
            idx.into_iter().take(n)
        })
        .collect()
}

pub fn evaluate(ds: &Dataset, model: Option<&Model>, truth: &Truth, opts: &EvalOptions) -> Result<SuiteReport> {
    if opts.methods.is_empty() {
        return Err(Error::InvalidArgument("no methods to evaluate".into()));
    }
    if let Some(m) = model {
        if m.input_side() != ds.side {
            return Err(Error::InvalidArgument(format!(
                "model side {} does not match dataset side {}",
                m.input_side(),
                ds.side
            )));
        }
    }
    let completers: Vec<(Method, Option<Completer>)> = opts
        .methods
        .iter()
        .map(|&m| Ok((m, completer(m, model)?)))
        .collect::<Result<_>>()?;
    let idx = selected(ds, opts.max_per_split);
    let mut items = Vec::new();
    for &i in &idx {
        let v = view(ds, i, truth)?;
        let spec = &ds.manifest[i];
        for (method, c) in &completers {
            let out = complete_view(ds, i, c.as_ref(), &v.cloud)?;
            let mesh = match method {
                Method::Partial => partial_mesh(&out.grid, &out.transform),
                Method::Mirror => fast_mesh(&out.grid, &out.transform),
                Method::Cnn if opts.detailed => {
                    reconstruct_detailed(&out.grid, &v.cloud, &out.transform, &opts.reconstruct)?.mesh
                }
                Method::Cnn => fast_mesh(&out.grid, &out.transform),
                Method::Oracle => v.truth.clone(),
            };
            let grid_j = if opts.grid_jaccard {
                Some(jaccard(&out.grid, &ds.pairs[i].y)?)
            } else {
                None
            };
            items.push(SuiteItem {
                method: method.name().to_string(),
                split: spec.split,
                label: format!("{}#{}", spec.mesh_id, spec.view),
                completion: mesh,
                truth: v.truth.clone(),
                grid_jaccard: grid_j,
            });
        }
    }
    evaluate_suite(&items, &opts.metrics)
}
