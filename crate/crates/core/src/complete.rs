//! Completion strategies and euclidean clustering of scene clouds.

use std::collections::VecDeque;
use std::fmt;

use crate::error::{Error, Result};
use crate::grid::{
    canonical_transform, embed_with_transform, EmbedTransform, OccupancyGrid, OutOfRange, PointCloud, Vec3,
    WeightedGrid,
};
use crate::net::train::THRESHOLD;
use crate::net::Model;
use crate::spatial::PointIndex;

pub const DEFAULT_CLUSTER_TOL: f64 = 0.02;
pub const MIN_CLUSTER_POINTS: usize = 10;

/// Single-linkage clusters under the neighbor radius `tol`, largest first.
/// Clusters below [`MIN_CLUSTER_POINTS`] are dropped. Points keep their
/// input order within a cluster.
pub fn cluster(pc: &PointCloud, tol: f64) -> Result<Vec<PointCloud>> {
    if !(tol > 0.0) || !tol.is_finite() {
        return Err(Error::invalid(format!("cluster tolerance {tol} must be positive")));
    }
    let n = pc.len();
    let index = PointIndex::new(&pc.points);
    let mut label = vec![usize::MAX; n];
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for seed in 0..n {
        if label[seed] != usize::MAX {
            continue;
        }
        let id = groups.len();
        let mut members = vec![seed];
        label[seed] = id;
        let mut queue = VecDeque::from([seed]);
        while let Some(i) = queue.pop_front() {
            for j in index.within(&pc.points[i], tol) {
                if label[j] == usize::MAX {
                    label[j] = id;
                    members.push(j);
                    queue.push_back(j);
                }
            }
        }
        members.sort_unstable();
        groups.push(members);
    }
    groups.retain(|g| g.len() >= MIN_CLUSTER_POINTS);
    // stable: equal sizes stay in order of their first point
    groups.sort_by(|a, b| b.len().cmp(&a.len()));
    Ok(groups
        .into_iter()
        .map(|g| PointCloud::new(g.into_iter().map(|i| pc.points[i]).collect()))
        .collect())
}

/// The observed cloud reflected through the plane `z = centroid.z`.
pub fn mirror_points(pc: &PointCloud) -> Result<PointCloud> {
    let c = pc.centroid().ok_or(Error::EmptyCloud)?;
    Ok(PointCloud::new(
        pc.points.iter().map(|p| Vec3::new(p.x, p.y, 2.0 * c.z - p.z)).collect(),
    ))
}

#[derive(Debug, Clone)]
pub enum Completer {
    Partial,
    Mirror,
    Cnn(Box<Model>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Completion {
    pub grid: OccupancyGrid,
    pub transform: EmbedTransform,
    /// Network output before thresholding, for the CNN strategy.
    pub raw: Option<WeightedGrid>,
}

impl Completer {
    pub fn cnn(model: Model) -> Self {
        Completer::Cnn(Box::new(model))
    }

    pub fn name(&self) -> &'static str {
        match self {
            Completer::Partial => "partial",
            Completer::Mirror => "mirror",
            Completer::Cnn(_) => "cnn",
        }
    }

    /// Complete `pc` in its canonical `side^3` frame.
    pub fn complete(&self, pc: &PointCloud, side: usize) -> Result<Completion> {
        let t = canonical_transform(pc, side)?;
        self.complete_in_frame(pc, &t, side)
    }

    /// Complete `pc` in a given frame. Observed points outside the grid are
    /// clamped to its boundary; mirrored points outside are dropped.
    pub fn complete_in_frame(&self, pc: &PointCloud, t: &EmbedTransform, side: usize) -> Result<Completion> {
        if pc.is_empty() {
            return Err(Error::EmptyCloud);
        }
        pc.check_finite()?;
        let dims = [side; 3];
        let (partial, _) = embed_with_transform(pc, t, dims, OutOfRange::Clamp);
        let (grid, raw) = match self {
            Completer::Partial => (partial, None),
            Completer::Mirror => {
                let (reflected, _) = embed_with_transform(&mirror_points(pc)?, t, dims, OutOfRange::Drop);
                let mut g = partial;
                g.union_with(&reflected)?;
                (g, None)
            }
            Completer::Cnn(model) => {
                if model.input_side() != side {
                    return Err(Error::invalid(format!(
                        "model expects side {} but the pipeline uses {side}",
                        model.input_side()
                    )));
                }
                let raw = model.forward(&partial)?;
                let mut g = OccupancyGrid::in_transform(dims, t);
                g.data_mut().copy_from_slice(raw.threshold(THRESHOLD).data());
                (g, Some(raw))
            }
        };
        Ok(Completion {
            grid,
            transform: *t,
            raw,
        })
    }
}

impl fmt::Display for Completer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}
