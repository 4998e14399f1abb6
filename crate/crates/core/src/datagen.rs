//! Partial-view / ground-truth training pairs rendered from meshes.

use std::collections::HashSet;
use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geom::camera::{self, render_depth_bvh, CameraPose};
use crate::geom::{depth_to_partial_grid, solid_voxelize_in_frame, Bvh, TriMesh};
use crate::grid::{EmbedTransform, OccupancyGrid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Split {
    TrainView,
    HoldoutView,
    HoldoutModel,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::TrainView, Split::HoldoutView, Split::HoldoutModel];

    pub fn name(self) -> &'static str {
        match self {
            Split::TrainView => "train_view",
            Split::HoldoutView => "holdout_view",
            Split::HoldoutModel => "holdout_model",
        }
    }

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(c: u8) -> Option<Split> {
        Split::ALL.get(c as usize).copied()
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Split::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| format!("unknown split '{s}'"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ViewSpec {
    pub mesh_id: String,
    /// Index of the pose in the mesh's view lattice.
    pub view: usize,
    pub pose: CameraPose,
    pub split: Split,
}

/// Partial grid `x` and ground truth `y` in the same frame; `transform`
/// maps camera-frame points into that frame.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingPair {
    pub x: OccupancyGrid,
    pub y: OccupancyGrid,
    pub transform: EmbedTransform,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub side: usize,
    pub manifest: Vec<ViewSpec>,
    pub pairs: Vec<TrainingPair>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn indices(&self, split: Split) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.manifest[i].split == split).collect()
    }

    pub fn count(&self, split: Split) -> usize {
        self.manifest.iter().filter(|v| v.split == split).count()
    }
}

/// Camera intrinsics and placement used for every view.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraConfig {
    pub width: usize,
    pub height: usize,
    pub fov_y: f64,
    /// Camera distance in bounding-sphere radii.
    pub distance_factor: f64,
}

impl Default for CameraConfig {
    fn default() -> Self {
        Self {
            width: camera::DEFAULT_WIDTH,
            height: camera::DEFAULT_HEIGHT,
            fov_y: camera::DEFAULT_FOV_Y,
            distance_factor: 3.0,
        }
    }
}

/// Which meshes are held out entirely.
#[derive(Debug, Clone, PartialEq)]
pub enum HoldoutModels {
    /// A seeded random fraction of the meshes (at least one).
    Fraction(f64),
    /// Explicit mesh ids.
    Named(Vec<String>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitConfig {
    pub holdout_models: HoldoutModels,
    /// Fraction of each training mesh's views reserved as holdout views.
    pub holdout_view_frac: f64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            holdout_models: HoldoutModels::Fraction(0.2),
            holdout_view_frac: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetConfig {
    pub views: [usize; 3],
    pub split: SplitConfig,
    pub camera: CameraConfig,
    /// Views hitting fewer than this fraction of pixels are skipped.
    pub min_hit_fraction: f64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            views: [11, 6, 11],
            split: SplitConfig::default(),
            camera: CameraConfig::default(),
            min_hit_fraction: 0.01,
        }
    }
}

/// Roll-pitch-yaw lattice. Roll and yaw cover `[0, 2pi)`, pitch covers
/// `[-pi/2, pi/2]` inclusive; roll varies slowest. Each pose sits one unit
/// from the origin looking at it.
pub fn sample_views(n_roll: usize, n_pitch: usize, n_yaw: usize) -> Result<Vec<CameraPose>> {
    if n_roll == 0 || n_pitch == 0 || n_yaw == 0 {
        return Err(Error::invalid("view counts must be >= 1"));
    }
    let mut out = Vec::with_capacity(n_roll * n_pitch * n_yaw);
    for r in 0..n_roll {
        let roll = TAU * r as f64 / n_roll as f64;
        for p in 0..n_pitch {
            let pitch = if n_pitch == 1 {
                -FRAC_PI_2
            } else {
                -FRAC_PI_2 + PI * p as f64 / (n_pitch - 1) as f64
            };
            for y in 0..n_yaw {
                let yaw = TAU * y as f64 / n_yaw as f64;
                let pose = CameraPose::new(Default::default(), roll, pitch, yaw);
                out.push(pose.looking_at(Default::default(), 1.0));
            }
        }
    }
    Ok(out)
}

/// Lattice poses moved to look at the mesh's bounding-sphere center from
/// `distance_factor` radii away.
pub fn views_around(m: &TriMesh, views: [usize; 3], distance_factor: f64) -> Result<Vec<CameraPose>> {
    let (center, radius) = m.bounding_sphere().ok_or(Error::EmptyMesh)?;
    if !(radius > 0.0) {
        return Err(Error::DegenerateMesh("mesh has zero extent".into()));
    }
    Ok(sample_views(views[0], views[1], views[2])?
        .into_iter()
        .map(|p| p.looking_at(center, distance_factor * radius))
        .collect())
}

/// Render one view and voxelize the full mesh into the partial view's grid.
pub fn generate_pair(m: &TriMesh, pose: &CameraPose, side: usize) -> Result<TrainingPair> {
    generate_pair_with(m, &Bvh::new(m), pose, side, &CameraConfig::default())
}

fn generate_pair_with(
    m: &TriMesh,
    bvh: &Bvh,
    pose: &CameraPose,
    side: usize,
    cam: &CameraConfig,
) -> Result<TrainingPair> {
    if m.is_empty() {
        return Err(Error::EmptyMesh);
    }
    let d = render_depth_bvh(bvh, pose, cam.width, cam.height, cam.fov_y);
    let (x, _, transform) = depth_to_partial_grid(&d, side)?;
    let y = solid_voxelize_in_frame(&pose.mesh_to_camera(m), [side; 3], &transform)?;
    Ok(TrainingPair { x, y, transform })
}

/// Render the visible cloud of a view in the camera frame.
pub fn render_view_cloud(m: &TriMesh, pose: &CameraPose, cam: &CameraConfig) -> Result<crate::grid::PointCloud> {
    let d = camera::render_depth(m, pose, cam.width, cam.height, cam.fov_y)?;
    Ok(d.to_cloud())
}

fn holdout_set(meshes: &[(String, TriMesh)], cfg: &SplitConfig, rng: &mut ChaCha8Rng) -> Result<HashSet<usize>> {
    match &cfg.holdout_models {
        HoldoutModels::Fraction(f) => {
            let n = meshes.len();
            let k = ((f * n as f64).round() as usize).clamp(1, n - 1);
            let mut idx: Vec<usize> = (0..n).collect();
            idx.shuffle(rng);
            Ok(idx.into_iter().take(k).collect())
        }
        HoldoutModels::Named(names) => {
            let mut out = HashSet::new();
            for name in names {
                let i = meshes
                    .iter()
                    .position(|(id, _)| id == name)
                    .ok_or_else(|| Error::invalid(format!("holdout mesh '{name}' not in the mesh list")))?;
                out.insert(i);
            }
            if out.len() == meshes.len() {
                return Err(Error::invalid("every mesh is held out; nothing to train on"));
            }
            Ok(out)
        }
    }
}

/// Render every lattice view of every mesh and assign splits. Split
/// assignment depends only on the seed and mesh order; skipped views are
/// dropped after assignment.
pub fn build_dataset(meshes: &[(String, TriMesh)], cfg: &DatasetConfig, side: usize, seed: u64) -> Result<Dataset> {
    if meshes.len() < 2 {
        return Err(Error::invalid(
            "at least two meshes are needed for a holdout-model split",
        ));
    }
    let frac_model = match cfg.split.holdout_models {
        HoldoutModels::Fraction(f) => f,
        HoldoutModels::Named(_) => 0.0,
    };
    let fv = cfg.split.holdout_view_frac;
    if !(0.0..=1.0).contains(&frac_model) || !(0.0..=1.0).contains(&fv) || frac_model + fv > 1.0 {
        return Err(Error::invalid(format!(
            "split fractions must be non-negative and sum to at most 1 (got {frac_model} + {fv})"
        )));
    }
    let ids: HashSet<&str> = meshes.iter().map(|(id, _)| id.as_str()).collect();
    if ids.len() != meshes.len() {
        return Err(Error::invalid("mesh ids must be unique"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let holdout = holdout_set(meshes, &cfg.split, &mut rng)?;

    let mut jobs = Vec::new();
    for (mi, (id, m)) in meshes.iter().enumerate() {
        let poses = views_around(m, cfg.views, cfg.camera.distance_factor)?;
        let n = poses.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        let n_hold = if holdout.contains(&mi) {
            0
        } else {
            (fv * n as f64).round() as usize
        };
        let held: HashSet<usize> = order.into_iter().take(n_hold).collect();
        for (v, pose) in poses.into_iter().enumerate() {
            let split = if holdout.contains(&mi) {
                Split::HoldoutModel
            } else if held.contains(&v) {
                Split::HoldoutView
            } else {
                Split::TrainView
            };
            jobs.push((
                mi,
                ViewSpec {
                    mesh_id: id.clone(),
                    view: v,
                    pose,
                    split,
                },
            ));
        }
    }

    let bvhs: Vec<Bvh> = meshes.par_iter().map(|(_, m)| Bvh::new(m)).collect();
    let cam = cfg.camera;
    let results: Vec<Option<(ViewSpec, TrainingPair)>> = jobs
        .into_par_iter()
        .map(|(mi, spec)| {
            let m = &meshes[mi].1;
            let d = render_depth_bvh(&bvhs[mi], &spec.pose, cam.width, cam.height, cam.fov_y);
            if d.hit_fraction() < cfg.min_hit_fraction {
                log::info!(
                    "skipping {} view {}: {:.2}% of pixels hit",
                    spec.mesh_id,
                    spec.view,
                    100.0 * d.hit_fraction()
                );
                return None;
            }
            match generate_pair_with(m, &bvhs[mi], &spec.pose, side, &cam) {
                Ok(pair) => Some((spec, pair)),
                Err(e) => {
                    log::warn!("skipping {} view {}: {e}", spec.mesh_id, spec.view);
                    None
                }
            }
        })
        .collect();

    let mut ds = Dataset {
        side,
        manifest: Vec::new(),
        pairs: Vec::new(),
    };
    for (spec, pair) in results.into_iter().flatten() {
        ds.manifest.push(spec);
        ds.pairs.push(pair);
    }
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{embed_with_transform, OutOfRange, Vec3};
    use crate::shapes;

    #[test]
    fn lattice_sizes_and_origin() {
        assert_eq!(sample_views(11, 6, 11).unwrap().len(), 726);
        let one = sample_views(1, 1, 1).unwrap();
        assert_eq!(one[0].orientation, [0.0, -FRAC_PI_2, 0.0]);
        let eight = sample_views(2, 2, 2).unwrap();
        for i in 0..8 {
            for j in 0..i {
                assert_ne!(eight[i].orientation, eight[j].orientation);
            }
        }
        assert!(sample_views(0, 1, 1).is_err());
        // every pose looks at the origin from unit distance
        for p in sample_views(3, 3, 3).unwrap() {
            assert!((p.position + p.forward()).norm() < 1e-12);
        }
    }

    fn subset_violation(p: &TrainingPair) -> f64 {
        let xs = p.x.occupied_count();
        let bad = p.x.occupied().filter(|&[a, b, c]| !p.y.get(a, b, c)).count();
        bad as f64 / xs as f64
    }

    #[test]
    fn partial_is_inside_ground_truth() {
        // finely tessellated, so the silhouette does not depend on the facets
        let m = shapes::uv_sphere(0.08, 128, 64);
        let poses = views_around(&m, [3, 3, 3], 3.0).unwrap();
        let counts: Vec<usize> = poses
            .iter()
            .step_by(4)
            .map(|pose| {
                let p = generate_pair(&m, pose, 24).unwrap();
                assert_eq!(p.x.dims(), p.y.dims());
                assert!(subset_violation(&p) <= 0.02);
                p.y.occupied_count()
            })
            .collect();
        let (lo, hi) = (counts.iter().min().unwrap(), counts.iter().max().unwrap());
        assert!((*hi - *lo) as f64 / *lo as f64 <= 0.05, "{counts:?}");
    }

    #[test]
    fn overlay_reproduces_partial() {
        let m = shapes::l_prism(0.12, 0.1, 0.04, 0.06);
        let pose = views_around(&m, [2, 3, 2], 3.0).unwrap()[3];
        let p = generate_pair(&m, &pose, 24).unwrap();
        let cloud = render_view_cloud(&m, &pose, &CameraConfig::default()).unwrap();
        let (x, _) = embed_with_transform(&cloud, &p.transform, [24; 3], OutOfRange::Clamp);
        assert_eq!(x, p.x);
    }

    #[test]
    fn occluded_view_is_an_error() {
        // the whole object lies behind the camera
        let m = shapes::uv_sphere(0.05, 16, 8).translated(Vec3::new(0.0, 0.0, -1.0));
        assert!(matches!(
            generate_pair(&m, &CameraPose::identity(), 24),
            Err(Error::NotVisible)
        ));
    }

    fn ten_meshes() -> Vec<(String, TriMesh)> {
        shapes::desk_set(&shapes::Family::ALL, 1, 5)
    }

    #[test]
    fn split_counts_and_hygiene() {
        let cfg = DatasetConfig {
            views: [5, 2, 2],
            split: SplitConfig {
                holdout_models: HoldoutModels::Fraction(0.2),
                holdout_view_frac: 0.25,
            },
            min_hit_fraction: 0.0,
            ..Default::default()
        };
        let ds = build_dataset(&ten_meshes(), &cfg, 16, 3).unwrap();
        assert_eq!(ds.len(), 200);
        assert_eq!(ds.count(Split::HoldoutModel), 40);
        assert_eq!(ds.count(Split::TrainView) + ds.count(Split::HoldoutView), 160);
        assert_eq!(ds.count(Split::HoldoutView), 40);
        let held: HashSet<&str> = ds
            .manifest
            .iter()
            .filter(|v| v.split == Split::HoldoutModel)
            .map(|v| v.mesh_id.as_str())
            .collect();
        assert!(ds
            .manifest
            .iter()
            .filter(|v| v.split != Split::HoldoutModel)
            .all(|v| !held.contains(v.mesh_id.as_str())));
        let again = build_dataset(&ten_meshes(), &cfg, 16, 3).unwrap();
        assert_eq!(ds, again);
    }

    #[test]
    fn build_rejects_bad_configs() {
        let one = &ten_meshes()[..1];
        assert!(build_dataset(one, &DatasetConfig::default(), 16, 0).is_err());
        let cfg = DatasetConfig {
            split: SplitConfig {
                holdout_models: HoldoutModels::Fraction(0.7),
                holdout_view_frac: 0.5,
            },
            ..Default::default()
        };
        assert!(build_dataset(&ten_meshes(), &cfg, 16, 0).is_err());
    }
}
