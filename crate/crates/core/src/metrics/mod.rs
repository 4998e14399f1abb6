//! Completion quality: voxel Jaccard, sampled mean Hausdorff distance and
//! geodesic-descriptor divergence.

pub mod geodesic;
pub mod gmm;

use std::collections::BTreeMap;
use std::f64::consts::LN_2;

use rayon::prelude::*;

use crate::datagen::Split;
use crate::error::{Error, Result};
use crate::formats::Table;
use crate::geom::voxelize::fitted_transform;
use crate::geom::{sample_surface, solid_voxelize_in_frame, Bvh, TriMesh};
use crate::grid::OccupancyGrid;

pub use geodesic::{geodesic_descriptor, geodesic_divergence, GeodesicDescriptor};

/// Default voxelization side for mesh Jaccard.
pub const MESH_JACCARD_SIDE: usize = 80;

/// Published full-scale results for the cnn method on training views
/// (Jaccard, Hausdorff mm, geodesic divergence). Reference only.
pub const REFERENCE_OURS_TRAIN_VIEWS: (f64, f64, f64) = (0.7771, 3.6, 0.0867);

/// Intersection over union; two empty grids count as identical.
pub fn jaccard(a: &OccupancyGrid, b: &OccupancyGrid) -> Result<f64> {
    a.same_dims(b)?;
    let (mut inter, mut union) = (0usize, 0usize);
    for (&x, &y) in a.data().iter().zip(b.data()) {
        inter += (x && y) as usize;
        union += (x || y) as usize;
    }
    Ok(if union == 0 { 1.0 } else { inter as f64 / union as f64 })
}

/// Jaccard of two solid voxelizations in the frame of their joint bounding box.
pub fn mesh_jaccard(a: &TriMesh, b: &TriMesh, side: usize) -> Result<f64> {
    let (la, ha) = a.bounds().filter(|_| !a.is_empty()).ok_or(Error::EmptyMesh)?;
    let (lb, hb) = b.bounds().filter(|_| !b.is_empty()).ok_or(Error::EmptyMesh)?;
    let t = fitted_transform(la.inf(&lb), ha.sup(&hb), side)?;
    let ga = solid_voxelize_in_frame(a, [side; 3], &t)?;
    let gb = solid_voxelize_in_frame(b, [side; 3], &t)?;
    jaccard(&ga, &gb)
}

/// Mean distance from `n` area-uniform samples on `a` to the surface of `b`.
pub fn directed_mean_distance(a: &TriMesh, b: &TriMesh, n: usize, seed: u64) -> Result<f64> {
    if b.is_empty() {
        return Err(Error::EmptyMesh);
    }
    let pts = sample_surface(a, n, seed)?;
    let bvh = Bvh::new(b);
    let sum: f64 = pts
        .points
        .par_iter()
        .map(|p| bvh.nearest(p).map_or(f64::INFINITY, |(d, _)| d))
        .collect::<Vec<_>>()
        .iter()
        .sum();
    Ok(sum / n as f64)
}

/// Mean of the two directed mean distances, in millimeters for meshes in
/// meters. Both directions use the same seed, so argument order does not
/// change the value.
pub fn hausdorff_symmetric(a: &TriMesh, b: &TriMesh, n_samples: usize, seed: u64) -> Result<f64> {
    if n_samples < 100 {
        return Err(Error::invalid("use at least 100 samples per direction"));
    }
    let ab = directed_mean_distance(a, b, n_samples, seed)?;
    let ba = directed_mean_distance(b, a, n_samples, seed)?;
    Ok(1000.0 * 0.5 * (ab + ba))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricReport {
    pub jaccard: f64,
    pub hausdorff_mm: f64,
    pub geodesic_js: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricConfig {
    pub jaccard_side: usize,
    pub hausdorff_samples: usize,
    pub geodesic_samples: usize,
    pub gmm_components: usize,
    pub seed: u64,
}

impl Default for MetricConfig {
    fn default() -> Self {
        Self {
            jaccard_side: MESH_JACCARD_SIDE,
            hausdorff_samples: 2000,
            geodesic_samples: 200,
            gmm_components: 3,
            seed: 0,
        }
    }
}

/// All three measures for one completion. An empty completion scores
/// Jaccard 0, an undefined (NaN) distance and the maximal divergence.
pub fn score(completion: &TriMesh, truth: &TriMesh, cfg: &MetricConfig) -> Result<MetricReport> {
    if completion.is_empty() {
        return Ok(MetricReport {
            jaccard: 0.0,
            hausdorff_mm: f64::NAN,
            geodesic_js: LN_2,
        });
    }
    Ok(MetricReport {
        jaccard: mesh_jaccard(completion, truth, cfg.jaccard_side)?,
        hausdorff_mm: hausdorff_symmetric(completion, truth, cfg.hausdorff_samples, cfg.seed)?,
        geodesic_js: geodesic_divergence(completion, truth, cfg.geodesic_samples, cfg.gmm_components, cfg.seed)?,
    })
}

/// One completed view to score. `grid_jaccard`, when present, replaces the
/// mesh-voxelization Jaccard.
#[derive(Debug, Clone)]
pub struct SuiteItem {
    pub method: String,
    pub split: Split,
    pub label: String,
    pub completion: TriMesh,
    pub truth: TriMesh,
    pub grid_jaccard: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairRow {
    pub method: String,
    pub split: Split,
    pub label: String,
    pub report: MetricReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellRow {
    pub method: String,
    pub split: Split,
    pub count: usize,
    /// Means over finite values of each column.
    pub mean: MetricReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteReport {
    pub pairs: Vec<PairRow>,
    pub cells: Vec<CellRow>,
}

impl SuiteReport {
    pub fn cell(&self, method: &str, split: Split) -> Option<&CellRow> {
        self.cells.iter().find(|c| c.method == method && c.split == split)
    }

    /// Cell summary rows, then per-pair rows, in one table.
    pub fn to_table(&self) -> Table {
        let mut t = Table::new(&[
            "kind",
            "method",
            "split",
            "label",
            "n",
            "jaccard",
            "hausdorff_mm",
            "geodesic_js",
        ]);
        let f = |v: f64| format!("{v:.6}");
        for c in &self.cells {
            t.push(vec![
                "cell".into(),
                c.method.clone(),
                c.split.to_string(),
                "-".into(),
                c.count.to_string(),
                f(c.mean.jaccard),
                f(c.mean.hausdorff_mm),
                f(c.mean.geodesic_js),
            ]);
        }
        for p in &self.pairs {
            t.push(vec![
                "pair".into(),
                p.method.clone(),
                p.split.to_string(),
                p.label.clone(),
                "1".into(),
                f(p.report.jaccard),
                f(p.report.hausdorff_mm),
                f(p.report.geodesic_js),
            ]);
        }
        t
    }
}

fn finite_mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v
        .filter(|x| x.is_finite())
        .fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        s / n as f64
    }
}

/// Per-(method, split) means of already scored pairs, in method then
/// split order.
pub fn summarize(pairs: Vec<PairRow>) -> SuiteReport {
    let mut groups: BTreeMap<(String, Split), Vec<MetricReport>> = BTreeMap::new();
    for p in &pairs {
        groups.entry((p.method.clone(), p.split)).or_default().push(p.report);
    }
    let cells = groups
        .into_iter()
        .map(|((method, split), r)| CellRow {
            method,
            split,
            count: r.len(),
            mean: MetricReport {
                jaccard: finite_mean(r.iter().map(|m| m.jaccard)),
                hausdorff_mm: finite_mean(r.iter().map(|m| m.hausdorff_mm)),
                geodesic_js: finite_mean(r.iter().map(|m| m.geodesic_js)),
            },
        })
        .collect();
    SuiteReport { pairs, cells }
}

/// Score every item and aggregate per (method, split).
pub fn evaluate_suite(items: &[SuiteItem], cfg: &MetricConfig) -> Result<SuiteReport> {
    if items.is_empty() {
        return Err(Error::invalid("nothing to evaluate"));
    }
    let pairs: Vec<PairRow> = items
        .par_iter()
        .map(|it| {
            let mut report = score(&it.completion, &it.truth, cfg)?;
            if let Some(j) = it.grid_jaccard {
                report.jaccard = j;
            }
            Ok(PairRow {
                method: it.method.clone(),
                split: it.split,
                label: it.label.clone(),
                report,
            })
        })
        .collect::<Result<_>>()?;
    Ok(summarize(pairs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Vec3;
    use crate::shapes;
    use proptest::prelude::*;

    fn grid_with(cells: &[usize]) -> OccupancyGrid {
        let mut g = OccupancyGrid::cube(3);
        for &c in cells {
            g.data_mut()[c] = true;
        }
        g
    }

    #[test]
    fn jaccard_counting() {
        let a = grid_with(&[1, 2]);
        assert_eq!(jaccard(&a, &a).unwrap(), 1.0);
        assert_eq!(jaccard(&a, &grid_with(&[5])).unwrap(), 0.0);
        assert_eq!(jaccard(&a, &grid_with(&[2, 3])).unwrap(), 1.0 / 3.0);
        assert_eq!(jaccard(&grid_with(&[]), &grid_with(&[])).unwrap(), 1.0);
        assert!(jaccard(&a, &OccupancyGrid::cube(2)).is_err());
    }

    proptest! {
        #[test]
        fn jaccard_symmetric_and_monotone(
            a in prop::collection::vec(any::<bool>(), 27),
            b in prop::collection::vec(any::<bool>(), 27),
            extra in 0usize..27,
        ) {
            let ga = OccupancyGrid::from_data([3; 3], a).unwrap();
            let gb = OccupancyGrid::from_data([3; 3], b).unwrap();
            let j = jaccard(&ga, &gb).unwrap();
            prop_assert_eq!(j, jaccard(&gb, &ga).unwrap());
            let (mut ga2, mut gb2) = (ga.clone(), gb.clone());
            ga2.data_mut()[extra] = true;
            gb2.data_mut()[extra] = true;
            prop_assert!(jaccard(&ga2, &gb2).unwrap() >= j);
        }
    }

    #[test]
    fn mesh_jaccard_cases() {
        let c = shapes::cuboid(Vec3::repeat(1.0));
        assert_eq!(mesh_jaccard(&c, &c, 40).unwrap(), 1.0);
        let far = c.translated(Vec3::new(10.0, 0.0, 0.0));
        assert_eq!(mesh_jaccard(&c, &far, 40).unwrap(), 0.0);
        // half-edge shift: compare against the voxel-count oracle in the same frame
        let shifted = c.translated(Vec3::new(0.5, 0.0, 0.0));
        let j = mesh_jaccard(&c, &shifted, 40).unwrap();
        let (lo, hi) = (c.bounds().unwrap().0, shifted.bounds().unwrap().1);
        let t = fitted_transform(lo, hi, 40).unwrap();
        let ga = solid_voxelize_in_frame(&c, [40; 3], &t).unwrap();
        let gb = solid_voxelize_in_frame(&shifted, [40; 3], &t).unwrap();
        let inter = ga.data().iter().zip(gb.data()).filter(|(a, b)| **a && **b).count();
        let union = ga.data().iter().zip(gb.data()).filter(|(a, b)| **a || **b).count();
        assert_eq!(j, inter as f64 / union as f64);
        assert!((j - 1.0 / 3.0).abs() < 0.08, "{j}");
    }

    fn square(z: f64) -> TriMesh {
        TriMesh::new(
            vec![
                Vec3::new(0.0, 0.0, z),
                Vec3::new(1.0, 0.0, z),
                Vec3::new(1.0, 1.0, z),
                Vec3::new(0.0, 1.0, z),
            ],
            vec![[0, 1, 2], [0, 2, 3]],
        )
        .unwrap()
    }

    #[test]
    fn hausdorff_cases() {
        let a = square(0.0);
        assert!(hausdorff_symmetric(&a, &a, 500, 1).unwrap() < 1e-9);
        let h = hausdorff_symmetric(&a, &square(0.005), 500, 1).unwrap();
        assert!((h - 5.0).abs() < 1e-6, "{h}");
        let m = shapes::torus(0.06, 0.02, 24, 12);
        let t = 0.01;
        let d = hausdorff_symmetric(&m, &m.translated(Vec3::new(t, 0.0, 0.0)), 1000, 2).unwrap();
        assert!(d > 0.0 && d <= 1000.0 * t, "{d}");
        assert_eq!(
            hausdorff_symmetric(&m, &a, 300, 5).unwrap(),
            hausdorff_symmetric(&a, &m, 300, 5).unwrap()
        );
        assert!(hausdorff_symmetric(&a, &a, 10, 1).is_err());
    }

    #[test]
    fn perfect_completion_row() {
        let m = shapes::uv_sphere(0.05, 24, 12);
        let items = vec![SuiteItem {
            method: "oracle".into(),
            split: Split::TrainView,
            label: "s".into(),
            completion: m.clone(),
            truth: m.clone(),
            grid_jaccard: None,
        }];
        let r = evaluate_suite(&items, &MetricConfig::default()).unwrap();
        let c = r.cell("oracle", Split::TrainView).unwrap();
        assert_eq!(c.mean.jaccard, 1.0);
        assert!(c.mean.hausdorff_mm < 1e-9);
        assert!(c.mean.geodesic_js < 1e-6);
    }

    #[test]
    fn cells_are_hand_means() {
        let row = |label: &str, j: f64, h: f64, g: f64| PairRow {
            method: "m".into(),
            split: Split::HoldoutView,
            label: label.into(),
            report: MetricReport {
                jaccard: j,
                hausdorff_mm: h,
                geodesic_js: g,
            },
        };
        let r = summarize(vec![row("a", 0.5, 2.0, 0.1), row("b", 0.25, 4.0, 0.3)]);
        let c = r.cell("m", Split::HoldoutView).unwrap();
        assert_eq!(c.count, 2);
        assert_eq!(c.mean.jaccard, 0.375);
        assert_eq!(c.mean.hausdorff_mm, 3.0);
        assert!((c.mean.geodesic_js - 0.2).abs() < 1e-15);
        let tsv = r.to_table().to_tsv();
        assert!(tsv.starts_with("kind\tmethod\tsplit"));
        assert_eq!(tsv.lines().count(), 4);
    }
}
