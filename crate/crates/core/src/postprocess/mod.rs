//! From a network output and the observed cloud to a mesh: either marching
//! cubes on the output directly, or upsampling, merging with the observed
//! points, gap filling and constrained smoothing at the observed density.

pub mod qp;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geom::{marching_cubes_closed, TriMesh};
use crate::grid::{embed_with_transform, grid_to_pointcloud, EmbedTransform, OccupancyGrid, OutOfRange, PointCloud};
use crate::spatial::PointIndex;

pub use qp::{qp_smooth, QpConfig, QpSolution};

pub const MAX_DENSITY_RATIO: usize = 4;
/// Every tenth point takes part in the nearest-neighbor estimate.
pub const DENSITY_SAMPLE_FRACTION: f64 = 0.1;
pub const DENSITY_SEED: u64 = 0x5eed;
/// Share of observed points allowed to fall outside the high-resolution grid.
pub const MAX_OUTSIDE_FRACTION: f64 = 0.05;
pub const PARTIAL_SMOOTHING_ITERS: usize = 3;

fn mean_nn_distance(pc: &PointCloud) -> Result<f64> {
    if pc.len() < 10 {
        return Err(Error::invalid(format!(
            "{} points are too few for a density estimate",
            pc.len()
        )));
    }
    pc.check_finite()?;
    let index = PointIndex::new(&pc.points);
    let k = ((pc.len() as f64 * DENSITY_SAMPLE_FRACTION).round() as usize).max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(DENSITY_SEED);
    let mut picks = sample(&mut rng, pc.len(), k).into_vec();
    picks.sort_unstable();
    let sum: f64 = picks
        .iter()
        .map(|&i| index.nearest_k(&pc.points[i], 2).get(1).map_or(0.0, |n| n.0))
        .sum();
    Ok(sum / k as f64)
}

/// Upsampling factor that brings the network cloud to the observed density.
pub fn density_ratio(observed: &PointCloud, cnn_cloud: &PointCloud) -> Result<usize> {
    let obs = mean_nn_distance(observed)?;
    let cnn = mean_nn_distance(cnn_cloud)?;
    let r = cnn / obs;
    if !r.is_finite() {
        return Ok(MAX_DENSITY_RATIO);
    }
    Ok((r.round() as usize).clamp(1, MAX_DENSITY_RATIO))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpsampleWeighting {
    /// Corner weight `s * (D - L1)`: near corners dominate.
    Complement,
    /// Corner weight `s * L1`, the wording taken literally.
    Literal,
}

pub const UPSAMPLE_WEIGHTING: UpsampleWeighting = UpsampleWeighting::Complement;

pub fn upsample(g: &OccupancyGrid, d_ratio: usize) -> Result<OccupancyGrid> {
    upsample_with(g, d_ratio, UPSAMPLE_WEIGHTING)
}

/// Refine `g` by `d_ratio` per axis. Each new voxel inside a cube of eight
/// source voxel centers is occupied when its corner score is nonnegative;
/// new voxels in the outer half-voxel shell copy their source voxel.
/// Positions are integers in units of `1 / (2 d_ratio)` source voxels, so
/// the scores are exact.
pub fn upsample_with(g: &OccupancyGrid, d_ratio: usize, w: UpsampleWeighting) -> Result<OccupancyGrid> {
    if d_ratio == 0 {
        return Err(Error::invalid("upsampling ratio must be at least 1"));
    }
    let d = d_ratio;
    let dims = g.dims();
    let hi = [dims[0] * d, dims[1] * d, dims[2] * d];
    let mut out = OccupancyGrid::with_frame(hi, g.voxel_size / d as f64, g.origin);
    if d == 1 {
        out.data_mut().copy_from_slice(g.data());
        return Ok(out);
    }
    let unit = 2 * d as i64;
    // per axis and new index: Some((lower corner, offset in units)) inside a cube
    let cube = |n: usize, j: usize| -> Option<(usize, i64)> {
        let u = 2 * j as i64 + 1;
        let lo_center = d as i64;
        let hi_center = (2 * n as i64 - 1) * d as i64;
        if n < 2 || u < lo_center || u > hi_center {
            return None;
        }
        let i0 = (((u - lo_center) / unit) as usize).min(n - 2);
        Some((i0, u - (2 * i0 as i64 + 1) * d as i64))
    };
    let diameter = 3 * unit;
    for z in 0..hi[2] {
        for y in 0..hi[1] {
            for x in 0..hi[0] {
                let occ = match (cube(dims[0], x), cube(dims[1], y), cube(dims[2], z)) {
                    (Some(cx), Some(cy), Some(cz)) => {
                        let mut score = 0i64;
                        for c in 0..8 {
                            let (bx, by, bz) = (c & 1, (c >> 1) & 1, (c >> 2) & 1);
                            let l1 = (cx.1 - bx as i64 * unit).abs()
                                + (cy.1 - by as i64 * unit).abs()
                                + (cz.1 - bz as i64 * unit).abs();
                            let s = if g.get(cx.0 + bx, cy.0 + by, cz.0 + bz) { 1 } else { -1 };
                            score += s * match w {
                                UpsampleWeighting::Complement => diameter - l1,
                                UpsampleWeighting::Literal => l1,
                            };
                        }
                        score >= 0
                    }
                    _ => g.get(x / d, y / d, z / d),
                };
                if occ {
                    out.set(x, y, z, true);
                }
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Source {
    FromCnn,
    FromObserved,
    Filled,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MergeState {
    pub d_ratio: usize,
    pub grid: OccupancyGrid,
    /// Provenance per voxel; `None` exactly where the grid is empty.
    pub source_mask: Vec<Option<Source>>,
    /// Observed points clamped onto the grid boundary.
    pub clamped: usize,
}

impl MergeState {
    pub fn count(&self, s: Source) -> usize {
        self.source_mask.iter().filter(|m| **m == Some(s)).count()
    }
}

/// Union of the upsampled output with the voxelized observed cloud, `t`
/// being the high-resolution frame. Observed voxels win ties.
pub fn merge(
    upsampled: &OccupancyGrid,
    observed: &PointCloud,
    t: &EmbedTransform,
    d_ratio: usize,
) -> Result<MergeState> {
    if observed.is_empty() {
        return Err(Error::EmptyCloud);
    }
    observed.check_finite()?;
    let (obs, stats) = embed_with_transform(observed, t, upsampled.dims(), OutOfRange::Clamp);
    if stats.outside as f64 > MAX_OUTSIDE_FRACTION * observed.len() as f64 {
        return Err(Error::invalid(format!(
            "{} of {} observed points fall outside the merge grid",
            stats.outside,
            observed.len()
        )));
    }
    let mut grid = upsampled.clone();
    let source_mask = upsampled
        .data()
        .iter()
        .zip(obs.data())
        .map(|(&u, &o)| match (u, o) {
            (_, true) => Some(Source::FromObserved),
            (true, false) => Some(Source::FromCnn),
            _ => None,
        })
        .collect();
    grid.union_with(&obs)?;
    Ok(MergeState {
        d_ratio,
        grid,
        source_mask,
        clamped: stats.outside,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GapFill {
    /// Only the gap after the first occupied voxel of each column.
    First,
    /// Every gap between consecutive occupied voxels of each column.
    All,
}

pub fn fill_gaps(ms: MergeState) -> MergeState {
    fill_gaps_with(ms, GapFill::First)
}

/// Close short gaps along each z column: when the next occupied voxel is at
/// distance `g` with `1 < g < d_ratio + 1`, the voxels between are filled.
pub fn fill_gaps_with(mut ms: MergeState, mode: GapFill) -> MergeState {
    let [nx, ny, nz] = ms.grid.dims();
    let limit = ms.d_ratio + 1;
    for y in 0..ny {
        for x in 0..nx {
            let occupied: Vec<usize> = (0..nz).filter(|&z| ms.grid.get(x, y, z)).collect();
            let pairs = match mode {
                GapFill::First => occupied.len().min(2).saturating_sub(1),
                GapFill::All => occupied.len().saturating_sub(1),
            };
            for k in 0..pairs {
                let (a, b) = (occupied[k], occupied[k + 1]);
                let gap = b - a;
                if gap > 1 && gap < limit {
                    for z in a + 1..b {
                        let i = ms.grid.index(x, y, z);
                        ms.grid.data_mut()[i] = true;
                        ms.source_mask[i] = Some(Source::Filled);
                    }
                }
            }
        }
    }
    ms
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReconstructConfig {
    pub gap_fill: GapFill,
    pub qp: QpConfig,
}

impl Default for ReconstructConfig {
    fn default() -> Self {
        Self {
            gap_fill: GapFill::First,
            qp: QpConfig::default(),
        }
    }
}

/// Marching cubes on a binary grid, in world coordinates.
pub fn fast_mesh(g: &OccupancyGrid, t: &EmbedTransform) -> TriMesh {
    marching_cubes_closed(&g.to_weighted(), 0.5, 0.0, t)
}

/// The Partial baseline surface: marching cubes plus light Laplacian smoothing.
pub fn partial_mesh(g: &OccupancyGrid, t: &EmbedTransform) -> TriMesh {
    fast_mesh(g, t).laplacian_smooth(PARTIAL_SMOOTHING_ITERS)
}

/// The stages of a detailed reconstruction, kept for inspection.
#[derive(Debug, Clone)]
pub struct Detailed {
    pub merge: MergeState,
    pub qp: QpSolution,
    pub transform: EmbedTransform,
    pub mesh: TriMesh,
}

pub fn reconstruct_detailed(
    cnn_out: &OccupancyGrid,
    observed: &PointCloud,
    t: &EmbedTransform,
    cfg: &ReconstructConfig,
) -> Result<Detailed> {
    let cnn_cloud = grid_to_pointcloud(cnn_out, t);
    let d = density_ratio(observed, &cnn_cloud)?;
    let up = upsample(cnn_out, d)?;
    let hi_t = t.refined(d);
    let ms = fill_gaps_with(merge(&up, observed, &hi_t, d)?, cfg.gap_fill);
    let qp = qp::smooth(&ms.grid, &cfg.qp)?;
    let mesh = marching_cubes_closed(&qp.f, 0.0, -1.0, &hi_t);
    Ok(Detailed {
        merge: ms,
        qp,
        transform: hi_t,
        mesh,
    })
}

/// Fast path: marching cubes on the network grid. Detailed path: the full
/// upsample, merge, fill and smooth chain, then marching cubes at level 0.
pub fn reconstruct(
    cnn_out: &OccupancyGrid,
    observed: &PointCloud,
    t: &EmbedTransform,
    fast: bool,
    cfg: &ReconstructConfig,
) -> Result<TriMesh> {
    if fast {
        Ok(fast_mesh(cnn_out, t))
    } else {
        Ok(reconstruct_detailed(cnn_out, observed, t, cfg)?.mesh)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Vec3;

    fn lattice(n: usize, spacing: f64) -> PointCloud {
        let mut pts = Vec::new();
        for z in 0..n {
            for y in 0..n {
                for x in 0..n {
                    pts.push(Vec3::new(x as f64, y as f64, z as f64) * spacing);
                }
            }
        }
        PointCloud::new(pts)
    }

    #[test]
    fn density_ratio_examples() {
        let a = lattice(6, 0.001);
        assert_eq!(density_ratio(&a, &a).unwrap(), 1);
        assert_eq!(density_ratio(&lattice(12, 0.001), &lattice(6, 0.002)).unwrap(), 2);
        assert_eq!(density_ratio(&lattice(12, 0.001), &lattice(6, 0.007)).unwrap(), 4);
        assert!(density_ratio(&lattice(2, 0.001), &a).is_err());
    }

    /// Score of a new voxel center `p` (in source voxel units) against every
    /// source center of the 2x2x2 cube at the origin, as exact rationals with
    /// denominator `2d`.
    fn oracle_cube(src: &OccupancyGrid, d: usize, w: UpsampleWeighting) -> OccupancyGrid {
        let n = 2 * d;
        let mut out = OccupancyGrid::new([n; 3]);
        let den = 2 * d as i64;
        for z in 0..n {
            for y in 0..n {
                for x in 0..n {
                    let p = [x, y, z].map(|j| 2 * j as i64 + 1);
                    let inside = p.iter().all(|&c| c >= d as i64 && c <= 3 * d as i64);
                    let occ = if d == 1 || !inside {
                        src.get(x / d, y / d, z / d)
                    } else {
                        let mut score = 0;
                        for [i, j, k] in src_corners() {
                            let center = [i, j, k].map(|c| (2 * c as i64 + 1) * d as i64);
                            let l1: i64 = (0..3).map(|a| (p[a] - center[a]).abs()).sum();
                            let s = if src.get(i, j, k) { 1 } else { -1 };
                            score += s * match w {
                                UpsampleWeighting::Complement => 3 * den - l1,
                                UpsampleWeighting::Literal => l1,
                            };
                        }
                        score >= 0
                    };
                    out.set(x, y, z, occ);
                }
            }
        }
        out
    }

    fn src_corners() -> Vec<[usize; 3]> {
        (0..8).map(|c| [c & 1, (c >> 1) & 1, (c >> 2) & 1]).collect()
    }

    #[test]
    fn upsample_matches_oracle_on_every_cube_pattern() {
        for pattern in 0..256usize {
            let src = OccupancyGrid::from_data([2; 3], (0..8).map(|i| pattern >> i & 1 == 1).collect()).unwrap();
            for d in 1..=3 {
                for w in [UpsampleWeighting::Complement, UpsampleWeighting::Literal] {
                    let got = upsample_with(&src, d, w).unwrap();
                    assert_eq!(
                        got.data(),
                        oracle_cube(&src, d, w).data(),
                        "pattern {pattern} d {d} {w:?}"
                    );
                }
            }
        }
    }

    #[test]
    fn upsample_examples() {
        let mut g = OccupancyGrid::cube(4);
        g.set(1, 2, 3, true);
        g.set(0, 0, 0, true);
        let same = upsample(&g, 1).unwrap();
        assert_eq!(same.data(), g.data());
        let full = OccupancyGrid::from_data([2; 3], vec![true; 8]).unwrap();
        assert_eq!(upsample(&full, 3).unwrap().occupied_count(), 216);
        // half-space keeps a planar boundary at the doubled position
        let mut half = OccupancyGrid::cube(4);
        for z in 0..4 {
            for y in 0..4 {
                for x in 0..2 {
                    half.set(x, y, z, true);
                }
            }
        }
        let up = upsample(&half, 2).unwrap();
        for z in 0..8 {
            for y in 0..8 {
                for x in 0..8 {
                    assert_eq!(up.get(x, y, z), x < 4);
                }
            }
        }
        // the literal weighting inverts the interior of the same boundary
        let lit = upsample_with(&half, 2, UpsampleWeighting::Literal).unwrap();
        assert!(!lit.get(3, 4, 4) && lit.get(4, 4, 4));
        assert!(upsample(&half, 0).is_err());
    }

    fn column_state(pattern: &[bool], d_ratio: usize) -> MergeState {
        let grid = OccupancyGrid::from_data([1, 1, pattern.len()], pattern.to_vec()).unwrap();
        let source_mask = pattern.iter().map(|&b| b.then_some(Source::FromCnn)).collect();
        MergeState {
            d_ratio,
            grid,
            source_mask,
            clamped: 0,
        }
    }

    fn oracle_column(p: &[bool], d_ratio: usize, mode: GapFill) -> Vec<bool> {
        let mut out = p.to_vec();
        let mut start = match p.iter().position(|&b| b) {
            Some(s) => s,
            None => return out,
        };
        loop {
            let Some(off) = p[start + 1..].iter().position(|&b| b) else {
                break;
            };
            let next = start + 1 + off;
            if next - start > 1 && next - start <= d_ratio {
                out[start + 1..next].iter_mut().for_each(|v| *v = true);
            }
            if mode == GapFill::First {
                break;
            }
            start = next;
        }
        out
    }

    #[test]
    fn fill_gaps_examples_and_oracle() {
        let f = |p: &[u8], d| {
            let ms = fill_gaps(column_state(&p.iter().map(|&b| b == 1).collect::<Vec<_>>(), d));
            ms.grid.data().iter().map(|&b| b as u8).collect::<Vec<_>>()
        };
        assert_eq!(f(&[1, 0, 0, 1], 3), vec![1, 1, 1, 1]);
        assert_eq!(f(&[1, 0, 0, 0, 1], 3), vec![1, 0, 0, 0, 1]);
        assert_eq!(f(&[0, 0, 0], 3), vec![0, 0, 0]);
        for bits in 0..64usize {
            let p: Vec<bool> = (0..6).map(|i| bits >> i & 1 == 1).collect();
            for d in 1..=4 {
                for mode in [GapFill::First, GapFill::All] {
                    let ms = fill_gaps_with(column_state(&p, d), mode);
                    let expect = oracle_column(&p, d, mode);
                    assert_eq!(ms.grid.data(), &expect[..], "{p:?} d {d} {mode:?}");
                    for i in 0..6 {
                        let tag = if p[i] {
                            Some(Source::FromCnn)
                        } else if expect[i] {
                            Some(Source::Filled)
                        } else {
                            None
                        };
                        assert_eq!(ms.source_mask[i], tag);
                    }
                }
            }
        }
    }

    #[test]
    fn merge_cases() {
        let t = EmbedTransform::identity();
        let mut up = OccupancyGrid::cube(8);
        up.set(1, 1, 1, true);
        up.set(1, 2, 1, true);
        let one = PointCloud::new(vec![Vec3::new(5.5, 5.5, 5.5)]);
        let ms = merge(&up, &one, &t, 2).unwrap();
        assert_eq!(ms.count(Source::FromObserved), 1);
        assert_eq!(ms.source_mask[ms.grid.index(5, 5, 5)], Some(Source::FromObserved));
        assert_eq!(ms.grid.occupied_count(), 3);
        let overlap = PointCloud::new(vec![Vec3::new(1.2, 1.7, 1.5)]);
        let ms = merge(&up, &overlap, &t, 2).unwrap();
        assert_eq!(ms.grid.occupied_count(), 2);
        assert_eq!(ms.source_mask[ms.grid.index(1, 1, 1)], Some(Source::FromObserved));
        assert_eq!(ms.count(Source::FromCnn), 1);
        let mut far: Vec<Vec3> = (0..19).map(|i| Vec3::new(0.5 + i as f64 * 0.1, 3.0, 3.0)).collect();
        far.push(Vec3::new(100.0, 0.0, 0.0));
        assert_eq!(merge(&up, &PointCloud::new(far.clone()), &t, 2).unwrap().clamped, 1);
        far.push(Vec3::new(-100.0, 0.0, 0.0));
        assert!(merge(&up, &PointCloud::new(far), &t, 2).is_err());
    }
}
