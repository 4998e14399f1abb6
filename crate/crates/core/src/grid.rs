//! Dense voxel containers and the cloud-to-grid embedding.
//!
//! Memory order is fixed: `index = x + nx * (y + ny * z)`, so x varies
//! fastest and z slowest. Every on-disk format relies on this order.

use nalgebra::Vector3;

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;

/// Fraction of the grid side the embedded bounding box may span.
pub const FIT_FRACTION: f64 = 0.8;
/// Grid-relative position of the embedded bounding-box center.
pub const CENTER_FRACTION: [f64; 3] = [0.5, 0.5, 0.45];

/// Unordered 3D points, meters, usually in the camera frame.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Vec3>,
}

impl PointCloud {
    pub fn new(points: Vec<Vec3>) -> Self {
        Self { points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Axis-aligned bounds, `None` for an empty cloud.
    pub fn bounds(&self) -> Option<(Vec3, Vec3)> {
        let first = *self.points.first()?;
        Some(
            self.points
                .iter()
                .fold((first, first), |(lo, hi), p| (lo.inf(p), hi.sup(p))),
        )
    }

    pub fn centroid(&self) -> Option<Vec3> {
        if self.points.is_empty() {
            return None;
        }
        let sum: Vec3 = self.points.iter().sum();
        Some(sum / self.points.len() as f64)
    }

    pub fn extend(&mut self, other: &PointCloud) {
        self.points.extend_from_slice(&other.points);
    }

    pub fn check_finite(&self) -> Result<()> {
        if self.points.iter().all(|p| p.iter().all(|c| c.is_finite())) {
            Ok(())
        } else {
            Err(Error::NonFinite)
        }
    }
}

/// Uniform world-to-grid map: `grid = scale * world + offset`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmbedTransform {
    pub scale: f64,
    pub offset: Vec3,
}

impl EmbedTransform {
    pub fn identity() -> Self {
        Self {
            scale: 1.0,
            offset: Vec3::zeros(),
        }
    }

    pub fn apply(&self, p: &Vec3) -> Vec3 {
        p * self.scale + self.offset
    }

    pub fn invert(&self, g: &Vec3) -> Vec3 {
        (g - self.offset) / self.scale
    }

    /// The same embedding expressed on a grid refined by `factor` per axis.
    pub fn refined(&self, factor: usize) -> Self {
        let f = factor as f64;
        Self {
            scale: self.scale * f,
            offset: self.offset * f,
        }
    }

    /// World-space edge length of one grid voxel.
    pub fn voxel_size(&self) -> f64 {
        1.0 / self.scale
    }

    /// World position of the corner of voxel (0,0,0).
    pub fn origin(&self) -> Vec3 {
        -self.offset / self.scale
    }

    pub(crate) fn from_frame(voxel_size: f64, origin: Vec3) -> Self {
        let scale = 1.0 / voxel_size;
        Self {
            scale,
            offset: -origin * scale,
        }
    }
}

/// Dense binary voxel grid with physical placement metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyGrid {
    dims: [usize; 3],
    data: Vec<bool>,
    pub voxel_size: f64,
    pub origin: Vec3,
}

impl OccupancyGrid {
    pub fn new(dims: [usize; 3]) -> Self {
        Self::with_frame(dims, 1.0, Vec3::zeros())
    }

    pub fn cube(side: usize) -> Self {
        Self::new([side; 3])
    }

    pub fn with_frame(dims: [usize; 3], voxel_size: f64, origin: Vec3) -> Self {
        assert!(dims.iter().all(|&d| d > 0), "grid dims must be positive");
        assert!(voxel_size > 0.0, "voxel size must be positive");
        Self {
            dims,
            data: vec![false; dims[0] * dims[1] * dims[2]],
            voxel_size,
            origin,
        }
    }

    /// Grid placed according to an embedding transform.
    pub fn in_transform(dims: [usize; 3], t: &EmbedTransform) -> Self {
        Self::with_frame(dims, t.voxel_size(), t.origin())
    }

    pub fn from_data(dims: [usize; 3], data: Vec<bool>) -> Result<Self> {
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::invalid("grid dims must be positive"));
        }
        if data.len() != dims[0] * dims[1] * dims[2] {
            return Err(Error::invalid(format!(
                "grid data length {} does not match dims {:?}",
                data.len(),
                dims
            )));
        }
        Ok(Self {
            dims,
            data,
            voxel_size: 1.0,
            origin: Vec3::zeros(),
        })
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [bool] {
        &mut self.data
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dims[0] * (y + self.dims[1] * z)
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> [usize; 3] {
        let x = idx % self.dims[0];
        let yz = idx / self.dims[0];
        [x, yz % self.dims[1], yz / self.dims[1]]
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> bool {
        self.data[self.index(x, y, z)]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, z: usize, v: bool) {
        let i = self.index(x, y, z);
        self.data[i] = v;
    }

    pub fn occupied_count(&self) -> usize {
        self.data.iter().filter(|&&v| v).count()
    }

    pub fn occupied(&self) -> impl Iterator<Item = [usize; 3]> + '_ {
        self.data
            .iter()
            .enumerate()
            .filter(|(_, &v)| v)
            .map(|(i, _)| self.coords(i))
    }

    /// The transform whose grid frame matches this grid's placement.
    pub fn transform(&self) -> EmbedTransform {
        EmbedTransform::from_frame(self.voxel_size, self.origin)
    }

    pub fn same_dims(&self, other: &OccupancyGrid) -> Result<()> {
        if self.dims == other.dims {
            Ok(())
        } else {
            Err(Error::DimMismatch {
                expected: self.dims,
                got: other.dims,
            })
        }
    }

    /// Union in place; both grids must share dims.
    pub fn union_with(&mut self, other: &OccupancyGrid) -> Result<()> {
        self.same_dims(other)?;
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a |= b;
        }
        Ok(())
    }

    /// Values as 0/1 reals, same order.
    pub fn to_weighted(&self) -> WeightedGrid {
        WeightedGrid {
            dims: self.dims,
            data: self.data.iter().map(|&v| if v { 1.0 } else { 0.0 }).collect(),
        }
    }

    /// Copy with `pad` empty voxels added on every side.
    pub fn padded(&self, pad: usize) -> OccupancyGrid {
        let d = self.dims;
        let nd = [d[0] + 2 * pad, d[1] + 2 * pad, d[2] + 2 * pad];
        let mut out = OccupancyGrid::with_frame(
            nd,
            self.voxel_size,
            self.origin - Vec3::repeat(pad as f64 * self.voxel_size),
        );
        for [x, y, z] in self.occupied() {
            out.set(x + pad, y + pad, z + pad, true);
        }
        out
    }
}

/// Dense real-valued voxel grid in the same memory order.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedGrid {
    pub dims: [usize; 3],
    pub data: Vec<f64>,
}

impl WeightedGrid {
    pub fn new(dims: [usize; 3], value: f64) -> Self {
        Self {
            dims,
            data: vec![value; dims[0] * dims[1] * dims[2]],
        }
    }

    pub fn from_data(dims: [usize; 3], data: Vec<f64>) -> Result<Self> {
        if data.len() != dims[0] * dims[1] * dims[2] {
            return Err(Error::invalid("weighted grid data length mismatch"));
        }
        Ok(Self { dims, data })
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dims[0] * (y + self.dims[1] * z)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> f64 {
        self.data[self.index(x, y, z)]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, z: usize, v: f64) {
        let i = self.index(x, y, z);
        self.data[i] = v;
    }

    /// Binarize: voxel occupied iff value >= threshold.
    pub fn threshold(&self, threshold: f64) -> OccupancyGrid {
        let data = self.data.iter().map(|&v| v >= threshold).collect();
        OccupancyGrid::from_data(self.dims, data).expect("dims are consistent")
    }

    /// Copy with `pad` voxels of `fill` added on every side.
    pub fn padded(&self, pad: usize, fill: f64) -> WeightedGrid {
        let d = self.dims;
        let nd = [d[0] + 2 * pad, d[1] + 2 * pad, d[2] + 2 * pad];
        let mut out = WeightedGrid::new(nd, fill);
        for z in 0..d[2] {
            for y in 0..d[1] {
                for x in 0..d[0] {
                    out.set(x + pad, y + pad, z + pad, self.get(x, y, z));
                }
            }
        }
        out
    }
}

/// Grid coordinate to voxel index with half-open cells; coordinates
/// within one voxel past the max face clamp into the last voxel.
#[inline]
fn voxel_of(coord: &Vec3, dims: [usize; 3]) -> Option<[usize; 3]> {
    let mut out = [0usize; 3];
    for a in 0..3 {
        let c = coord[a];
        if !(c >= 0.0) || c > dims[a] as f64 {
            return None;
        }
        out[a] = (c.floor() as usize).min(dims[a] - 1);
    }
    Some(out)
}

/// Outcome of voxelizing a cloud under a fixed transform.
#[derive(Debug, Clone)]
pub struct EmbedStats {
    pub inside: usize,
    pub outside: usize,
}

/// How points that fall outside the grid are handled.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutOfRange {
    /// Snap to the nearest boundary voxel.
    Clamp,
    /// Ignore the point.
    Drop,
}

/// Voxelize `pc` into a `dims` grid using a given transform.
pub fn embed_with_transform(
    pc: &PointCloud,
    t: &EmbedTransform,
    dims: [usize; 3],
    policy: OutOfRange,
) -> (OccupancyGrid, EmbedStats) {
    let mut grid = OccupancyGrid::in_transform(dims, t);
    let mut stats = EmbedStats { inside: 0, outside: 0 };
    for p in &pc.points {
        let g = t.apply(p);
        match voxel_of(&g, dims) {
            Some([x, y, z]) => {
                stats.inside += 1;
                grid.set(x, y, z, true);
            }
            None => {
                stats.outside += 1;
                if policy == OutOfRange::Clamp && g.iter().all(|c| c.is_finite()) {
                    let mut v = [0usize; 3];
                    for a in 0..3 {
                        v[a] = g[a].floor().clamp(0.0, (dims[a] - 1) as f64) as usize;
                    }
                    grid.set(v[0], v[1], v[2], true);
                }
            }
        }
    }
    (grid, stats)
}

/// The canonical transform for a cloud: its bounding box is scaled to fit
/// `0.8 * side` voxels and its center placed at `(0.5, 0.5, 0.45) * side`.
pub fn canonical_transform(pc: &PointCloud, grid_side: usize) -> Result<EmbedTransform> {
    if pc.is_empty() {
        return Err(Error::EmptyCloud);
    }
    pc.check_finite()?;
    if grid_side < 8 {
        return Err(Error::invalid(format!("grid side {grid_side} < 8")));
    }
    let (lo, hi) = pc.bounds().expect("non-empty");
    let extent = (hi - lo).max();
    let g = grid_side as f64;
    let scale = if extent > 0.0 { FIT_FRACTION * g / extent } else { 1.0 };
    let center = (lo + hi) * 0.5;
    let target = Vec3::new(CENTER_FRACTION[0] * g, CENTER_FRACTION[1] * g, CENTER_FRACTION[2] * g);
    Ok(EmbedTransform {
        scale,
        offset: target - center * scale,
    })
}

/// Embed a cloud into a `side^3` grid with the canonical transform.
pub fn embed_pointcloud(pc: &PointCloud, grid_side: usize) -> Result<(OccupancyGrid, EmbedTransform)> {
    let t = canonical_transform(pc, grid_side)?;
    let (grid, _) = embed_with_transform(pc, &t, [grid_side; 3], OutOfRange::Clamp);
    Ok((grid, t))
}

/// Max-pool downsampling where source index `i` maps to `floor(i * out / in)`.
pub fn downsample(g: &OccupancyGrid, out_side: usize) -> Result<OccupancyGrid> {
    if out_side == 0 {
        return Err(Error::invalid("downsample target side must be positive"));
    }
    let d = g.dims();
    if d.iter().any(|&n| out_side > n) {
        return Err(Error::invalid(format!("cannot downsample {d:?} to {out_side}")));
    }
    let mut out = OccupancyGrid::with_frame([out_side; 3], g.voxel_size * d[0] as f64 / out_side as f64, g.origin);
    for [x, y, z] in g.occupied() {
        out.set(x * out_side / d[0], y * out_side / d[1], z * out_side / d[2], true);
    }
    Ok(out)
}

/// One point per occupied voxel at the voxel center, in world coordinates.
pub fn grid_to_pointcloud(g: &OccupancyGrid, t: &EmbedTransform) -> PointCloud {
    PointCloud::new(
        g.occupied()
            .map(|[x, y, z]| t.invert(&Vec3::new(x as f64 + 0.5, y as f64 + 0.5, z as f64 + 0.5)))
            .collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cloud(points: &[[f64; 3]]) -> PointCloud {
        PointCloud::new(points.iter().map(|p| Vec3::new(p[0], p[1], p[2])).collect())
    }

    #[test]
    fn single_point_lands_on_canonical_center() {
        let (g, t) = embed_pointcloud(&cloud(&[[0.3, -0.2, 0.9]]), 40).unwrap();
        assert_eq!(g.occupied_count(), 1);
        assert!(g.get(20, 20, 18));
        assert_eq!(t.scale, 1.0);
    }

    #[test]
    fn cube_corners_span_32_voxels() {
        let mut pts = Vec::new();
        for &x in &[0.0, 0.1] {
            for &y in &[0.0, 0.1] {
                for &z in &[0.0, 0.1] {
                    pts.push([x, y, z]);
                }
            }
        }
        let (g, _) = embed_pointcloud(&cloud(&pts), 40).unwrap();
        let occ: Vec<_> = g.occupied().collect();
        assert_eq!(occ.len(), 8);
        let mut max_sep = 0;
        for a in &occ {
            for b in &occ {
                for k in 0..3 {
                    max_sep = max_sep.max(a[k].abs_diff(b[k]));
                }
            }
        }
        assert_eq!(max_sep, 32);
        // x/y span 4..36, z span 2..34
        assert!(g.get(4, 4, 2) && g.get(36, 36, 34));
    }

    #[test]
    fn empty_and_nonfinite_clouds_are_rejected() {
        assert!(matches!(
            embed_pointcloud(&PointCloud::default(), 40),
            Err(Error::EmptyCloud)
        ));
        assert!(matches!(
            embed_pointcloud(&cloud(&[[f64::NAN, 0.0, 0.0]]), 40),
            Err(Error::NonFinite)
        ));
        assert!(embed_pointcloud(&cloud(&[[0.0; 3]]), 4).is_err());
    }

    #[test]
    fn flat_cloud_uses_largest_nonzero_extent() {
        let (g, t) = embed_pointcloud(&cloud(&[[0.0, 0.0, 0.0], [0.5, 0.0, 0.0]]), 20).unwrap();
        assert!((t.scale - 16.0 / 0.5).abs() < 1e-12);
        assert_eq!(g.occupied_count(), 2);
    }

    #[test]
    fn transform_round_trip() {
        let t = EmbedTransform {
            scale: 37.5,
            offset: Vec3::new(1.0, -2.0, 3.5),
        };
        let p = Vec3::new(0.123, -4.5, 9.0);
        let back = t.invert(&t.apply(&p));
        assert!((back - p).norm() <= 1e-9 * p.norm());
    }

    #[test]
    fn downsample_examples() {
        let g = OccupancyGrid::cube(256);
        assert_eq!(downsample(&g, 40).unwrap().occupied_count(), 0);

        let mut g = OccupancyGrid::cube(8);
        g.set(0, 0, 0, true);
        let d = downsample(&g, 4).unwrap();
        assert_eq!(d.occupied().collect::<Vec<_>>(), vec![[0, 0, 0]]);

        let mut g = OccupancyGrid::cube(256);
        g.set(255, 255, 255, true);
        let d = downsample(&g, 40).unwrap();
        assert_eq!(d.occupied().collect::<Vec<_>>(), vec![[39, 39, 39]]);

        assert!(downsample(&g, 0).is_err());
        assert!(downsample(&g, 300).is_err());
    }

    #[test]
    fn grid_to_pointcloud_uses_voxel_centers() {
        let g = OccupancyGrid::cube(4);
        assert!(grid_to_pointcloud(&g, &EmbedTransform::identity()).is_empty());
        let mut g = OccupancyGrid::cube(4);
        g.set(1, 2, 3, true);
        let pc = grid_to_pointcloud(&g, &EmbedTransform::identity());
        assert_eq!(pc.points, vec![Vec3::new(1.5, 2.5, 3.5)]);
    }

    #[test]
    fn dense_cloud_round_trip_within_half_diagonal() {
        // lattice cloud on [0, 0.2]^3 with 5 mm spacing
        let mut pts = Vec::new();
        for i in 0..=40 {
            for j in 0..=40 {
                for k in 0..=40 {
                    if (i + j + k) % 7 == 0 {
                        pts.push(Vec3::new(i as f64, j as f64, k as f64) * 0.005);
                    }
                }
            }
        }
        let pc = PointCloud::new(pts);
        let (g, t) = embed_pointcloud(&pc, 24).unwrap();
        let out = grid_to_pointcloud(&g, &t);
        let half_diag = 3f64.sqrt() * 0.5 * t.voxel_size();
        for q in &out.points {
            let nearest = pc.points.iter().map(|p| (p - q).norm()).fold(f64::INFINITY, f64::min);
            assert!(nearest <= half_diag + 1e-12);
        }
    }

    proptest! {
        #[test]
        fn embed_is_scale_invariant(pts in prop::collection::vec(prop::array::uniform3(-1.0f64..1.0), 1..40)) {
            let pc = cloud(&pts);
            let doubled = PointCloud::new(pc.points.iter().map(|p| p * 2.0).collect());
            let (a, _) = embed_pointcloud(&pc, 24).unwrap();
            let (b, _) = embed_pointcloud(&doubled, 24).unwrap();
            prop_assert_eq!(a.data(), b.data());
        }

        #[test]
        fn downsample_is_monotone(
            seed in prop::collection::vec(0usize..512, 0..30),
            extra in prop::collection::vec(0usize..512, 0..30),
        ) {
            let mut a = OccupancyGrid::cube(8);
            for &i in &seed { a.data_mut()[i] = true; }
            let mut b = a.clone();
            for &i in &extra { b.data_mut()[i] = true; }
            let da = downsample(&a, 3).unwrap();
            let db = downsample(&b, 3).unwrap();
            for (x, y) in da.data().iter().zip(db.data()) {
                prop_assert!(!*x || *y);
            }
        }
    }
}
