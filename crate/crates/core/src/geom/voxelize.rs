//! Solid voxelization: parity ray casting for the interior plus a surface
//! dilation of half a voxel diagonal.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geom::bvh::Bvh;
use crate::geom::mesh::TriMesh;
use crate::grid::{EmbedTransform, OccupancyGrid, Vec3};

/// Surface dilation radius in voxels.
pub const SURFACE_RADIUS: f64 = 0.866_025_403_784_438_6;

const GRAZE_TOL: f64 = 1e-7;
const JITTER: f64 = 1e-6;

/// Frame placing the mesh bounding box centered in a `side^3` grid with an
/// empty one-voxel margin (dilated surface voxels never reach it).
pub fn fitted_transform(lo: Vec3, hi: Vec3, side: usize) -> Result<EmbedTransform> {
    if side < 4 {
        return Err(Error::invalid(format!("voxelization side {side} < 4")));
    }
    let extent = (hi - lo).max();
    let usable = side as f64 - 3.0;
    let scale = if extent > 0.0 { usable / extent } else { 1.0 };
    let center = (lo + hi) * 0.5;
    let mid = Vec3::repeat(side as f64 * 0.5);
    Ok(EmbedTransform {
        scale,
        offset: mid - center * scale,
    })
}

/// Voxelize a mesh into its own fitted `side^3` frame.
pub fn solid_voxelize(m: &TriMesh, side: usize) -> Result<OccupancyGrid> {
    let (lo, hi) = m.bounds().filter(|_| !m.is_empty()).ok_or(Error::EmptyMesh)?;
    let t = fitted_transform(lo, hi, side)?;
    solid_voxelize_in_frame(m, [side; 3], &t)
}

/// Voxelize a mesh into the grid frame given by `t`. Parts of the mesh
/// outside the grid are ignored; interior classification still accounts
/// for them.
pub fn solid_voxelize_in_frame(m: &TriMesh, dims: [usize; 3], t: &EmbedTransform) -> Result<OccupancyGrid> {
    if m.is_empty() {
        return Err(Error::EmptyMesh);
    }
    let local = m.map_vertices(|v| t.apply(v));
    let bvh = Bvh::new(&local);
    let mut grid = OccupancyGrid::in_transform(dims, t);
    if m.is_closed() {
        fill_interior(&bvh, &mut grid);
    } else {
        log::warn!("mesh is not closed; voxelizing the surface only");
    }
    dilate_surface(&local, &mut grid);
    Ok(grid)
}

/// Parity of line crossings below each voxel center along one +x row.
fn fill_row(bvh: &Bvh, y: f64, z: f64, row: &mut [bool], hits: &mut Vec<(f64, usize)>) {
    let d = Vec3::x();
    let mut o = Vec3::new(0.0, y, z);
    for attempt in 0..8 {
        if !bvh.line_grazes(&o, &d, GRAZE_TOL) {
            break;
        }
        let k = (attempt + 1) as f64;
        o = Vec3::new(0.0, y + JITTER * k, z + JITTER * 0.618 * k);
    }
    bvh.line_hits(&o, &d, hits);
    if hits.is_empty() {
        return;
    }
    hits.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut h = 0;
    let mut inside = false;
    for (i, cell) in row.iter_mut().enumerate() {
        let xc = i as f64 + 0.5;
        while h < hits.len() && hits[h].0 < xc {
            inside = !inside;
            h += 1;
        }
        *cell = inside;
    }
}

fn fill_interior(bvh: &Bvh, grid: &mut OccupancyGrid) {
    let [nx, ny, _] = grid.dims();
    grid.data_mut()
        .par_chunks_mut(nx * ny)
        .enumerate()
        .for_each(|(z, slab)| {
            let mut hits = Vec::new();
            for (y, row) in slab.chunks_mut(nx).enumerate() {
                fill_row(bvh, y as f64 + 0.5, z as f64 + 0.5, row, &mut hits);
            }
        });
}

fn dilate_surface(local: &TriMesh, grid: &mut OccupancyGrid) {
    let dims = grid.dims();
    let r = SURFACE_RADIUS;
    for t in 0..local.triangles.len() {
        let tri = local.corners(t);
        let lo = tri[0].inf(&tri[1]).inf(&tri[2]);
        let hi = tri[0].sup(&tri[1]).sup(&tri[2]);
        let mut range = [(0usize, 0usize); 3];
        let mut empty = false;
        for a in 0..3 {
            let first = (lo[a] - r - 0.5).ceil().max(0.0);
            let last = (hi[a] + r - 0.5).floor().min(dims[a] as f64 - 1.0);
            if !(first <= last) {
                empty = true;
                break;
            }
            range[a] = (first as usize, last as usize);
        }
        if empty {
            continue;
        }
        for z in range[2].0..=range[2].1 {
            for y in range[1].0..=range[1].1 {
                for x in range[0].0..=range[0].1 {
                    if grid.get(x, y, z) {
                        continue;
                    }
                    let c = Vec3::new(x as f64 + 0.5, y as f64 + 0.5, z as f64 + 0.5);
                    if crate::geom::bvh::point_triangle_distance(&c, &tri) <= r {
                        grid.set(x, y, z, true);
                    }
                }
            }
        }
    }
}

/// Point-in-mesh by majority over three ray directions; independent of
/// the row-parity path above.
pub fn point_inside(bvh: &Bvh, p: &Vec3) -> bool {
    let dirs = [
        Vec3::new(0.577, 0.331, 0.747).normalize(),
        Vec3::new(-0.281, 0.912, -0.298).normalize(),
        Vec3::new(0.123, -0.456, 0.881).normalize(),
    ];
    let mut hits = Vec::new();
    let votes = dirs
        .iter()
        .filter(|d| {
            bvh.line_hits(p, d, &mut hits);
            hits.iter().filter(|h| h.0 > 0.0).count() % 2 == 1
        })
        .count();
    votes >= 2
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shapes;
    use std::f64::consts::PI;

    #[test]
    fn empty_mesh_is_an_error() {
        assert!(matches!(solid_voxelize(&TriMesh::default(), 8), Err(Error::EmptyMesh)));
    }

    #[test]
    fn central_cube_matches_parity_oracle() {
        // cube faces pass through the centers of voxels 2 and 5
        let cube = shapes::cuboid(Vec3::repeat(3.0)).translated(Vec3::repeat(4.0));
        let g = solid_voxelize_in_frame(&cube, [8; 3], &EmbedTransform::identity()).unwrap();
        let bvh = Bvh::new(&cube);
        let mut oracle = 0;
        for z in 0..8 {
            for y in 0..8 {
                for x in 0..8 {
                    let c = Vec3::new(x as f64 + 0.5, y as f64 + 0.5, z as f64 + 0.5);
                    let on_surface = bvh.nearest(&c).unwrap().0 < 1e-12;
                    if on_surface || point_inside(&bvh, &c) {
                        oracle += 1;
                        assert!(g.get(x, y, z));
                    }
                }
            }
        }
        assert_eq!(oracle, 64);
        assert_eq!(g.occupied_count(), 64);
    }

    #[test]
    fn sphere_volume() {
        let m = shapes::uv_sphere(1.0, 64, 32);
        let side = 32;
        let g = solid_voxelize(&m, side).unwrap();
        let r = (side as f64 - 3.0) / 2.0;
        // the dilated shell adds voxels whose centers are within the
        // half-diagonal of the surface
        let dilated = 4.0 / 3.0 * PI * (r + SURFACE_RADIUS).powi(3);
        let n = g.occupied_count() as f64;
        assert!((n - dilated).abs() / dilated < 0.10, "{n} vs {dilated}");

        let bvh = Bvh::new(&m.map_vertices(|v| g.transform().apply(v)));
        let inside = g
            .occupied()
            .filter(|&[x, y, z]| point_inside(&bvh, &Vec3::new(x as f64 + 0.5, y as f64 + 0.5, z as f64 + 0.5)))
            .count() as f64;
        let ball = 4.0 / 3.0 * PI * r.powi(3);
        assert!((inside - ball).abs() / ball < 0.10, "{inside} vs {ball}");
        // margin stays empty
        assert!(g.occupied().all(|c| c.iter().all(|&i| i > 0 && i < side - 1)));
    }

    #[test]
    fn open_mesh_voxelizes_surface_only() {
        let mut m = shapes::cuboid(Vec3::repeat(1.0));
        m.triangles.pop();
        let g = solid_voxelize(&m, 16).unwrap();
        let closed = solid_voxelize(&shapes::cuboid(Vec3::repeat(1.0)), 16).unwrap();
        assert!(g.occupied_count() < closed.occupied_count());
        assert!(g.occupied_count() > 0);
    }

    #[test]
    fn superset_of_parity_interior() {
        let m = shapes::torus(1.0, 0.4, 20, 10);
        let g = solid_voxelize(&m, 20).unwrap();
        let bvh = Bvh::new(&m.map_vertices(|v| g.transform().apply(v)));
        for z in 0..20 {
            for y in 0..20 {
                for x in 0..20 {
                    let c = Vec3::new(x as f64 + 0.5, y as f64 + 0.5, z as f64 + 0.5);
                    if point_inside(&bvh, &c) {
                        assert!(g.get(x, y, z), "{x} {y} {z}");
                    }
                }
            }
        }
    }
}
