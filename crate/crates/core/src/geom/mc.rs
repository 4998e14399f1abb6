//! Marching cubes over a dense weighted grid.
//!
//! Sample `(i, j, k)` sits at the voxel center `(i + 0.5, j + 0.5, k + 0.5)`
//! in grid coordinates. Values above the isolevel are inside. Ambiguous
//! faces follow the fixed 256-entry table with no asymptotic decider.

use std::collections::HashMap;

use crate::geom::mc_tables::TRI_TABLE;
use crate::geom::mesh::TriMesh;
use crate::grid::{EmbedTransform, Vec3, WeightedGrid};

const CORNERS: [[usize; 3]; 8] = [
    [0, 0, 0],
    [1, 0, 0],
    [1, 1, 0],
    [0, 1, 0],
    [0, 0, 1],
    [1, 0, 1],
    [1, 1, 1],
    [0, 1, 1],
];

const EDGES: [(usize, usize); 12] = [
    (0, 1),
    (1, 2),
    (2, 3),
    (3, 0),
    (4, 5),
    (5, 6),
    (6, 7),
    (7, 4),
    (0, 4),
    (1, 5),
    (2, 6),
    (3, 7),
];

/// Extract the isosurface in grid coordinates. Grids with a side below 2
/// or without a crossing yield an empty mesh.
pub fn marching_cubes(f: &WeightedGrid, isolevel: f64) -> TriMesh {
    let [nx, ny, nz] = f.dims;
    let mut mesh = TriMesh::default();
    if nx < 2 || ny < 2 || nz < 2 {
        return mesh;
    }
    // (grid point index, axis) -> vertex id
    let mut edge_vertex: HashMap<usize, usize> = HashMap::new();
    let point_index = |p: [usize; 3]| p[0] + nx * (p[1] + ny * p[2]);

    for z in 0..nz - 1 {
        for y in 0..ny - 1 {
            for x in 0..nx - 1 {
                let mut vals = [0.0; 8];
                let mut case = 0usize;
                for (c, off) in CORNERS.iter().enumerate() {
                    let v = f.get(x + off[0], y + off[1], z + off[2]);
                    vals[c] = v;
                    if !(v > isolevel) {
                        case |= 1 << c;
                    }
                }
                if case == 0 || case == 255 {
                    continue;
                }
                let mut ids = [usize::MAX; 12];
                let row = &TRI_TABLE[case];
                for &e in row.iter().take_while(|&&e| e >= 0) {
                    let e = e as usize;
                    if ids[e] != usize::MAX {
                        continue;
                    }
                    let (a, b) = EDGES[e];
                    let pa = [x + CORNERS[a][0], y + CORNERS[a][1], z + CORNERS[a][2]];
                    let pb = [x + CORNERS[b][0], y + CORNERS[b][1], z + CORNERS[b][2]];
                    let (lo, hi, vlo, vhi) = if point_index(pa) < point_index(pb) {
                        (pa, pb, vals[a], vals[b])
                    } else {
                        (pb, pa, vals[b], vals[a])
                    };
                    let axis = (0..3).find(|&k| lo[k] != hi[k]).expect("edge spans one axis");
                    let key = point_index(lo) * 3 + axis;
                    ids[e] = *edge_vertex.entry(key).or_insert_with(|| {
                        let t = ((isolevel - vlo) / (vhi - vlo)).clamp(0.0, 1.0);
                        let mut p = Vec3::new(lo[0] as f64, lo[1] as f64, lo[2] as f64);
                        p[axis] += t;
                        mesh.vertices.push(p + Vec3::repeat(0.5));
                        mesh.vertices.len() - 1
                    });
                }
                for tri in row.chunks(3).take_while(|t| t[0] >= 0) {
                    let (a, b, c) = (ids[tri[0] as usize], ids[tri[1] as usize], ids[tri[2] as usize]);
                    mesh.triangles.push([a, b, c]);
                }
            }
        }
    }
    mesh
}

/// Marching cubes with the result mapped back through `t` to world
/// coordinates. The grid is padded by one voxel of `outside` so the surface
/// closes at the boundary.
pub fn marching_cubes_closed(f: &WeightedGrid, isolevel: f64, outside: f64, t: &EmbedTransform) -> TriMesh {
    let padded = f.padded(1, outside);
    let m = marching_cubes(&padded, isolevel);
    m.map_vertices(|v| t.invert(&(v - Vec3::repeat(1.0))))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::OccupancyGrid;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn single_voxel() -> WeightedGrid {
        let mut g = WeightedGrid::new([5; 3], 0.0);
        g.set(2, 2, 2, 1.0);
        g
    }

    #[test]
    fn constant_grid_yields_empty_mesh() {
        assert!(marching_cubes(&WeightedGrid::new([4; 3], 0.0), 0.5).is_empty());
        assert!(marching_cubes(&WeightedGrid::new([4; 3], 1.0), 0.5).is_empty());
        assert!(marching_cubes(&WeightedGrid::new([1, 4, 4], 1.0), 0.5).is_empty());
    }

    #[test]
    fn single_voxel_is_a_closed_sphere() {
        let m = marching_cubes(&single_voxel(), 0.5);
        assert!(m.is_closed());
        assert_eq!(m.euler_characteristic(), 2);
        assert!(m.signed_volume() > 0.0, "surface must face outward");
        // octahedron with vertices half a voxel from the center
        assert_eq!(m.vertices.len(), 6);
        assert_eq!(m.triangles.len(), 8);
    }

    #[test]
    fn sphere_area() {
        let r = 10.0;
        let mut g = WeightedGrid::new([32; 3], 0.0);
        let c = 16.0;
        for z in 0..32 {
            for y in 0..32 {
                for x in 0..32 {
                    let p = Vec3::new(x as f64 + 0.5, y as f64 + 0.5, z as f64 + 0.5);
                    if (p - Vec3::repeat(c)).norm() <= r {
                        g.set(x, y, z, 1.0);
                    }
                }
            }
        }
        let m = marching_cubes(&g, 0.5);
        assert!(m.is_closed());
        assert_eq!(m.euler_characteristic(), 2);
        let area = m.surface_area();
        let expected = 4.0 * PI * r * r;
        assert!((area - expected).abs() / expected < 0.15, "{area} vs {expected}");
    }

    #[test]
    fn world_mapping_round_trips() {
        let t = EmbedTransform {
            scale: 10.0,
            offset: Vec3::new(1.0, 2.0, 3.0),
        };
        let m = marching_cubes_closed(&single_voxel(), 0.5, 0.0, &t);
        let center = t.invert(&Vec3::repeat(2.5));
        for v in &m.vertices {
            assert!(((v - center).norm() - 0.05).abs() < 1e-12);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn binary_grids_mesh_watertight(bits in prop::collection::vec(any::<bool>(), 216)) {
            // 6^3 interior padded with empty voxels so nothing touches the boundary
            let inner = OccupancyGrid::from_data([6; 3], bits).unwrap();
            let g = inner.padded(1).to_weighted();
            let m = marching_cubes(&g, 0.5);
            for (_, n) in m.edge_use() {
                prop_assert_eq!(n, 2);
            }
        }
    }
}
