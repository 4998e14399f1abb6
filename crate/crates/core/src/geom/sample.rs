use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geom::mesh::TriMesh;
use crate::grid::PointCloud;

/// Draw `n` area-uniform surface points; deterministic per seed.
pub fn sample_surface(m: &TriMesh, n: usize, seed: u64) -> Result<PointCloud> {
    if n == 0 {
        return Err(Error::invalid("sample count must be positive"));
    }
    let mut cumulative = Vec::with_capacity(m.triangles.len());
    let mut total = 0.0;
    for t in 0..m.triangles.len() {
        total += m.triangle_area(t);
        cumulative.push(total);
    }
    if !(total > 0.0) {
        return Err(Error::DegenerateMesh("mesh has no positive-area triangle".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pts = Vec::with_capacity(n);
    for _ in 0..n {
        let target = rng.random::<f64>() * total;
        let t = cumulative.partition_point(|&c| c <= target).min(cumulative.len() - 1);
        let [a, b, c] = m.corners(t);
        let s = rng.random::<f64>().sqrt();
        let r = rng.random::<f64>();
        pts.push(a * (1.0 - s) + b * (s * (1.0 - r)) + c * (s * r));
    }
    Ok(PointCloud::new(pts))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Vec3;

    #[test]
    fn points_lie_on_single_triangle() {
        let m = TriMesh::new(
            vec![
                Vec3::new(0.0, 0.0, 1.0),
                Vec3::new(1.0, 0.0, 1.0),
                Vec3::new(0.0, 1.0, 1.0),
            ],
            vec![[0, 1, 2]],
        )
        .unwrap();
        let pc = sample_surface(&m, 1000, 4).unwrap();
        for p in &pc.points {
            assert!((p.z - 1.0).abs() < 1e-9);
            assert!(p.x >= -1e-12 && p.y >= -1e-12 && p.x + p.y <= 1.0 + 1e-12);
        }
        assert_eq!(pc, sample_surface(&m, 1000, 4).unwrap());
    }

    #[test]
    fn counts_follow_area_ratio() {
        // triangle areas 1.5 and 0.5
        let m = TriMesh::new(
            vec![
                Vec3::zeros(),
                Vec3::new(3.0, 0.0, 0.0),
                Vec3::new(0.0, 1.0, 0.0),
                Vec3::new(10.0, 0.0, 0.0),
                Vec3::new(11.0, 0.0, 0.0),
                Vec3::new(10.0, 1.0, 0.0),
            ],
            vec![[0, 1, 2], [3, 4, 5]],
        )
        .unwrap();
        let pc = sample_surface(&m, 10_000, 11).unwrap();
        let first = pc.points.iter().filter(|p| p.x < 5.0).count() as f64;
        // binomial sigma = sqrt(n p q)
        let sigma = (10_000.0f64 * 0.75 * 0.25).sqrt();
        assert!((first - 7500.0).abs() < 3.0 * sigma, "{first}");
    }

    #[test]
    fn zero_area_mesh_is_rejected() {
        let m = TriMesh::new(vec![Vec3::zeros(), Vec3::x(), Vec3::x() * 2.0], vec![[0, 1, 2]]).unwrap();
        assert!(sample_surface(&m, 10, 0).is_err());
    }
}
