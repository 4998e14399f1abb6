//! Bounding-volume hierarchy over triangles for ray and proximity queries.

use crate::geom::mesh::TriMesh;
use crate::grid::Vec3;

/// Determinant tolerance for the parametric ray-triangle test.
pub const DET_EPS: f64 = 1e-9;

/// Parametric ray/triangle intersection (Möller–Trumbore). Returns the
/// line parameter `t` of the hit, with no sign restriction; edges and
/// vertices count as hits.
#[inline]
pub fn intersect_line(o: &Vec3, d: &Vec3, tri: &[Vec3; 3]) -> Option<f64> {
    let e1 = tri[1] - tri[0];
    let e2 = tri[2] - tri[0];
    let p = d.cross(&e2);
    let det = e1.dot(&p);
    if det.abs() < DET_EPS * d.norm() * e1.norm() * e2.norm() {
        return None;
    }
    let inv = 1.0 / det;
    let s = o - tri[0];
    let u = s.dot(&p) * inv;
    if !(0.0..=1.0).contains(&u) {
        return None;
    }
    let q = s.cross(&e1);
    let v = d.dot(&q) * inv;
    if v < 0.0 || u + v > 1.0 {
        return None;
    }
    Some(e2.dot(&q) * inv)
}

/// True if the ray passes within `tol` (barycentric) of a triangle edge,
/// used to detect grazing hits that make parity counts unreliable.
pub fn near_edge(o: &Vec3, d: &Vec3, tri: &[Vec3; 3], tol: f64) -> bool {
    let e1 = tri[1] - tri[0];
    let e2 = tri[2] - tri[0];
    let p = d.cross(&e2);
    let det = e1.dot(&p);
    if det.abs() < DET_EPS * d.norm() * e1.norm() * e2.norm() {
        // coplanar or parallel: grazing if the line lies in the plane
        let n = e1.cross(&e2);
        return (o - tri[0]).dot(&n).abs() <= tol * n.norm();
    }
    let inv = 1.0 / det;
    let s = o - tri[0];
    let u = s.dot(&p) * inv;
    let q = s.cross(&e1);
    let v = d.dot(&q) * inv;
    let w = 1.0 - u - v;
    let inside = u >= -tol && v >= -tol && w >= -tol;
    inside && (u.abs() <= tol || v.abs() <= tol || w.abs() <= tol)
}

/// Closest point on triangle `abc` to `p`.
pub fn closest_point_on_triangle(p: &Vec3, a: &Vec3, b: &Vec3, c: &Vec3) -> Vec3 {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return *a;
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return *b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return a + ab * v;
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return *c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return a + ac * w;
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return b + (c - b) * w;
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    a + ab * v + ac * w
}

pub fn point_triangle_distance(p: &Vec3, tri: &[Vec3; 3]) -> f64 {
    (p - closest_point_on_triangle(p, &tri[0], &tri[1], &tri[2])).norm()
}

#[derive(Debug, Clone, Copy)]
struct Aabb {
    lo: Vec3,
    hi: Vec3,
}

impl Aabb {
    fn empty() -> Self {
        Self {
            lo: Vec3::repeat(f64::INFINITY),
            hi: Vec3::repeat(f64::NEG_INFINITY),
        }
    }

    fn grow(&mut self, p: &Vec3) {
        self.lo = self.lo.inf(p);
        self.hi = self.hi.sup(p);
    }

    /// Slab test; returns the entry parameter if the line segment
    /// `[t_min, t_max]` touches the box.
    #[inline]
    fn ray_entry(&self, o: &Vec3, inv_d: &Vec3, t_min: f64, t_max: f64) -> Option<f64> {
        let mut t0 = t_min;
        let mut t1 = t_max;
        for a in 0..3 {
            let mut ta = (self.lo[a] - o[a]) * inv_d[a];
            let mut tb = (self.hi[a] - o[a]) * inv_d[a];
            if ta > tb {
                std::mem::swap(&mut ta, &mut tb);
            }
            // NaN from 0 * inf means the origin lies on a slab plane of a
            // parallel axis; treat as inside that slab
            if ta.is_nan() || tb.is_nan() {
                if o[a] < self.lo[a] || o[a] > self.hi[a] {
                    return None;
                }
                continue;
            }
            t0 = t0.max(ta);
            t1 = t1.min(tb);
            if t0 > t1 * (1.0 + 4.0 * f64::EPSILON) + 1e-12 {
                return None;
            }
        }
        Some(t0)
    }

    fn dist2(&self, p: &Vec3) -> f64 {
        let mut d = 0.0;
        for a in 0..3 {
            let v = if p[a] < self.lo[a] {
                self.lo[a] - p[a]
            } else if p[a] > self.hi[a] {
                p[a] - self.hi[a]
            } else {
                0.0
            };
            d += v * v;
        }
        d
    }
}

#[derive(Debug, Clone)]
struct Node {
    bounds: Aabb,
    // leaf: first..first+count into `order`; inner: children at left, left+1
    first: usize,
    count: usize,
    left: usize,
}

/// Static BVH holding a copy of the triangle corners.
#[derive(Debug, Clone)]
pub struct Bvh {
    tris: Vec<[Vec3; 3]>,
    order: Vec<usize>,
    nodes: Vec<Node>,
}

const LEAF_SIZE: usize = 4;

impl Bvh {
    pub fn new(mesh: &TriMesh) -> Self {
        let tris: Vec<[Vec3; 3]> = (0..mesh.triangles.len()).map(|t| mesh.corners(t)).collect();
        Self::from_triangles(tris)
    }

    pub fn from_triangles(tris: Vec<[Vec3; 3]>) -> Self {
        let centroids: Vec<Vec3> = tris.iter().map(|t| (t[0] + t[1] + t[2]) / 3.0).collect();
        let mut bvh = Bvh {
            order: (0..tris.len()).collect(),
            tris,
            nodes: Vec::new(),
        };
        if !bvh.tris.is_empty() {
            bvh.nodes.push(Node {
                bounds: Aabb::empty(),
                first: 0,
                count: bvh.tris.len(),
                left: 0,
            });
            bvh.split(0, &centroids);
        }
        bvh
    }

    fn split(&mut self, node: usize, centroids: &[Vec3]) {
        let (first, count) = (self.nodes[node].first, self.nodes[node].count);
        let mut b = Aabb::empty();
        let mut cb = Aabb::empty();
        for &t in &self.order[first..first + count] {
            for p in &self.tris[t] {
                b.grow(p);
            }
            cb.grow(&centroids[t]);
        }
        self.nodes[node].bounds = b;
        if count <= LEAF_SIZE {
            return;
        }
        let ext = cb.hi - cb.lo;
        let axis = ext.imax();
        if ext[axis] <= 0.0 {
            return;
        }
        let slice = &mut self.order[first..first + count];
        let mid = count / 2;
        slice.select_nth_unstable_by(mid, |&a, &b| centroids[a][axis].total_cmp(&centroids[b][axis]));
        let left = self.nodes.len();
        self.nodes.push(Node {
            bounds: Aabb::empty(),
            first,
            count: mid,
            left: 0,
        });
        self.nodes.push(Node {
            bounds: Aabb::empty(),
            first: first + mid,
            count: count - mid,
            left: 0,
        });
        self.nodes[node].left = left;
        self.nodes[node].count = 0;
        self.split(left, centroids);
        self.split(left + 1, centroids);
    }

    pub fn len(&self) -> usize {
        self.tris.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tris.is_empty()
    }

    pub fn triangle(&self, i: usize) -> &[Vec3; 3] {
        &self.tris[i]
    }

    fn inv(d: &Vec3) -> Vec3 {
        Vec3::new(1.0 / d[0], 1.0 / d[1], 1.0 / d[2])
    }

    /// Nearest hit with `t > t_min`.
    pub fn closest_hit(&self, o: &Vec3, d: &Vec3, t_min: f64) -> Option<(f64, usize)> {
        if self.nodes.is_empty() {
            return None;
        }
        let inv_d = Self::inv(d);
        let mut best: Option<(f64, usize)> = None;
        let mut stack = vec![0usize];
        while let Some(n) = stack.pop() {
            let node = &self.nodes[n];
            let t_max = best.map_or(f64::INFINITY, |b| b.0);
            if node.bounds.ray_entry(o, &inv_d, t_min, t_max).is_none() {
                continue;
            }
            if node.count > 0 {
                for &t in &self.order[node.first..node.first + node.count] {
                    if let Some(th) = intersect_line(o, d, &self.tris[t]) {
                        if th > t_min && best.is_none_or(|b| th < b.0) {
                            best = Some((th, t));
                        }
                    }
                }
            } else {
                stack.push(node.left);
                stack.push(node.left + 1);
            }
        }
        best
    }

    /// Every intersection along the infinite line `o + t d`.
    pub fn line_hits(&self, o: &Vec3, d: &Vec3, out: &mut Vec<(f64, usize)>) {
        out.clear();
        if self.nodes.is_empty() {
            return;
        }
        let inv_d = Self::inv(d);
        let mut stack = vec![0usize];
        while let Some(n) = stack.pop() {
            let node = &self.nodes[n];
            if node
                .bounds
                .ray_entry(o, &inv_d, f64::NEG_INFINITY, f64::INFINITY)
                .is_none()
            {
                continue;
            }
            if node.count > 0 {
                for &t in &self.order[node.first..node.first + node.count] {
                    if let Some(th) = intersect_line(o, d, &self.tris[t]) {
                        out.push((th, t));
                    }
                }
            } else {
                stack.push(node.left);
                stack.push(node.left + 1);
            }
        }
    }

    /// True if the line passes near an edge of any triangle it touches.
    pub fn line_grazes(&self, o: &Vec3, d: &Vec3, tol: f64) -> bool {
        if self.nodes.is_empty() {
            return false;
        }
        let inv_d = Self::inv(d);
        let mut stack = vec![0usize];
        while let Some(n) = stack.pop() {
            let node = &self.nodes[n];
            let mut grown = node.bounds;
            let pad = Vec3::repeat(1e-9 + tol * (grown.hi - grown.lo).norm());
            grown.lo -= pad;
            grown.hi += pad;
            if grown.ray_entry(o, &inv_d, f64::NEG_INFINITY, f64::INFINITY).is_none() {
                continue;
            }
            if node.count > 0 {
                for &t in &self.order[node.first..node.first + node.count] {
                    if near_edge(o, d, &self.tris[t], tol) {
                        return true;
                    }
                }
            } else {
                stack.push(node.left);
                stack.push(node.left + 1);
            }
        }
        false
    }

    /// Distance from `p` to the nearest triangle and that triangle's index.
    pub fn nearest(&self, p: &Vec3) -> Option<(f64, usize)> {
        if self.nodes.is_empty() {
            return None;
        }
        let mut best = (f64::INFINITY, usize::MAX);
        let mut stack = vec![0usize];
        while let Some(n) = stack.pop() {
            let node = &self.nodes[n];
            if node.bounds.dist2(p) >= best.0 * best.0 {
                continue;
            }
            if node.count > 0 {
                for &t in &self.order[node.first..node.first + node.count] {
                    let d = point_triangle_distance(p, &self.tris[t]);
                    if d < best.0 {
                        best = (d, t);
                    }
                }
            } else {
                let (l, r) = (node.left, node.left + 1);
                let dl = self.nodes[l].bounds.dist2(p);
                let dr = self.nodes[r].bounds.dist2(p);
                // visit the closer child first
                if dl < dr {
                    stack.push(r);
                    stack.push(l);
                } else {
                    stack.push(l);
                    stack.push(r);
                }
            }
        }
        Some(best)
    }

    /// Indices of triangles whose bounds come within `r` of `p`.
    pub fn triangles_near(&self, p: &Vec3, r: f64, out: &mut Vec<usize>) {
        out.clear();
        if self.nodes.is_empty() {
            return;
        }
        let r2 = r * r;
        let mut stack = vec![0usize];
        while let Some(n) = stack.pop() {
            let node = &self.nodes[n];
            if node.bounds.dist2(p) > r2 {
                continue;
            }
            if node.count > 0 {
                out.extend_from_slice(&self.order[node.first..node.first + node.count]);
            } else {
                stack.push(node.left);
                stack.push(node.left + 1);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shapes;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn tri() -> [Vec3; 3] {
        [Vec3::zeros(), Vec3::x(), Vec3::y()]
    }

    #[test]
    fn hit_inside_and_on_edge() {
        let o = Vec3::new(0.25, 0.25, -1.0);
        assert!((intersect_line(&o, &Vec3::z(), &tri()).unwrap() - 1.0).abs() < 1e-12);
        // exactly on the hypotenuse
        let o = Vec3::new(0.5, 0.5, -1.0);
        assert!(intersect_line(&o, &Vec3::z(), &tri()).is_some());
        let o = Vec3::new(0.6, 0.6, -1.0);
        assert!(intersect_line(&o, &Vec3::z(), &tri()).is_none());
        // parallel
        assert!(intersect_line(&o, &Vec3::x(), &tri()).is_none());
    }

    #[test]
    fn closest_point_regions() {
        let [a, b, c] = tri();
        let p = Vec3::new(0.2, 0.2, 3.0);
        assert!((closest_point_on_triangle(&p, &a, &b, &c) - Vec3::new(0.2, 0.2, 0.0)).norm() < 1e-12);
        let p = Vec3::new(-1.0, -1.0, 0.0);
        assert_eq!(closest_point_on_triangle(&p, &a, &b, &c), a);
        let p = Vec3::new(1.0, 1.0, 0.0);
        assert!((closest_point_on_triangle(&p, &a, &b, &c) - Vec3::new(0.5, 0.5, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn bvh_matches_brute_force() {
        let m = shapes::torus(1.0, 0.3, 24, 12);
        let bvh = Bvh::new(&m);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let o = Vec3::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), -3.0);
            let d = Vec3::new(rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3), 1.0);
            let brute = (0..m.triangles.len())
                .filter_map(|t| intersect_line(&o, &d, &m.corners(t)).filter(|&th| th > 0.0))
                .fold(f64::INFINITY, f64::min);
            let got = bvh.closest_hit(&o, &d, 0.0).map_or(f64::INFINITY, |h| h.0);
            assert_eq!(got, brute);

            let p = o + d * rng.random_range(0.0..6.0);
            let brute = (0..m.triangles.len())
                .map(|t| point_triangle_distance(&p, &m.corners(t)))
                .fold(f64::INFINITY, f64::min);
            assert!((bvh.nearest(&p).unwrap().0 - brute).abs() < 1e-12);
        }
    }
}
