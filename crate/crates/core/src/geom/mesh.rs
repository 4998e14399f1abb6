use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::grid::Vec3;

/// Indexed triangle mesh, meters.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TriMesh {
    pub vertices: Vec<Vec3>,
    pub triangles: Vec<[usize; 3]>,
}

impl TriMesh {
    /// Validating constructor.
    pub fn new(vertices: Vec<Vec3>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        let m = Self { vertices, triangles };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.vertices.len();
        if !self.vertices.iter().all(|v| v.iter().all(|c| c.is_finite())) {
            return Err(Error::NonFinite);
        }
        for (i, t) in self.triangles.iter().enumerate() {
            if t.iter().any(|&v| v >= n) {
                return Err(Error::DegenerateMesh(format!(
                    "triangle {i} references a missing vertex"
                )));
            }
            if t[0] == t[1] || t[1] == t[2] || t[0] == t[2] {
                return Err(Error::DegenerateMesh(format!("triangle {i} repeats a vertex")));
            }
        }
        Ok(())
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    pub fn corners(&self, t: usize) -> [Vec3; 3] {
        let [a, b, c] = self.triangles[t];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    pub fn bounds(&self) -> Option<(Vec3, Vec3)> {
        let first = *self.vertices.first()?;
        Some(
            self.vertices
                .iter()
                .fold((first, first), |(lo, hi), p| (lo.inf(p), hi.sup(p))),
        )
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.corners(t);
        (b - a).cross(&(c - a)).norm() * 0.5
    }

    pub fn surface_area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.triangle_area(t)).sum()
    }

    /// Signed enclosed volume; positive when faces wind counter-clockwise
    /// seen from outside.
    pub fn signed_volume(&self) -> f64 {
        self.triangles
            .iter()
            .map(|&[a, b, c]| self.vertices[a].dot(&self.vertices[b].cross(&self.vertices[c])) / 6.0)
            .sum()
    }

    /// Center and radius of a bounding sphere centered on the bbox.
    pub fn bounding_sphere(&self) -> Option<(Vec3, f64)> {
        let (lo, hi) = self.bounds()?;
        let c = (lo + hi) * 0.5;
        let r = self.vertices.iter().map(|v| (v - c).norm()).fold(0.0, f64::max);
        Some((c, r))
    }

    /// Undirected edge -> number of incident triangles.
    pub fn edge_use(&self) -> HashMap<(usize, usize), usize> {
        let mut edges = HashMap::new();
        for t in &self.triangles {
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                *edges.entry((a.min(b), a.max(b))).or_insert(0) += 1;
            }
        }
        edges
    }

    /// Every edge shared by exactly two triangles.
    pub fn is_closed(&self) -> bool {
        !self.triangles.is_empty() && self.edge_use().values().all(|&n| n == 2)
    }

    /// V - E + F over the vertices referenced by triangles.
    pub fn euler_characteristic(&self) -> i64 {
        let mut used = vec![false; self.vertices.len()];
        for t in &self.triangles {
            for &v in t {
                used[v] = true;
            }
        }
        let v = used.iter().filter(|&&u| u).count() as i64;
        let e = self.edge_use().len() as i64;
        v - e + self.triangles.len() as i64
    }

    pub fn translated(&self, d: Vec3) -> TriMesh {
        TriMesh {
            vertices: self.vertices.iter().map(|v| v + d).collect(),
            triangles: self.triangles.clone(),
        }
    }

    pub fn scaled(&self, s: f64) -> TriMesh {
        TriMesh {
            vertices: self.vertices.iter().map(|v| v * s).collect(),
            triangles: self.triangles.clone(),
        }
    }

    /// Apply an arbitrary point map to every vertex.
    pub fn map_vertices(&self, f: impl Fn(&Vec3) -> Vec3) -> TriMesh {
        TriMesh {
            vertices: self.vertices.iter().map(f).collect(),
            triangles: self.triangles.clone(),
        }
    }

    /// Concatenate two meshes.
    pub fn merged(&self, other: &TriMesh) -> TriMesh {
        let base = self.vertices.len();
        let mut out = self.clone();
        out.vertices.extend_from_slice(&other.vertices);
        out.triangles
            .extend(other.triangles.iter().map(|t| [t[0] + base, t[1] + base, t[2] + base]));
        out
    }

    pub fn flipped(&self) -> TriMesh {
        TriMesh {
            vertices: self.vertices.clone(),
            triangles: self.triangles.iter().map(|t| [t[0], t[2], t[1]]).collect(),
        }
    }

    /// Vertex adjacency lists from triangle edges.
    pub fn vertex_neighbors(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.vertices.len()];
        for t in &self.triangles {
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                adj[a].push(b);
                adj[b].push(a);
            }
        }
        for n in &mut adj {
            n.sort_unstable();
            n.dedup();
        }
        adj
    }

    /// Uniform-weight Laplacian vertex smoothing.
    pub fn laplacian_smooth(&self, iterations: usize) -> TriMesh {
        let adj = self.vertex_neighbors();
        let mut verts = self.vertices.clone();
        for _ in 0..iterations {
            verts = verts
                .iter()
                .enumerate()
                .map(|(i, v)| {
                    if adj[i].is_empty() {
                        *v
                    } else {
                        adj[i].iter().map(|&j| verts[j]).sum::<Vec3>() / adj[i].len() as f64
                    }
                })
                .collect();
        }
        TriMesh {
            vertices: verts,
            triangles: self.triangles.clone(),
        }
    }

    /// Sub-mesh of the connected component with the most triangles, with
    /// unused vertices removed.
    pub fn largest_component(&self) -> TriMesh {
        if self.triangles.is_empty() {
            return self.clone();
        }
        let mut parent: Vec<usize> = (0..self.vertices.len()).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        for t in &self.triangles {
            let r0 = find(&mut parent, t[0]);
            for &v in &t[1..] {
                let r = find(&mut parent, v);
                if r != r0 {
                    let (lo, hi) = (r.min(r0), r.max(r0));
                    parent[hi] = lo;
                }
            }
            // re-find so the root stays canonical
            let _ = find(&mut parent, t[0]);
        }
        let mut counts: HashMap<usize, usize> = HashMap::new();
        let roots: Vec<usize> = self.triangles.iter().map(|t| find(&mut parent, t[0])).collect();
        for &r in &roots {
            *counts.entry(r).or_insert(0) += 1;
        }
        let best = counts
            .iter()
            .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
            .map(|(&r, _)| r)
            .expect("non-empty");
        let mut remap = vec![usize::MAX; self.vertices.len()];
        let mut out = TriMesh::default();
        for (t, &r) in self.triangles.iter().zip(&roots) {
            if r != best {
                continue;
            }
            let mut nt = [0; 3];
            for k in 0..3 {
                let v = t[k];
                if remap[v] == usize::MAX {
                    remap[v] = out.vertices.len();
                    out.vertices.push(self.vertices[v]);
                }
                nt[k] = remap[v];
            }
            out.triangles.push(nt);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shapes;

    #[test]
    fn validation_rejects_bad_indices() {
        let v = vec![Vec3::zeros(), Vec3::x(), Vec3::y()];
        assert!(TriMesh::new(v.clone(), vec![[0, 1, 3]]).is_err());
        assert!(TriMesh::new(v.clone(), vec![[0, 1, 1]]).is_err());
        assert!(TriMesh::new(v, vec![[0, 1, 2]]).is_ok());
    }

    #[test]
    fn box_is_closed_and_outward() {
        let m = shapes::cuboid(Vec3::new(1.0, 2.0, 3.0));
        assert!(m.is_closed());
        assert_eq!(m.euler_characteristic(), 2);
        assert!((m.signed_volume() - 6.0).abs() < 1e-12);
        assert!((m.surface_area() - 22.0).abs() < 1e-12);
    }

    #[test]
    fn largest_component_picks_bigger_piece() {
        let a = shapes::cuboid(Vec3::repeat(1.0));
        let b = shapes::uv_sphere(1.0, 8, 4).translated(Vec3::new(5.0, 0.0, 0.0));
        let m = a.merged(&b);
        let big = m.largest_component();
        assert_eq!(big.triangles.len(), b.triangles.len());
        assert!(big.is_closed());
    }
}
