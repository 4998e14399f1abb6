//! Geodesic shape descriptor: per-sample mean edge-graph geodesic
//! distance, normalized by its maximum and summarized by a mixture.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geom::TriMesh;
use crate::metrics::gmm::{fit_gmm, js_divergence, Gmm};

#[derive(Debug, Clone, PartialEq)]
pub struct GeodesicDescriptor {
    pub values: Vec<f64>,
    pub gmm: Gmm,
}

#[derive(Clone, Copy, PartialEq)]
struct Item(f64, usize);

impl Eq for Item {}

impl Ord for Item {
    fn cmp(&self, o: &Self) -> Ordering {
        o.0.total_cmp(&self.0).then(o.1.cmp(&self.1))
    }
}

impl PartialOrd for Item {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}

fn weighted_adjacency(m: &TriMesh) -> Vec<Vec<(usize, f64)>> {
    m.vertex_neighbors()
        .into_iter()
        .enumerate()
        .map(|(i, ns)| {
            ns.into_iter()
                .map(|j| (j, (m.vertices[i] - m.vertices[j]).norm()))
                .collect()
        })
        .collect()
}

/// Single-source shortest paths over mesh edges.
pub fn dijkstra(adj: &[Vec<(usize, f64)>], source: usize) -> Vec<f64> {
    let mut dist = vec![f64::INFINITY; adj.len()];
    let mut heap = BinaryHeap::new();
    dist[source] = 0.0;
    heap.push(Item(0.0, source));
    while let Some(Item(d, u)) = heap.pop() {
        if d > dist[u] {
            continue;
        }
        for &(v, w) in &adj[u] {
            let nd = d + w;
            if nd < dist[v] {
                dist[v] = nd;
                heap.push(Item(nd, v));
            }
        }
    }
    dist
}

/// Descriptor of the largest connected component of `m`.
pub fn geodesic_descriptor(m: &TriMesh, n_samples: usize, k: usize, seed: u64) -> Result<GeodesicDescriptor> {
    if m.is_empty() {
        return Err(Error::EmptyMesh);
    }
    if n_samples < 2 {
        return Err(Error::invalid("need at least two geodesic samples"));
    }
    let m = m.largest_component();
    let nv = m.vertices.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picks: Vec<usize> = if nv <= n_samples {
        (0..nv).collect()
    } else {
        sample(&mut rng, nv, n_samples).into_vec()
    };
    picks.sort_unstable();
    let adj = weighted_adjacency(&m);
    let mut values: Vec<f64> = picks
        .iter()
        .map(|&s| {
            let d = dijkstra(&adj, s);
            let sum: f64 = picks.iter().filter(|&&t| t != s).map(|&t| d[t]).sum();
            sum / (picks.len() - 1) as f64
        })
        .collect();
    let max = values.iter().copied().fold(0.0, f64::max);
    if !(max > 0.0) || !max.is_finite() {
        return Err(Error::DegenerateMesh("geodesic distances vanish".into()));
    }
    values.iter_mut().for_each(|v| *v /= max);
    let gmm = fit_gmm(&values, k, seed)?;
    Ok(GeodesicDescriptor { values, gmm })
}

/// Jensen-Shannon divergence between the two meshes' descriptor mixtures.
pub fn geodesic_divergence(a: &TriMesh, b: &TriMesh, n_samples: usize, k: usize, seed: u64) -> Result<f64> {
    let da = geodesic_descriptor(a, n_samples, k, seed)?;
    let db = geodesic_descriptor(b, n_samples, k, seed)?;
    Ok(js_divergence(&da.gmm, &db.gmm))
}
