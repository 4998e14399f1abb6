//! Procedural closed meshes used as desk-scale ground truths.
//!
//! Every generator returns a watertight mesh with outward (counter-clockwise
//! from outside) winding, centered on its bounding box.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::geom::mesh::TriMesh;
use crate::grid::Vec3;

/// Surface of revolution about z. `profile` runs top to bottom as
/// `(radius, z)` pairs; zero-radius entries become single pole vertices.
pub fn revolve(profile: &[(f64, f64)], segments: usize) -> TriMesh {
    assert!(segments >= 3 && profile.len() >= 2);
    let mut vertices = Vec::new();
    // per profile row: either one pole vertex or a ring of `segments`
    let mut rows: Vec<(usize, bool)> = Vec::new();
    for &(r, z) in profile {
        let start = vertices.len();
        if r <= 0.0 {
            vertices.push(Vec3::new(0.0, 0.0, z));
            rows.push((start, true));
        } else {
            for j in 0..segments {
                let phi = TAU * j as f64 / segments as f64;
                vertices.push(Vec3::new(r * phi.cos(), r * phi.sin(), z));
            }
            rows.push((start, false));
        }
    }
    let at = |row: (usize, bool), j: usize| if row.1 { row.0 } else { row.0 + j % segments };
    let mut triangles = Vec::new();
    for w in rows.windows(2) {
        let (top, bot) = (w[0], w[1]);
        for j in 0..segments {
            let a = at(top, j);
            let b = at(bot, j);
            let c = at(bot, j + 1);
            let d = at(top, j + 1);
            if !top.1 {
                triangles.push([a, c, d]);
            }
            if !bot.1 {
                triangles.push([a, b, c]);
            }
        }
    }
    TriMesh { vertices, triangles }
}

pub fn uv_sphere(radius: f64, segments: usize, rings: usize) -> TriMesh {
    let profile: Vec<(f64, f64)> = (0..=rings)
        .map(|i| {
            let theta = PI * i as f64 / rings as f64;
            let r = if i == 0 || i == rings {
                0.0
            } else {
                radius * theta.sin()
            };
            (r, radius * theta.cos())
        })
        .collect();
    revolve(&profile, segments)
}

pub fn ellipsoid(radii: Vec3, segments: usize, rings: usize) -> TriMesh {
    uv_sphere(1.0, segments, rings).map_vertices(|v| v.component_mul(&radii))
}

pub fn cylinder(radius: f64, height: f64, segments: usize) -> TriMesh {
    let h = height / 2.0;
    revolve(&[(0.0, h), (radius, h), (radius, -h), (0.0, -h)], segments)
}

pub fn cone(radius: f64, height: f64, segments: usize) -> TriMesh {
    let h = height / 2.0;
    revolve(&[(0.0, h), (radius, -h), (0.0, -h)], segments)
}

pub fn capsule(radius: f64, length: f64, segments: usize, cap_rings: usize) -> TriMesh {
    let h = length / 2.0;
    let mut profile = Vec::new();
    for i in 0..=cap_rings {
        let a = 0.5 * PI * i as f64 / cap_rings as f64;
        let r = if i == 0 { 0.0 } else { radius * a.sin() };
        profile.push((r, h + radius * a.cos()));
    }
    for i in 0..=cap_rings {
        let a = 0.5 * PI * i as f64 / cap_rings as f64;
        let r = if i == cap_rings { 0.0 } else { radius * a.cos() };
        profile.push((r, -h - radius * a.sin()));
    }
    revolve(&profile, segments)
}

pub fn torus(major: f64, minor: f64, seg_major: usize, seg_minor: usize) -> TriMesh {
    let mut vertices = Vec::with_capacity(seg_major * seg_minor);
    for i in 0..seg_major {
        let u = TAU * i as f64 / seg_major as f64;
        for j in 0..seg_minor {
            let v = TAU * j as f64 / seg_minor as f64;
            let rr = major + minor * v.cos();
            vertices.push(Vec3::new(rr * u.cos(), rr * u.sin(), minor * v.sin()));
        }
    }
    let id = |i: usize, j: usize| (i % seg_major) * seg_minor + j % seg_minor;
    let mut triangles = Vec::new();
    for i in 0..seg_major {
        for j in 0..seg_minor {
            let (a, b, c, d) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
            triangles.push([a, b, c]);
            triangles.push([a, c, d]);
        }
    }
    TriMesh { vertices, triangles }
}

fn cross2(o: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

/// Ear-clipping triangulation of a simple counter-clockwise polygon.
fn triangulate(poly: &[(f64, f64)]) -> Vec<[usize; 3]> {
    let mut idx: Vec<usize> = (0..poly.len()).collect();
    let mut out = Vec::new();
    while idx.len() > 3 {
        let n = idx.len();
        let mut clipped = false;
        for k in 0..n {
            let (ia, ib, ic) = (idx[(k + n - 1) % n], idx[k], idx[(k + 1) % n]);
            let (a, b, c) = (poly[ia], poly[ib], poly[ic]);
            if cross2(a, b, c) <= 0.0 {
                continue;
            }
            let blocked = idx.iter().any(|&j| {
                if j == ia || j == ib || j == ic {
                    return false;
                }
                let p = poly[j];
                cross2(a, b, p) >= 0.0 && cross2(b, c, p) >= 0.0 && cross2(c, a, p) >= 0.0
            });
            if blocked {
                continue;
            }
            out.push([ia, ib, ic]);
            idx.remove(k);
            clipped = true;
            break;
        }
        assert!(clipped, "polygon is not simple and counter-clockwise");
    }
    out.push([idx[0], idx[1], idx[2]]);
    out
}

/// Extrude a simple counter-clockwise polygon along z.
pub fn prism(polygon: &[(f64, f64)], height: f64) -> TriMesh {
    let n = polygon.len();
    assert!(n >= 3);
    let h = height / 2.0;
    let mut vertices = Vec::with_capacity(2 * n);
    for &(x, y) in polygon {
        vertices.push(Vec3::new(x, y, -h));
    }
    for &(x, y) in polygon {
        vertices.push(Vec3::new(x, y, h));
    }
    let mut triangles = Vec::new();
    for t in triangulate(polygon) {
        triangles.push([t[0] + n, t[1] + n, t[2] + n]);
        triangles.push([t[0], t[2], t[1]]);
    }
    for i in 0..n {
        let j = (i + 1) % n;
        triangles.push([i, j, j + n]);
        triangles.push([i, j + n, i + n]);
    }
    TriMesh { vertices, triangles }
}

pub fn cuboid(size: Vec3) -> TriMesh {
    let (x, y) = (size.x / 2.0, size.y / 2.0);
    prism(&[(-x, -y), (x, -y), (x, y), (-x, y)], size.z)
}

pub fn regular_prism(sides: usize, radius: f64, height: f64) -> TriMesh {
    let poly: Vec<(f64, f64)> = (0..sides)
        .map(|i| {
            let a = TAU * i as f64 / sides as f64;
            (radius * a.cos(), radius * a.sin())
        })
        .collect();
    prism(&poly, height)
}

/// L-shaped extrusion: outer legs `a` by `b`, leg thickness `t`.
pub fn l_prism(a: f64, b: f64, t: f64, height: f64) -> TriMesh {
    let poly = [(0.0, 0.0), (a, 0.0), (a, t), (t, t), (t, b), (0.0, b)];
    let m = prism(&poly, height);
    m.translated(Vec3::new(-a / 2.0, -b / 2.0, 0.0))
}

/// Shape families available to the procedural desk dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Family {
    Box,
    Sphere,
    Cylinder,
    LPrism,
    Torus,
    Cone,
    HexPrism,
    Ellipsoid,
    Capsule,
    TriPrism,
}

impl Family {
    pub const ALL: [Family; 10] = [
        Family::Box,
        Family::Sphere,
        Family::Cylinder,
        Family::LPrism,
        Family::Torus,
        Family::Cone,
        Family::HexPrism,
        Family::Ellipsoid,
        Family::Capsule,
        Family::TriPrism,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Family::Box => "box",
            Family::Sphere => "sphere",
            Family::Cylinder => "cylinder",
            Family::LPrism => "lprism",
            Family::Torus => "torus",
            Family::Cone => "cone",
            Family::HexPrism => "hexprism",
            Family::Ellipsoid => "ellipsoid",
            Family::Capsule => "capsule",
            Family::TriPrism => "triprism",
        }
    }

    /// A random member of the family, roughly 5-20 cm across.
    pub fn instance(self, rng: &mut impl Rng) -> TriMesh {
        let mut u = |lo: f64, hi: f64| rng.random_range(lo..hi);
        match self {
            Family::Box => cuboid(Vec3::new(u(0.05, 0.16), u(0.05, 0.16), u(0.05, 0.16))),
            Family::Sphere => uv_sphere(u(0.04, 0.09), 24, 12),
            Family::Cylinder => cylinder(u(0.03, 0.07), u(0.06, 0.18), 24),
            Family::LPrism => {
                let (a, b) = (u(0.08, 0.16), u(0.08, 0.16));
                let t = u(0.3, 0.5) * a.min(b);
                l_prism(a, b, t, u(0.04, 0.1))
            }
            Family::Torus => {
                let major = u(0.05, 0.08);
                torus(major, major * u(0.3, 0.5), 24, 12)
            }
            Family::Cone => cone(u(0.04, 0.08), u(0.08, 0.16), 24),
            Family::HexPrism => regular_prism(6, u(0.04, 0.08), u(0.05, 0.15)),
            Family::Ellipsoid => ellipsoid(Vec3::new(u(0.03, 0.09), u(0.03, 0.09), u(0.03, 0.09)), 24, 12),
            Family::Capsule => capsule(u(0.025, 0.05), u(0.04, 0.1), 24, 6),
            Family::TriPrism => regular_prism(3, u(0.05, 0.09), u(0.05, 0.15)),
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Family::ALL
            .iter()
            .copied()
            .find(|f| f.name() == s)
            .ok_or_else(|| format!("unknown shape family '{s}'"))
    }
}

/// `per_family` instances of each family, named `<family>_<k>`, in a
/// deterministic order for a fixed seed.
pub fn desk_set(families: &[Family], per_family: usize, seed: u64) -> Vec<(String, TriMesh)> {
    let mut out = Vec::new();
    for &fam in families {
        // one stream per family so subsets draw identical instances
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(fam as u64 + 1);
        for k in 0..per_family {
            out.push((format!("{}_{}", fam.name(), k), fam.instance(&mut rng)));
        }
    }
    out
}
