//! Synthetic pinhole depth camera.
//!
//! Camera frame: +z is the optical axis, +x right, +y down. A pose maps
//! camera-frame vectors to the world with `R = Rz(yaw) * Ry(pitch) * Rx(roll)`,
//! i.e. roll is applied first.

use nalgebra::Rotation3;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geom::bvh::Bvh;
use crate::geom::mesh::TriMesh;
use crate::grid::{embed_pointcloud, EmbedTransform, OccupancyGrid, PointCloud, Vec3};

/// Default synthetic intrinsics.
pub const DEFAULT_WIDTH: usize = 64;
pub const DEFAULT_HEIGHT: usize = 64;
pub const DEFAULT_FOV_Y: f64 = std::f64::consts::FRAC_PI_4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraPose {
    pub position: Vec3,
    /// Roll, pitch, yaw in radians.
    pub orientation: [f64; 3],
}

impl CameraPose {
    pub fn new(position: Vec3, roll: f64, pitch: f64, yaw: f64) -> Self {
        Self {
            position,
            orientation: [roll, pitch, yaw],
        }
    }

    /// Camera at the world origin looking down world +z.
    pub fn identity() -> Self {
        Self::new(Vec3::zeros(), 0.0, 0.0, 0.0)
    }

    pub fn rotation(&self) -> Rotation3<f64> {
        let [roll, pitch, yaw] = self.orientation;
        Rotation3::from_axis_angle(&Vec3::z_axis(), yaw)
            * Rotation3::from_axis_angle(&Vec3::y_axis(), pitch)
            * Rotation3::from_axis_angle(&Vec3::x_axis(), roll)
    }

    /// Optical axis in world coordinates.
    pub fn forward(&self) -> Vec3 {
        self.rotation() * Vec3::z()
    }

    /// Same orientation, placed `distance` from `target` along the optical
    /// axis so the camera looks at it.
    pub fn looking_at(&self, target: Vec3, distance: f64) -> Self {
        Self {
            position: target - self.forward() * distance,
            orientation: self.orientation,
        }
    }

    pub fn world_to_camera(&self, p: &Vec3) -> Vec3 {
        self.rotation().inverse() * (p - self.position)
    }

    pub fn camera_to_world(&self, p: &Vec3) -> Vec3 {
        self.rotation() * p + self.position
    }

    pub fn mesh_to_camera(&self, m: &TriMesh) -> TriMesh {
        let inv = self.rotation().inverse();
        m.map_vertices(|v| inv * (v - self.position))
    }
}

/// Per-pixel depth along the camera z axis; misses hold +infinity.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthImage {
    pub width: usize,
    pub height: usize,
    pub fov_y: f64,
    pub depths: Vec<f64>,
}

impl DepthImage {
    fn focal(&self) -> f64 {
        0.5 * self.height as f64 / (0.5 * self.fov_y).tan()
    }

    pub fn get(&self, u: usize, v: usize) -> f64 {
        self.depths[v * self.width + u]
    }

    pub fn hit_count(&self) -> usize {
        self.depths.iter().filter(|d| d.is_finite()).count()
    }

    pub fn hit_fraction(&self) -> f64 {
        self.hit_count() as f64 / self.depths.len() as f64
    }

    /// Camera-frame direction through a pixel center, with unit z.
    pub fn pixel_ray(&self, u: usize, v: usize) -> Vec3 {
        pixel_ray(self.width, self.height, self.focal(), u, v)
    }

    /// Back-project every hit pixel into the camera frame.
    pub fn to_cloud(&self) -> PointCloud {
        let mut pts = Vec::with_capacity(self.hit_count());
        for v in 0..self.height {
            for u in 0..self.width {
                let z = self.get(u, v);
                if z.is_finite() {
                    pts.push(self.pixel_ray(u, v) * z);
                }
            }
        }
        PointCloud::new(pts)
    }
}

fn pixel_ray(w: usize, h: usize, f: f64, u: usize, v: usize) -> Vec3 {
    Vec3::new(
        (u as f64 + 0.5 - 0.5 * w as f64) / f,
        (v as f64 + 0.5 - 0.5 * h as f64) / f,
        1.0,
    )
}

/// Render with a prebuilt world-space BVH.
pub fn render_depth_bvh(bvh: &Bvh, pose: &CameraPose, w: usize, h: usize, fov_y: f64) -> DepthImage {
    let rot = pose.rotation();
    let f = 0.5 * h as f64 / (0.5 * fov_y).tan();
    let depths: Vec<f64> = (0..h)
        .into_par_iter()
        .flat_map_iter(|v| {
            (0..w)
                .map(|u| {
                    let dir = rot * pixel_ray(w, h, f, u, v);
                    // the camera-frame direction has unit z, so t is z-depth
                    bvh.closest_hit(&pose.position, &dir, 1e-9)
                        .map_or(f64::INFINITY, |(t, _)| t)
                })
                .collect::<Vec<_>>()
        })
        .collect();
    DepthImage {
        width: w,
        height: h,
        fov_y,
        depths,
    }
}

pub fn render_depth(m: &TriMesh, pose: &CameraPose, w: usize, h: usize, fov_y: f64) -> Result<DepthImage> {
    if m.is_empty() {
        return Err(Error::EmptyMesh);
    }
    if w < 16 || h < 16 {
        return Err(Error::invalid("depth image must be at least 16x16"));
    }
    Ok(render_depth_bvh(&Bvh::new(m), pose, w, h, fov_y))
}

/// Camera-frame cloud of the visible surface and its canonical embedding.
/// Occluded and empty space stays unoccupied.
pub fn depth_to_partial_grid(d: &DepthImage, side: usize) -> Result<(OccupancyGrid, PointCloud, EmbedTransform)> {
    let cloud = d.to_cloud();
    if cloud.is_empty() {
        return Err(Error::NotVisible);
    }
    let (grid, t) = embed_pointcloud(&cloud, side)?;
    Ok((grid, cloud, t))
}
