//! Ray-cast scan rendering.
//!
//! Beams sweep ring-major (ring 0 first, azimuth order within a ring); each
//! beam keeps the nearest surface hit within range. Geometry is solved in
//! parallel, then a serial pass in beam order draws reflectivity and range
//! noise so the output is independent of the parallel schedule. Dynamic
//! clutter replaces a fixed fraction of returns with transient blob points.

use nalgebra::{Point3, Vector3};
use rand::RngExt;
use rayon::prelude::*;

use super::scene::{Scene, Surface};
use super::{gaussian, rng_for, uniform_in, SALT_DYNAMIC, SALT_SURFACE_NOISE};
use crate::scan_io::{Point, PointCloud};
use crate::verification::RigidTransform;

/// Sensor geometry: ring/azimuth counts, vertical field of view, max range.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanModel {
    pub rings: u16,
    pub points_per_ring: u32,
    /// Total vertical field of view, degrees, centered on the horizon.
    pub vertical_fov_deg: f64,
    pub max_range: f64,
}

impl Default for ScanModel {
    fn default() -> Self {
        ScanModel {
            rings: 32,
            points_per_ring: 1024,
            vertical_fov_deg: 30.0,
            max_range: 120.0,
        }
    }
}

const T_MIN: f64 = 0.05;

fn ray_surface(
    origin: &Point3<f64>,
    dir: &Vector3<f64>,
    surface: &Surface,
    max_t: f64,
) -> Option<f64> {
    let denom = dir.dot(&surface.normal);
    if denom.abs() < 1e-12 {
        return None;
    }
    let t = (surface.center - origin).dot(&surface.normal) / denom;
    if t < T_MIN || t > max_t {
        return None;
    }
    let hit = origin + dir * t;
    let d = hit - surface.center;
    if d.dot(&surface.u_dir).abs() <= surface.u_len && d.dot(&surface.v_dir).abs() <= surface.v_len
    {
        Some(t)
    } else {
        None
    }
}

/// Renders one organized scan from `pose` (sensor-in-world). Output points
/// are in the sensor frame with f32-representable fields; `scan_index` keys
/// the per-scan noise streams and becomes the cloud's frame id.
pub fn render_scan(
    scene: &Scene,
    pose: &RigidTransform,
    model: &ScanModel,
    scan_index: u64,
) -> PointCloud {
    let rings = model.rings.max(1);
    let ppr = model.points_per_ring.max(1);
    let fov = model.vertical_fov_deg.to_radians();
    let origin = Point3::from(pose.translation);

    // Sensor-frame beam directions, ring-major.
    let mut dirs: Vec<(u16, Vector3<f64>)> = Vec::with_capacity(rings as usize * ppr as usize);
    for ring in 0..rings {
        let elevation = if rings == 1 {
            0.0
        } else {
            -fov / 2.0 + fov * ring as f64 / (rings - 1) as f64
        };
        let (sin_el, cos_el) = elevation.sin_cos();
        for j in 0..ppr {
            let azimuth = std::f64::consts::TAU * j as f64 / ppr as f64;
            let (sin_az, cos_az) = azimuth.sin_cos();
            dirs.push((ring, Vector3::new(cos_el * cos_az, cos_el * sin_az, sin_el)));
        }
    }

    // Parallel geometry pass: nearest hit parameter per beam.
    let hits: Vec<Option<(usize, f64)>> = dirs
        .par_iter()
        .map(|(_, dir_sensor)| {
            let dir_world = pose.rotation * dir_sensor;
            let mut best: Option<(usize, f64)> = None;
            for (si, surface) in scene.surfaces.iter().enumerate() {
                let max_t = best.map_or(model.max_range, |(_, t)| t);
                if let Some(t) = ray_surface(&origin, &dir_world, surface, max_t) {
                    best = Some((si, t));
                }
            }
            best
        })
        .collect();

    // Serial sampling pass in beam order: reflectivity and range noise.
    let seed = scene.config.seed;
    let mut rng = rng_for(seed, SALT_SURFACE_NOISE, scan_index);
    let mut points = Vec::new();
    let mut rings_of = Vec::new();
    for (beam, hit) in hits.iter().enumerate() {
        let Some((surface_idx, t)) = *hit else {
            continue;
        };
        let surface = &scene.surfaces[surface_idx];
        let reflectivity = (surface.reflectivity.sample(&mut rng)
            + gaussian(&mut rng) * scene.config.noise_sigma_r)
            .max(0.0);
        let t_noisy = (t + gaussian(&mut rng) * scene.config.noise_sigma_xyz).max(T_MIN);
        let p = dirs[beam].1 * t_noisy;
        points.push(Point::quantized(p.x, p.y, p.z, reflectivity));
        rings_of.push(dirs[beam].0);
    }

    // Dynamic clutter: replace a fixed fraction of returns with points on
    // transient blobs that never repeat across scans.
    if scene.config.dynamic_ratio > 0.0 && !points.is_empty() {
        let mut drng = rng_for(seed, SALT_DYNAMIC, scan_index);
        let n_replace = (scene.config.dynamic_ratio * points.len() as f64).floor() as usize;
        if n_replace > 0 {
            let n_blobs = (n_replace / 64).clamp(1, 24);
            let blobs: Vec<Point3<f64>> = (0..n_blobs)
                .map(|_| {
                    let range = uniform_in(&mut drng, 3.0, 25.0);
                    let az = uniform_in(&mut drng, 0.0, std::f64::consts::TAU);
                    Point3::new(
                        range * az.cos(),
                        range * az.sin(),
                        uniform_in(&mut drng, -1.0, 1.0),
                    )
                })
                .collect();
            // Partial Fisher-Yates to pick distinct return slots.
            let mut slots: Vec<u32> = (0..points.len() as u32).collect();
            for k in 0..n_replace {
                let j = k + drng.random_range(0..(slots.len() - k));
                slots.swap(k, j);
            }
            for (k, &slot) in slots[..n_replace].iter().enumerate() {
                let blob = &blobs[k % n_blobs];
                // Dynamic objects carry background-like reflectivity; only
                // their geometry is disruptive.
                let refl = (uniform_in(&mut drng, 15.0, 35.0)
                    + gaussian(&mut drng) * scene.config.noise_sigma_r)
                    .max(0.0);
                points[slot as usize] = Point::quantized(
                    blob.x + gaussian(&mut drng) * 0.35,
                    blob.y + gaussian(&mut drng) * 0.35,
                    blob.z + gaussian(&mut drng) * 0.35,
                    refl,
                );
            }
        }
    }

    PointCloud::new(points, rings_of, rings, scan_index)
        .expect("rendered cloud satisfies invariants")
}
