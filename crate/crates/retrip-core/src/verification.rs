//! Loop verification: SVD transform estimation from matched descriptor
//! vertices and a reflectivity-layer-augmented plane overlap check.
//!
//! Planes are fitted per voxel from the position covariance; each plane
//! carries a reflectivity layer: how many `z_l`-scaled standard deviations
//! the voxel mean reflectivity sits above the scan mean, clamped to five
//! levels. A candidate is accepted when enough query planes find a reference
//! plane matching in normal direction, point-to-plane offset, and layer under
//! the estimated transform.

use std::collections::HashMap;

use nalgebra::{Matrix3, Point3, Unit, Vector3};
use rayon::prelude::*;
use thiserror::Error;

use crate::retrieval::{CandidateScore, DescriptorDB};
use crate::scan_io::{PointCloud, ReflectivityStats};
use crate::SIGMA_FLOOR;

/// A voxel-fitted planar patch.
#[derive(Debug, Clone, PartialEq)]
pub struct Plane {
    /// Mean of the voxel's points, sensor frame.
    pub center: Point3<f64>,
    /// Unit normal, sign fixed toward the sensor origin.
    pub normal: Unit<Vector3<f64>>,
    /// Reflectivity layer index in [0, 4].
    pub layer: u8,
    /// Number of supporting points.
    pub support: u32,
}

/// A proper rigid motion: rotation (orthonormal, det +1) plus translation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl RigidTransform {
    pub fn identity() -> Self {
        RigidTransform {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Self {
        RigidTransform {
            rotation,
            translation,
        }
    }

    /// Rotation about +z by `yaw` radians plus a translation.
    pub fn from_yaw_translation(yaw: f64, translation: Vector3<f64>) -> Self {
        let (s, c) = yaw.sin_cos();
        let rotation = Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0);
        RigidTransform {
            rotation,
            translation,
        }
    }

    pub fn transform_point(&self, p: &Point3<f64>) -> Point3<f64> {
        Point3::from(self.rotation * p.coords + self.translation)
    }

    pub fn transform_vector(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * v
    }

    /// `self ∘ other`: applies `other` first, then `self`.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        RigidTransform {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> RigidTransform {
        let rt = self.rotation.transpose();
        RigidTransform {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// Max-norm deviation of `RᵀR` from the identity plus `|det − 1|`.
    pub fn orthonormality_error(&self) -> f64 {
        let gram = self.rotation.transpose() * self.rotation - Matrix3::identity();
        let gram_err = gram.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        gram_err.max((self.rotation.determinant() - 1.0).abs())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyConfig {
    /// Voxel edge length for plane extraction, meters.
    pub voxel_size: f64,
    /// A voxel is planar iff its smallest covariance eigenvalue is at most
    /// this ratio of the middle one.
    pub planarity_ratio: f64,
    /// Minimum points per voxel before fitting.
    pub min_voxel_points: usize,
    /// Layer step in scan-reflectivity standard deviations.
    pub z_l: f64,
    /// Normal alignment threshold of the overlap test.
    pub sigma_n: f64,
    /// Point-to-plane distance threshold, meters.
    pub sigma_d: f64,
    /// Maximum layer index difference (strict).
    pub sigma_lambda: u8,
    /// Plane coincidence fraction required to accept a loop.
    pub accept_threshold: f64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            voxel_size: 1.0,
            planarity_ratio: 0.1,
            min_voxel_points: 10,
            z_l: 1.0,
            sigma_n: 0.2,
            sigma_d: 0.3,
            sigma_lambda: 3,
            accept_threshold: 0.3,
        }
    }
}

/// Outcome of verifying one loop candidate.
#[derive(Debug, Clone, PartialEq)]
pub struct VerifyResult {
    pub accepted: bool,
    /// Fraction of query planes matched in the reference frame, in [0, 1].
    pub coincidence: f64,
    pub transform: RigidTransform,
    pub matched_plane_pairs: usize,
}

impl VerifyResult {
    fn rejected() -> Self {
        VerifyResult {
            accepted: false,
            coincidence: 0.0,
            transform: RigidTransform::identity(),
            matched_plane_pairs: 0,
        }
    }
}

#[derive(Debug, Error)]
pub enum TransformError {
    #[error("need at least 3 point correspondences, got {0}")]
    TooFewPairs(usize),
    #[error("degenerate correspondence geometry (collinear or coincident points)")]
    Degenerate,
}

/// Reflectivity layer of a voxel mean: `floor((mu_v - mean) / (stddev * z_l))`
/// clamped to `[0, 4]`. Degenerate scans (stddev below the floor) sit in
/// layer 0.
pub fn assign_layer(mu_r_voxel: f64, stats: &ReflectivityStats, z_l: f64) -> u8 {
    if stats.stddev < SIGMA_FLOOR {
        return 0;
    }
    let t = ((mu_r_voxel - stats.mean) / (stats.stddev * z_l)).floor();
    if t <= 0.0 {
        0
    } else if t >= 4.0 {
        4
    } else {
        t as u8
    }
}

/// Fits planes to the voxelized scan: voxels with enough points whose
/// smallest covariance eigenvalue is at most `planarity_ratio` times the
/// middle one. Output order follows voxel grid coordinates and is
/// deterministic.
pub fn extract_planes(
    cloud: &PointCloud,
    stats: &ReflectivityStats,
    cfg: &VerifyConfig,
) -> Vec<Plane> {
    let mut voxels: HashMap<(i64, i64, i64), Vec<u32>> = HashMap::new();
    for (i, p) in cloud.points().iter().enumerate() {
        let key = (
            (p.x / cfg.voxel_size).floor() as i64,
            (p.y / cfg.voxel_size).floor() as i64,
            (p.z / cfg.voxel_size).floor() as i64,
        );
        voxels.entry(key).or_default().push(i as u32);
    }
    let mut cells: Vec<((i64, i64, i64), Vec<u32>)> = voxels
        .into_iter()
        .filter(|(_, members)| members.len() >= cfg.min_voxel_points)
        .collect();
    cells.sort_by_key(|(key, _)| *key);

    cells
        .par_iter()
        .filter_map(|(_, members)| fit_plane(cloud, members, stats, cfg))
        .collect()
}

fn fit_plane(
    cloud: &PointCloud,
    members: &[u32],
    stats: &ReflectivityStats,
    cfg: &VerifyConfig,
) -> Option<Plane> {
    let n = members.len() as f64;
    let mut mean = Vector3::zeros();
    let mut mean_r = 0.0;
    for &i in members {
        let p = cloud.point(i as usize);
        mean += p.coords();
        mean_r += p.r;
    }
    mean /= n;
    mean_r /= n;

    let mut cov = Matrix3::zeros();
    for &i in members {
        let d = cloud.point(i as usize).coords() - mean;
        cov += d * d.transpose();
    }
    cov /= n;

    let eigen = cov.symmetric_eigen();
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eigen.eigenvalues[a].total_cmp(&eigen.eigenvalues[b]));
    let smallest = eigen.eigenvalues[order[0]].max(0.0);
    let middle = eigen.eigenvalues[order[1]].max(0.0);
    if smallest > cfg.planarity_ratio * middle {
        return None;
    }
    let mut normal: Vector3<f64> = eigen.eigenvectors.column(order[0]).into();
    let norm = normal.norm();
    if norm == 0.0 {
        return None;
    }
    normal /= norm;
    // Voxel eigen-normals carry an arbitrary sign; orient toward the sensor.
    if normal.dot(&mean) > 0.0 {
        normal = -normal;
    }
    Some(Plane {
        center: Point3::from(mean),
        normal: Unit::new_unchecked(normal),
        layer: assign_layer(mean_r, stats, cfg.z_l),
        support: members.len() as u32,
    })
}

/// Least-squares rigid transform mapping query points onto reference points
/// (Kabsch: centroid subtraction, cross-covariance SVD, reflection-corrected
/// rotation).
pub fn estimate_transform(
    pairs: &[(Point3<f64>, Point3<f64>)],
) -> Result<RigidTransform, TransformError> {
    if pairs.len() < 3 {
        return Err(TransformError::TooFewPairs(pairs.len()));
    }
    let n = pairs.len() as f64;
    let mut q_centroid = Vector3::zeros();
    let mut r_centroid = Vector3::zeros();
    for (q, r) in pairs {
        q_centroid += q.coords;
        r_centroid += r.coords;
    }
    q_centroid /= n;
    r_centroid /= n;

    let mut cross = Matrix3::zeros();
    for (q, r) in pairs {
        cross += (q.coords - q_centroid) * (r.coords - r_centroid).transpose();
    }

    let svd = cross.svd(true, true);
    let u = svd.u.ok_or(TransformError::Degenerate)?;
    let v_t = svd.v_t.ok_or(TransformError::Degenerate)?;
    // Rank < 2 leaves a rotation degree of freedom undetermined.
    if svd.singular_values[1] <= svd.singular_values[0] * 1e-9 {
        return Err(TransformError::Degenerate);
    }
    let v = v_t.transpose();
    let det = (v * u.transpose()).determinant();
    let correction = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, det.signum()));
    let rotation = v * correction * u.transpose();
    let translation = r_centroid - rotation * q_centroid;
    Ok(RigidTransform {
        rotation,
        translation,
    })
}

/// Fraction of query planes that coincide with their nearest reference plane
/// under `transform`: normal alignment within `sigma_n` (sign-agnostic),
/// absolute point-to-plane offset within `sigma_d`, layer difference strictly
/// below `sigma_lambda`.
pub fn plane_coincidence(
    planes_q: &[Plane],
    planes_r: &[Plane],
    transform: &RigidTransform,
    cfg: &VerifyConfig,
) -> f64 {
    let (matched, total) = plane_coincidence_counts(planes_q, planes_r, transform, cfg);
    if total == 0 {
        0.0
    } else {
        matched as f64 / total as f64
    }
}

/// Like [`plane_coincidence`] but returns `(matched, query_plane_count)`.
pub fn plane_coincidence_counts(
    planes_q: &[Plane],
    planes_r: &[Plane],
    transform: &RigidTransform,
    cfg: &VerifyConfig,
) -> (usize, usize) {
    if planes_q.is_empty() || planes_r.is_empty() {
        return (0, planes_q.len());
    }
    let matched = planes_q
        .iter()
        .filter(|q| {
            let center = transform.transform_point(&q.center);
            let normal = transform.transform_vector(&q.normal);
            let nearest = planes_r
                .iter()
                .min_by(|a, b| {
                    (a.center - center)
                        .norm_squared()
                        .total_cmp(&(b.center - center).norm_squared())
                })
                .expect("planes_r non-empty");
            let flip = (normal + nearest.normal.into_inner()).norm();
            let keep = (normal - nearest.normal.into_inner()).norm();
            if keep.min(flip) >= cfg.sigma_n {
                return false;
            }
            let offset = nearest.normal.dot(&(center - nearest.center)).abs();
            if offset >= cfg.sigma_d {
                return false;
            }
            (q.layer as i32 - nearest.layer as i32).abs() < cfg.sigma_lambda as i32
        })
        .count();
    (matched, planes_q.len())
}

/// Correspondences farther than this from a seed transform's prediction are
/// outliers during consensus estimation.
const TRANSFORM_INLIER_EPS: f64 = 0.5;
/// At most this many matched pairs seed consensus transforms.
const MAX_SEED_PAIRS: usize = 64;

/// Consensus transform over the vertex correspondences of the matched
/// descriptor pairs: each pair's three correspondences seed a candidate
/// transform, the seed with the most inliers wins, and the final transform
/// is re-estimated from its inlier set. A single congruent-but-wrong pair
/// (or a vertex relabeling flip on a near-isoceles triangle) cannot poison
/// the estimate this way.
fn consensus_transform(
    matched_pairs: &[(crate::descriptor::Descriptor, crate::descriptor::Descriptor)],
) -> Result<RigidTransform, TransformError> {
    let correspondences: Vec<(Point3<f64>, Point3<f64>)> = matched_pairs
        .iter()
        .flat_map(|(q, r)| (0..3).map(|v| (q.vertices[v].centroid, r.vertices[v].centroid)))
        .collect();
    let mut best: Option<(usize, Vec<usize>)> = None;
    for (q, r) in matched_pairs.iter().take(MAX_SEED_PAIRS) {
        let seed_pairs: Vec<_> = (0..3)
            .map(|v| (q.vertices[v].centroid, r.vertices[v].centroid))
            .collect();
        let Ok(seed) = estimate_transform(&seed_pairs) else {
            continue;
        };
        let inliers: Vec<usize> = correspondences
            .iter()
            .enumerate()
            .filter(|(_, (cq, cr))| (seed.transform_point(cq) - cr).norm() < TRANSFORM_INLIER_EPS)
            .map(|(k, _)| k)
            .collect();
        if best.as_ref().map_or(true, |(n, _)| inliers.len() > *n) {
            best = Some((inliers.len(), inliers));
        }
    }
    let inlier_set: Vec<(Point3<f64>, Point3<f64>)> = match &best {
        Some((n, inliers)) if *n >= 3 => inliers.iter().map(|&k| correspondences[k]).collect(),
        _ => correspondences.clone(),
    };
    estimate_transform(&inlier_set).or_else(|_| estimate_transform(&correspondences))
}

/// Verifies one retrieval candidate: estimates the transform from the matched
/// descriptor vertex centroids (consensus over pair-seeded transforms), then
/// scores plane coincidence against the candidate frame's stored planes.
pub fn verify_loop(
    db: &DescriptorDB,
    candidate: &CandidateScore,
    query_planes: &[Plane],
    cfg: &VerifyConfig,
) -> VerifyResult {
    if candidate.matched_pairs.len() < 3 {
        return VerifyResult::rejected();
    }
    let Some(frame) = db.frame(candidate.frame_id) else {
        return VerifyResult::rejected();
    };
    let Ok(transform) = consensus_transform(&candidate.matched_pairs) else {
        return VerifyResult::rejected();
    };
    let (matched, total) = plane_coincidence_counts(query_planes, &frame.planes, &transform, cfg);
    let coincidence = if total == 0 {
        0.0
    } else {
        matched as f64 / total as f64
    };
    VerifyResult {
        accepted: coincidence >= cfg.accept_threshold,
        coincidence,
        transform,
        matched_plane_pairs: matched,
    }
}
