//! Reflectivity keypoint extraction.
//!
//! Every point of a scan lands in exactly one of three classes:
//!
//! * ARP (absolute reflectivity point): scan-level z-score of the
//!   reflectivity strictly above `z_a`.
//! * RRP (relative reflectivity point): mean squared reflectivity difference
//!   to ring-local neighbors strictly above `delta_r`, and not already ARP.
//! * remainder: everything else.
//!
//! ARP takes precedence over RRP so the classes stay exclusive.

use rayon::prelude::*;

use crate::scan_io::{reflectivity_stats, PointCloud, ReflectivityStats};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KeypointConfig {
    /// Z-score threshold for ARP. 4.5 suits outdoor scans, 3.5 indoor.
    pub z_a: f64,
    /// Squared-reflectivity threshold for RRP (RMS neighbor difference of 20
    /// reflectivity units at the default).
    pub delta_r: f64,
    /// Half-width of the ring-local neighborhood used for the RRP test.
    pub window: usize,
    /// ARP extraction is skipped entirely below this reflectivity stddev.
    pub sigma_floor: f64,
}

impl Default for KeypointConfig {
    fn default() -> Self {
        KeypointConfig {
            z_a: 4.5,
            delta_r: 400.0,
            window: 3,
            sigma_floor: crate::SIGMA_FLOOR,
        }
    }
}

impl KeypointConfig {
    pub fn outdoor() -> Self {
        Self::default()
    }

    pub fn indoor() -> Self {
        KeypointConfig {
            z_a: 3.5,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PointClass {
    Arp,
    Rrp,
    Remainder,
}

impl PointClass {
    pub fn as_str(self) -> &'static str {
        match self {
            PointClass::Arp => "ARP",
            PointClass::Rrp => "RRP",
            PointClass::Remainder => "REM",
        }
    }
}

/// Exclusive three-way partition of a scan's point indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeypointPartition {
    arp: Vec<u32>,
    rrp: Vec<u32>,
    remainder: Vec<u32>,
    classes: Vec<PointClass>,
}

impl KeypointPartition {
    pub fn arp(&self) -> &[u32] {
        &self.arp
    }

    pub fn rrp(&self) -> &[u32] {
        &self.rrp
    }

    pub fn remainder(&self) -> &[u32] {
        &self.remainder
    }

    pub fn class_of(&self, index: usize) -> PointClass {
        self.classes[index]
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    fn from_classes(classes: Vec<PointClass>) -> Self {
        let mut arp = Vec::new();
        let mut rrp = Vec::new();
        let mut remainder = Vec::new();
        for (i, class) in classes.iter().enumerate() {
            match class {
                PointClass::Arp => arp.push(i as u32),
                PointClass::Rrp => rrp.push(i as u32),
                PointClass::Remainder => remainder.push(i as u32),
            }
        }
        KeypointPartition {
            arp,
            rrp,
            remainder,
            classes,
        }
    }
}

/// Indices whose reflectivity z-score strictly exceeds `cfg.z_a`.
///
/// Returns the empty set when the scan stddev is below `cfg.sigma_floor`.
pub fn extract_arp(
    cloud: &PointCloud,
    stats: &ReflectivityStats,
    cfg: &KeypointConfig,
) -> Vec<u32> {
    if stats.stddev < cfg.sigma_floor {
        return Vec::new();
    }
    cloud
        .points()
        .iter()
        .enumerate()
        .filter(|(_, p)| (p.r - stats.mean) / stats.stddev > cfg.z_a)
        .map(|(i, _)| i as u32)
        .collect()
}

/// Mean squared reflectivity difference over the ring-local neighborhood of
/// point `i`: up to `window` points on each side within the same ring,
/// truncated at ring boundaries. A single-point ring yields 0.
pub fn local_variation(cloud: &PointCloud, i: usize, window: usize) -> f64 {
    let ring = cloud.ring_of(i);
    let members = cloud.ring_members(ring);
    let pos = cloud.ring_position(i) as usize;
    let lo = pos.saturating_sub(window);
    let hi = (pos + window).min(members.len() - 1);
    let r_i = cloud.point(i).r;
    let mut sum = 0.0;
    let mut count = 0usize;
    for &j in &members[lo..=hi] {
        if j as usize == i {
            continue;
        }
        let d = r_i - cloud.point(j as usize).r;
        sum += d * d;
        count += 1;
    }
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}

/// Full partition: ARP by z-score, RRP by local variation (ARP wins on
/// overlap), remainder is the rest.
pub fn extract_keypoints(cloud: &PointCloud, cfg: &KeypointConfig) -> KeypointPartition {
    match reflectivity_stats(cloud) {
        Ok(stats) => extract_keypoints_with_stats(cloud, &stats, cfg),
        Err(_) => KeypointPartition::from_classes(Vec::new()),
    }
}

/// Same as [`extract_keypoints`] with precomputed scan statistics.
pub fn extract_keypoints_with_stats(
    cloud: &PointCloud,
    stats: &ReflectivityStats,
    cfg: &KeypointConfig,
) -> KeypointPartition {
    let arp_enabled = stats.stddev >= cfg.sigma_floor;
    let classes: Vec<PointClass> = (0..cloud.len())
        .into_par_iter()
        .map(|i| {
            let p = cloud.point(i);
            if arp_enabled && (p.r - stats.mean) / stats.stddev > cfg.z_a {
                PointClass::Arp
            } else if local_variation(cloud, i, cfg.window) > cfg.delta_r {
                PointClass::Rrp
            } else {
                PointClass::Remainder
            }
        })
        .collect();
    KeypointPartition::from_classes(classes)
}
