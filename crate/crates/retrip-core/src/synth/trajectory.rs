//! Ground-truth trajectories: arc-length-sampled sensor poses.

use nalgebra::Vector3;

use crate::verification::RigidTransform;

/// One sampled sensor pose (sensor-in-world) with its arc-length position.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseSample {
    pub pose: RigidTransform,
    pub arc_length: f64,
}

/// A trajectory sampled at fixed arc-length spacing.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    samples: Vec<PoseSample>,
}

impl Trajectory {
    pub fn from_samples(samples: Vec<PoseSample>) -> Self {
        debug_assert!(samples
            .windows(2)
            .all(|w| w[0].arc_length <= w[1].arc_length));
        Trajectory { samples }
    }

    pub fn samples(&self) -> &[PoseSample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Figure-eight over two tangent circles of `radius`, wrapped for as
    /// many laps as `total_length` covers, sampled every `spacing` meters.
    pub fn figure_eight(radius: f64, total_length: f64, spacing: f64, height: f64) -> Self {
        let count = (total_length / spacing).floor() as usize;
        let samples = (0..count)
            .map(|i| {
                let arc = i as f64 * spacing;
                let lap = 4.0 * std::f64::consts::PI * radius;
                let (x, y, tx, ty) = figure_eight_point(radius, arc.rem_euclid(lap));
                PoseSample {
                    pose: RigidTransform::from_yaw_translation(
                        ty.atan2(tx),
                        Vector3::new(x, y, height),
                    ),
                    arc_length: arc,
                }
            })
            .collect();
        Trajectory::from_samples(samples)
    }

    /// Straight out-and-back along +x from `start_x`, turning around after
    /// `length` meters. Total path length is `2 * length`.
    pub fn out_and_back(start_x: f64, length: f64, spacing: f64, height: f64) -> Self {
        let total = 2.0 * length;
        let count = (total / spacing).floor() as usize;
        let samples = (0..count)
            .map(|i| {
                let arc = i as f64 * spacing;
                let (x, yaw) = if arc < length {
                    (start_x + arc, 0.0)
                } else {
                    (start_x + 2.0 * length - arc, std::f64::consts::PI)
                };
                PoseSample {
                    pose: RigidTransform::from_yaw_translation(yaw, Vector3::new(x, 0.0, height)),
                    arc_length: arc,
                }
            })
            .collect();
        Trajectory::from_samples(samples)
    }
}

/// Point and unit tangent of the canonical figure-eight at arc position
/// `s ∈ [0, 4πR)`: the right circle (center `(R, 0)`) followed by the left
/// circle (center `(-R, 0)`), crossing at the origin heading +y.
pub(crate) fn figure_eight_point(radius: f64, s: f64) -> (f64, f64, f64, f64) {
    let circumference = 2.0 * std::f64::consts::PI * radius;
    if s < circumference {
        let theta = s / radius;
        (
            radius - radius * theta.cos(),
            radius * theta.sin(),
            theta.sin(),
            theta.cos(),
        )
    } else {
        let phi = (s - circumference) / radius;
        (
            -radius + radius * phi.cos(),
            radius * phi.sin(),
            -phi.sin(),
            phi.cos(),
        )
    }
}
