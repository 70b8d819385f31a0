//! Named benchmark presets pairing a scene layout with a trajectory and the
//! matching evaluation protocol.

use std::str::FromStr;

use super::render::ScanModel;
use super::scene::{ReflectivityBand, SceneConfig, SceneLayout};
use super::trajectory::Trajectory;
use crate::evaluation::Environment;

/// Shipped world presets.
///
/// * `Town`: outdoor, buildings and roadside pole markers around a 500 m
///   figure-eight with dynamic clutter.
/// * `Corridor`: indoor, a long corridor of repeated identical bays where
///   markers are the only distinguishing features, walked out and back.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Town,
    Corridor,
}

impl Preset {
    pub fn name(self) -> &'static str {
        match self {
            Preset::Town => "town",
            Preset::Corridor => "corridor",
        }
    }

    pub fn environment(self) -> Environment {
        match self {
            Preset::Town => Environment::Outdoor,
            Preset::Corridor => Environment::Indoor,
        }
    }

    /// Scan spacing along the trajectory, meters (0.25 outdoors, 0.1 indoors).
    pub fn spacing(self) -> f64 {
        self.environment().scan_spacing()
    }

    pub fn scene_config(self, seed: u64) -> SceneConfig {
        match self {
            Preset::Town => SceneConfig {
                seed,
                num_markers: 30,
                marker_reflectivity: ReflectivityBand::new(200.0, 10.0),
                background_reflectivity: ReflectivityBand::new(20.0, 5.0),
                num_walls: 10,
                world_extent: 100.0,
                dynamic_ratio: 0.2,
                noise_sigma_xyz: 0.01,
                noise_sigma_r: 2.0,
                layout: SceneLayout::Town {
                    course_radius: Self::town_course_radius(),
                },
            },
            Preset::Corridor => SceneConfig {
                seed,
                num_markers: 24,
                marker_reflectivity: ReflectivityBand::new(200.0, 10.0),
                background_reflectivity: ReflectivityBand::new(20.0, 5.0),
                num_walls: 5,
                world_extent: 40.0,
                dynamic_ratio: 0.05,
                noise_sigma_xyz: 0.01,
                noise_sigma_r: 2.0,
                layout: SceneLayout::Corridor {
                    length: 55.0,
                    width: 6.0,
                    bay_spacing: 10.0,
                },
            },
        }
    }

    pub fn scan_model(self) -> ScanModel {
        ScanModel::default()
    }

    /// Figure-eight circle radius giving a 250 m lap, so the default 500 m
    /// town trajectory closes exactly two laps.
    pub fn town_course_radius() -> f64 {
        250.0 / (4.0 * std::f64::consts::PI)
    }

    /// Default full-length trajectory for the preset.
    pub fn trajectory(self) -> Trajectory {
        match self {
            Preset::Town => self.trajectory_with_length(500.0),
            Preset::Corridor => self.trajectory_with_length(102.0),
        }
    }

    /// Same path shape, truncated or extended to `total_length` meters of
    /// arc, sampled at the preset spacing.
    pub fn trajectory_with_length(self, total_length: f64) -> Trajectory {
        self.trajectory_with(total_length, self.spacing())
    }

    /// Path of `total_length` meters sampled every `spacing` meters.
    pub fn trajectory_with(self, total_length: f64, spacing: f64) -> Trajectory {
        match self {
            Preset::Town => {
                Trajectory::figure_eight(Self::town_course_radius(), total_length, spacing, 1.6)
            }
            Preset::Corridor => Trajectory::out_and_back(2.0, total_length / 2.0, spacing, 1.2),
        }
    }
}

impl FromStr for Preset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "town" => Ok(Preset::Town),
            "corridor" => Ok(Preset::Corridor),
            other => Err(format!(
                "unknown preset '{other}' (expected town | corridor)"
            )),
        }
    }
}
