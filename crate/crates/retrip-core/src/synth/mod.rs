//! Deterministic synthetic worlds: planar structure, reflective markers,
//! dynamic clutter, and ground-truth trajectories.
//!
//! Everything derives from the scene seed. Per-scan randomness comes from an
//! RNG stream keyed on `(seed, purpose, scan index)`, so scans can be
//! rendered in any order, or in parallel, without changing a single byte.

mod benchmark;
mod presets;
mod render;
mod scene;
mod trajectory;

pub use benchmark::{
    make_benchmark, read_markers_csv, read_poses_csv, render_sequence, scan_file_name,
    write_markers_csv, write_poses_csv, BenchmarkManifest, PoseRecord,
};
pub use presets::Preset;
pub use render::{render_scan, ScanModel};
pub use scene::{
    generate_scene, MarkerInfo, ReflectivityBand, Scene, SceneConfig, SceneLayout, Surface,
    SurfaceKind,
};
pub use trajectory::{PoseSample, Trajectory};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub(crate) const SALT_BUILDINGS: u64 = 0xB11D;
pub(crate) const SALT_MARKERS: u64 = 0x3A4C;
pub(crate) const SALT_SURFACE_NOISE: u64 = 0x5EEF;
pub(crate) const SALT_DYNAMIC: u64 = 0xD11A;

/// SplitMix64-style mixing of (seed, salt, index) into a sub-seed.
pub(crate) fn mix_seed(seed: u64, salt: u64, index: u64) -> u64 {
    let mut z = seed
        .wrapping_add(salt.wrapping_mul(0x9e3779b97f4a7c15))
        .wrapping_add(index.wrapping_mul(0xbf58476d1ce4e5b9));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

pub(crate) fn rng_for(seed: u64, salt: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix_seed(seed, salt, index))
}

/// Standard normal sample via Box-Muller.
pub(crate) fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    use rand::RngExt;
    let u1: f64 = 1.0 - rng.random::<f64>();
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

pub(crate) fn uniform_in(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    use rand::RngExt;
    lo + (hi - lo) * rng.random::<f64>()
}
