//! Shared fixtures for the pipeline benchmarks: a rendered town scan, its
//! extracted features, and a populated descriptor database.

use nalgebra::{Point3, Vector3};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use retrip_core::descriptor::build_descriptors;
use retrip_core::instances::{Instance, InstanceLabel, KeyInstanceSet};
use retrip_core::pipeline::{extract_features, FrameFeatures, PipelineConfig};
use retrip_core::retrieval::DescriptorDB;
use retrip_core::scan_io::PointCloud;
use retrip_core::synth::{generate_scene, render_scan, Preset, ScanModel};
use retrip_core::verification::RigidTransform;
use retrip_core::{DescriptorConfig, Environment};

/// A 32x1024 town scan rendered from a pose on the course.
pub fn town_scan() -> PointCloud {
    let scene = generate_scene(&Preset::Town.scene_config(1));
    let pose = RigidTransform::from_yaw_translation(0.4, Vector3::new(6.0, 3.0, 1.6));
    render_scan(&scene, &pose, &ScanModel::default(), 0)
}

pub fn outdoor_config() -> PipelineConfig {
    PipelineConfig::for_env(Environment::Outdoor)
}

pub fn town_features() -> FrameFeatures {
    extract_features(&town_scan(), &outdoor_config())
}

/// A random key set whose triangles mostly fall inside the default band.
pub fn random_key_set(rng: &mut ChaCha8Rng, frame_id: u64, n: usize) -> KeyInstanceSet {
    let instances: Vec<Instance> = (0..n)
        .map(|i| Instance {
            centroid: Point3::new(
                rng.random::<f64>() * 80.0 - 40.0,
                rng.random::<f64>() * 80.0 - 40.0,
                rng.random::<f64>() * 8.0,
            ),
            label: if rng.random::<f64>() < 0.6 {
                InstanceLabel::Arp
            } else {
                InstanceLabel::Rrp
            },
            size: rng.random_range(5u32..400),
            first_index: i as u32,
        })
        .collect();
    KeyInstanceSet::new(instances, frame_id)
}

/// A database of `frames` random key sets under default descriptor settings.
pub fn random_db(frames: u64, instances_per_frame: usize) -> DescriptorDB {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let cfg = DescriptorConfig::default();
    let mut db = DescriptorDB::new(cfg.resolution);
    for frame in 0..frames {
        let set = random_key_set(&mut rng, frame, instances_per_frame);
        let descs = build_descriptors(&set, &cfg);
        db.insert_frame(descs, set, Vec::new()).unwrap();
    }
    db
}
