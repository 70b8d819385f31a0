//! RE-TRIP: reflectivity-augmented triangle descriptors for 3D LiDAR place
//! recognition.
//!
//! The pipeline turns an organized LiDAR scan carrying a reflectivity channel
//! into a compact, viewpoint-invariant signature and matches it against a
//! database of previously seen frames:
//!
//! 1. [`keypoints`]: split the scan into absolute / relative reflectivity
//!    keypoints (scan-level z-score and neighborhood-contrast tests).
//! 2. [`instances`]: cluster each keypoint class into reflectivity instances
//!    and keep the `k` most reliable ones.
//! 3. [`descriptor`]: connect instance centroids into triangles with sorted
//!    side lengths, hashable by quantized sides.
//! 4. [`retrieval`]: hash-table lookup with side / label / size matching and
//!    vote-based candidate ranking.
//! 5. [`verification`]: SVD transform estimation from matched vertices and a
//!    reflectivity-layer-augmented plane overlap check.
//!
//! [`synth`] generates deterministic synthetic worlds (reflective markers,
//! planar structure, dynamic clutter) with ground-truth poses, and
//! [`evaluation`] scores full sequences into precision/recall metrics.

pub mod descriptor;
pub mod evaluation;
pub mod instances;
pub mod keypoints;
pub mod pipeline;
pub mod retrieval;
pub mod scan_io;
pub mod synth;
pub mod verification;

pub use descriptor::{Descriptor, DescriptorConfig, HashKey};
pub use evaluation::{
    build_ground_truth, max_f1, pr_curve, score_sequence, DetectionRecord, Environment,
    GroundTruth, PrPoint, SequenceRun,
};
pub use instances::{Cluster, ClusterConfig, Instance, InstanceLabel, KeyInstanceSet};
pub use keypoints::{KeypointConfig, KeypointPartition, PointClass};
pub use pipeline::{FrameFeatures, FrameTiming, PipelineConfig};
pub use retrieval::{CandidateScore, DescriptorDB, MatchConfig};
pub use scan_io::{
    load_scan, reflectivity_stats, save_scan, Point, PointCloud, ReflectivityStats, ScanFormat,
};
pub use synth::{
    generate_scene, make_benchmark, render_scan, Preset, ScanModel, Scene, SceneConfig, Trajectory,
};
pub use verification::{
    assign_layer, estimate_transform, extract_planes, plane_coincidence, verify_loop, Plane,
    RigidTransform, VerifyConfig, VerifyResult,
};

/// Standard deviations below this are treated as zero when normalizing
/// reflectivity (degenerate constant-reflectivity scans).
pub const SIGMA_FLOOR: f64 = 1e-6;
