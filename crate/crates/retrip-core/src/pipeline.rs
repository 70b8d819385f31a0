//! Per-frame pipeline wiring: configuration aggregation, feature extraction,
//! and candidate verification with stage timings.

use std::time::Instant;

use crate::descriptor::{build_descriptors, Descriptor, DescriptorConfig};
use crate::evaluation::Environment;
use crate::instances::{
    build_key_instance_set, euclidean_cluster, make_instances, ClusterConfig, InstanceLabel,
    KeyInstanceSet,
};
use crate::keypoints::{extract_keypoints_with_stats, KeypointConfig};
use crate::retrieval::{DescriptorDB, MatchConfig};
use crate::scan_io::{reflectivity_stats, PointCloud, ReflectivityStats};
use crate::verification::{extract_planes, verify_loop, Plane, VerifyConfig};

/// Aggregated configuration of the whole pipeline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipelineConfig {
    pub keypoints: KeypointConfig,
    pub cluster: ClusterConfig,
    pub descriptor: DescriptorConfig,
    pub matching: MatchConfig,
    pub verify: VerifyConfig,
    pub env: Environment,
}

impl PipelineConfig {
    /// Defaults for an environment preset: outdoor uses `z_a = 4.5` and a
    /// 20 m revisit threshold, indoor `z_a = 3.5` and 4 m.
    pub fn for_env(env: Environment) -> Self {
        let keypoints = match env {
            Environment::Outdoor => KeypointConfig::outdoor(),
            Environment::Indoor => KeypointConfig::indoor(),
        };
        PipelineConfig {
            keypoints,
            cluster: ClusterConfig::default(),
            descriptor: DescriptorConfig::default(),
            matching: MatchConfig::default(),
            verify: VerifyConfig::default(),
            env,
        }
    }
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig::for_env(Environment::Outdoor)
    }
}

/// Everything extracted from one scan.
#[derive(Debug, Clone)]
pub struct FrameFeatures {
    pub frame_id: u64,
    pub stats: ReflectivityStats,
    pub key_set: KeyInstanceSet,
    pub descriptors: Vec<Descriptor>,
    pub planes: Vec<Plane>,
}

/// Keypoints → clusters → key instances → descriptors → planes for one scan.
pub fn extract_features(cloud: &PointCloud, cfg: &PipelineConfig) -> FrameFeatures {
    let frame_id = cloud.frame_id();
    let Ok(stats) = reflectivity_stats(cloud) else {
        return FrameFeatures {
            frame_id,
            stats: ReflectivityStats {
                mean: 0.0,
                stddev: 0.0,
                count: 0,
            },
            key_set: KeyInstanceSet::new(Vec::new(), frame_id),
            descriptors: Vec::new(),
            planes: Vec::new(),
        };
    };
    let partition = extract_keypoints_with_stats(cloud, &stats, &cfg.keypoints);
    let (arp_clusters, rrp_clusters) = rayon::join(
        || euclidean_cluster(cloud, partition.arp(), InstanceLabel::Arp, &cfg.cluster),
        || euclidean_cluster(cloud, partition.rrp(), InstanceLabel::Rrp, &cfg.cluster),
    );
    let ari = make_instances(cloud, &arp_clusters);
    let rri = make_instances(cloud, &rrp_clusters);
    let key_set = build_key_instance_set(&ari, &rri, cfg.cluster.k, frame_id);
    let descriptors = build_descriptors(&key_set, &cfg.descriptor);
    let planes = extract_planes(cloud, &stats, &cfg.verify);
    FrameFeatures {
        frame_id,
        stats,
        key_set,
        descriptors,
        planes,
    }
}

/// One verified retrieval candidate.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateOutcome {
    pub frame_id: u64,
    pub votes: usize,
    pub coincidence: f64,
    pub accepted: bool,
}

/// Per-frame stage timings in milliseconds, mirroring the
/// descriptor / search / total reporting split.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FrameTiming {
    pub descriptor_ms: f64,
    pub search_ms: f64,
    pub verify_ms: f64,
}

impl FrameTiming {
    pub fn total_ms(&self) -> f64 {
        self.descriptor_ms + self.search_ms + self.verify_ms
    }
}

/// Retrieves candidates for the frame's descriptors and verifies each one.
/// Returns the outcomes in candidate rank order plus search / verify timings.
pub fn query_and_verify(
    db: &DescriptorDB,
    features: &FrameFeatures,
    cfg: &PipelineConfig,
) -> (Vec<CandidateOutcome>, f64, f64) {
    let search_start = Instant::now();
    let candidates = db.retrieve_candidates(&features.descriptors, &cfg.matching);
    let search_ms = search_start.elapsed().as_secs_f64() * 1e3;

    let verify_start = Instant::now();
    let outcomes = {
        use rayon::prelude::*;
        candidates
            .par_iter()
            .map(|candidate| {
                let result = verify_loop(db, candidate, &features.planes, &cfg.verify);
                CandidateOutcome {
                    frame_id: candidate.frame_id,
                    votes: candidate.votes,
                    coincidence: result.coincidence,
                    accepted: result.accepted,
                }
            })
            .collect()
    };
    let verify_ms = verify_start.elapsed().as_secs_f64() * 1e3;
    (outcomes, search_ms, verify_ms)
}

/// The exported loop decision for a query: the best-voted candidate that
/// passed verification. When none passes, the top-voted candidate is
/// exported anyway with its (sub-threshold) score, so PR threshold sweeps
/// still see the rejected tail. Both choices depend only on a prefix of the
/// ranked candidate list, so growing the candidate budget never perturbs
/// decisions it did not improve.
pub fn best_detection(outcomes: &[CandidateOutcome]) -> Option<&CandidateOutcome> {
    outcomes
        .iter()
        .find(|o| o.accepted)
        .or_else(|| outcomes.first())
}

/// Processes one frame end to end against a growing database: extract,
/// query, verify, insert. Returns the outcomes and the stage timings.
pub fn process_frame(
    db: &mut DescriptorDB,
    cloud: &PointCloud,
    cfg: &PipelineConfig,
) -> Result<(Vec<CandidateOutcome>, FrameTiming), crate::retrieval::DbError> {
    let descriptor_start = Instant::now();
    let features = extract_features(cloud, cfg);
    let descriptor_ms = descriptor_start.elapsed().as_secs_f64() * 1e3;
    let (outcomes, search_ms, verify_ms) = query_and_verify(db, &features, cfg);
    db.insert_frame(features.descriptors, features.key_set, features.planes)?;
    Ok((
        outcomes,
        FrameTiming {
            descriptor_ms,
            search_ms,
            verify_ms,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn best_detection_takes_top_voted_accepted() {
        // Candidates arrive in vote-rank order; the first accepted one wins
        // even if a later one has higher coincidence.
        let outcomes = vec![
            CandidateOutcome {
                frame_id: 3,
                votes: 50,
                coincidence: 0.4,
                accepted: true,
            },
            CandidateOutcome {
                frame_id: 9,
                votes: 5,
                coincidence: 0.9,
                accepted: true,
            },
        ];
        assert_eq!(best_detection(&outcomes).unwrap().frame_id, 3);
        assert!(best_detection(&[]).is_none());
    }

    #[test]
    fn best_detection_falls_back_to_top_voted() {
        let outcomes = vec![
            CandidateOutcome {
                frame_id: 3,
                votes: 50,
                coincidence: 0.1,
                accepted: false,
            },
            CandidateOutcome {
                frame_id: 9,
                votes: 5,
                coincidence: 0.2,
                accepted: false,
            },
        ];
        let best = best_detection(&outcomes).unwrap();
        assert_eq!(best.frame_id, 3);
        assert_eq!(best.coincidence, 0.1);
    }

    #[test]
    fn env_presets_set_z_a() {
        assert_eq!(
            PipelineConfig::for_env(Environment::Outdoor).keypoints.z_a,
            4.5
        );
        assert_eq!(
            PipelineConfig::for_env(Environment::Indoor).keypoints.z_a,
            3.5
        );
    }
}
