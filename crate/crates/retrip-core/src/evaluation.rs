//! Ground-truth construction and precision/recall scoring of full sequences.
//!
//! A frame `j` is a true revisit of query `i` when the sensor positions are
//! within the environment's distance threshold, `j` precedes `i`, and the
//! pair is separated by more than the temporal exclusion window; the same
//! window retrieval applies, so the detector is never asked to find frames
//! it is forbidden to match.

use std::collections::HashMap;
use std::io::Write;
use std::time::Instant;

use nalgebra::Point3;
use thiserror::Error;

use crate::pipeline::{
    best_detection, extract_features, query_and_verify, CandidateOutcome, FrameTiming,
    PipelineConfig,
};
use crate::retrieval::DescriptorDB;
use crate::scan_io::PointCloud;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("poses must be sorted by frame id without duplicates (frame {0})")]
    UnsortedPoses(u64),
    #[error("ground truth has no positive queries; recall is undefined")]
    NoPositives,
    #[error("records are empty")]
    NoRecords,
}

/// Environment preset governing thresholds and protocol constants.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Environment {
    Indoor,
    Outdoor,
}

impl Environment {
    /// Revisit distance threshold: 4 m indoors, 20 m outdoors.
    pub fn revisit_threshold(self) -> f64 {
        match self {
            Environment::Indoor => 4.0,
            Environment::Outdoor => 20.0,
        }
    }

    /// Evaluation scan spacing: 0.1 m indoors, 0.25 m outdoors.
    pub fn scan_spacing(self) -> f64 {
        match self {
            Environment::Indoor => 0.1,
            Environment::Outdoor => 0.25,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Environment::Indoor => "indoor",
            Environment::Outdoor => "outdoor",
        }
    }
}

impl std::str::FromStr for Environment {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "indoor" => Ok(Environment::Indoor),
            "outdoor" => Ok(Environment::Outdoor),
            other => Err(format!(
                "unknown environment '{other}' (expected indoor | outdoor)"
            )),
        }
    }
}

/// True revisits per query frame.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    revisits: HashMap<u64, Vec<u64>>,
    pub env: Environment,
    pub threshold: f64,
    pub exclusion: u64,
    positives: usize,
}

impl GroundTruth {
    pub fn revisits_of(&self, query: u64) -> &[u64] {
        self.revisits.get(&query).map_or(&[], Vec::as_slice)
    }

    pub fn is_revisit(&self, query: u64, candidate: u64) -> bool {
        self.revisits_of(query).contains(&candidate)
    }

    pub fn has_revisit(&self, query: u64) -> bool {
        !self.revisits_of(query).is_empty()
    }

    /// Number of queries with at least one true revisit (the recall
    /// denominator).
    pub fn positive_queries(&self) -> usize {
        self.positives
    }
}

/// Builds ground truth from sensor positions: frame `j` is a revisit of `i`
/// iff `‖pos_i − pos_j‖ ≤ threshold(env)`, `j < i`, and `i − j > exclusion`.
/// Uses a 2D grid over positions; the brute-force pairwise check lives in
/// the tests as the oracle.
pub fn build_ground_truth(
    poses: &[(u64, Point3<f64>)],
    env: Environment,
    exclusion: u64,
) -> Result<GroundTruth, EvalError> {
    for w in poses.windows(2) {
        if w[1].0 <= w[0].0 {
            return Err(EvalError::UnsortedPoses(w[1].0));
        }
    }
    let threshold = env.revisit_threshold();
    let cell = threshold.max(1e-9);
    let mut grid: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    for (idx, (_, p)) in poses.iter().enumerate() {
        let key = ((p.x / cell).floor() as i64, (p.y / cell).floor() as i64);
        grid.entry(key).or_default().push(idx);
    }

    let mut revisits: HashMap<u64, Vec<u64>> = HashMap::new();
    for (qi, (qframe, qpos)) in poses.iter().enumerate() {
        let key = (
            (qpos.x / cell).floor() as i64,
            (qpos.y / cell).floor() as i64,
        );
        let mut hits = Vec::new();
        for dx in -1..=1 {
            for dy in -1..=1 {
                let Some(bucket) = grid.get(&(key.0 + dx, key.1 + dy)) else {
                    continue;
                };
                for &ci in bucket {
                    if ci >= qi {
                        continue;
                    }
                    let (cframe, cpos) = &poses[ci];
                    if qframe - cframe <= exclusion {
                        continue;
                    }
                    if (qpos - cpos).norm() <= threshold {
                        hits.push(*cframe);
                    }
                }
            }
        }
        if !hits.is_empty() {
            hits.sort_unstable();
            revisits.insert(*qframe, hits);
        }
    }
    let positives = revisits.len();
    Ok(GroundTruth {
        revisits,
        env,
        threshold,
        exclusion,
        positives,
    })
}

/// The detector's answer for one query frame.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionRecord {
    pub query: u64,
    pub predicted: Option<u64>,
    /// Verification coincidence of the prediction; present iff `predicted`.
    pub score: Option<f64>,
}

/// Per-query candidate detail kept for ablations.
#[derive(Debug, Clone)]
pub struct QueryOutcome {
    pub frame_id: u64,
    /// Verified candidates in retrieval rank order (vote order).
    pub candidates: Vec<CandidateOutcome>,
}

/// Full output of a sequence run.
#[derive(Debug)]
pub struct SequenceRun {
    pub records: Vec<DetectionRecord>,
    pub outcomes: Vec<QueryOutcome>,
    pub timings: Vec<FrameTiming>,
    pub db: DescriptorDB,
}

impl SequenceRun {
    /// Re-derives detection records as if `num_candidates` had been `m`:
    /// truncates each query's ranked candidate list and takes the best
    /// verified coincidence of the prefix. Equivalent to re-running the
    /// sequence with `num_candidates = m`.
    pub fn records_with_candidate_limit(&self, m: usize) -> Vec<DetectionRecord> {
        self.outcomes
            .iter()
            .map(|q| {
                let prefix = &q.candidates[..q.candidates.len().min(m)];
                match best_detection(prefix) {
                    Some(best) => DetectionRecord {
                        query: q.frame_id,
                        predicted: Some(best.frame_id),
                        score: Some(best.coincidence),
                    },
                    None => DetectionRecord {
                        query: q.frame_id,
                        predicted: None,
                        score: None,
                    },
                }
            })
            .collect()
    }
}

/// Streams scans through the full pipeline (extract, retrieve, verify,
/// insert), recording the best verified candidate per query. `workers` sizes
/// a scoped thread pool; the output is identical for every worker count.
/// Per-frame pipeline errors surface as no-detection records.
pub fn score_sequence<I>(frames: I, cfg: &PipelineConfig, workers: usize) -> SequenceRun
where
    I: IntoIterator<Item = (u64, PointCloud)>,
    I::IntoIter: Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .expect("thread pool construction");
    let frames = frames.into_iter();
    pool.install(move || {
        let mut db = DescriptorDB::new(cfg.descriptor.resolution);
        let mut records = Vec::new();
        let mut outcomes = Vec::new();
        let mut timings = Vec::new();
        for (frame_id, cloud) in frames {
            let cloud = cloud.with_frame_id(frame_id);
            let descriptor_start = Instant::now();
            let features = extract_features(&cloud, cfg);
            let descriptor_ms = descriptor_start.elapsed().as_secs_f64() * 1e3;
            let (candidates, search_ms, verify_ms) = query_and_verify(&db, &features, cfg);
            let record = match best_detection(&candidates) {
                Some(best) => DetectionRecord {
                    query: frame_id,
                    predicted: Some(best.frame_id),
                    score: Some(best.coincidence),
                },
                None => DetectionRecord {
                    query: frame_id,
                    predicted: None,
                    score: None,
                },
            };
            let inserted = db.insert_frame(features.descriptors, features.key_set, features.planes);
            let record = if inserted.is_err() {
                DetectionRecord {
                    query: frame_id,
                    predicted: None,
                    score: None,
                }
            } else {
                record
            };
            records.push(record);
            outcomes.push(QueryOutcome {
                frame_id,
                candidates,
            });
            timings.push(FrameTiming {
                descriptor_ms,
                search_ms,
                verify_ms,
            });
        }
        SequenceRun {
            records,
            outcomes,
            timings,
            db,
        }
    })
}

/// One point of the precision-recall curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrPoint {
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Sweeps the detection threshold over every observed score (descending) and
/// computes precision, recall, and F1 at each. A prediction fires at
/// threshold `t` iff its score ≥ `t`; it counts as a true positive iff the
/// predicted frame is a ground-truth revisit of the query.
///
/// The curve opens with an anchor at recall 0 (threshold +∞, precision 1 by
/// the empty-prediction convention), so integration covers `[0, max recall]`
/// without extrapolating beyond the achieved recall.
pub fn pr_curve(records: &[DetectionRecord], gt: &GroundTruth) -> Result<Vec<PrPoint>, EvalError> {
    if records.is_empty() {
        return Err(EvalError::NoRecords);
    }
    let positives = gt.positive_queries();
    if positives == 0 {
        return Err(EvalError::NoPositives);
    }
    let mut scored: Vec<(f64, bool)> = records
        .iter()
        .filter_map(|r| match (r.predicted, r.score) {
            (Some(predicted), Some(score)) => Some((score, gt.is_revisit(r.query, predicted))),
            _ => None,
        })
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0));

    let mut curve = vec![PrPoint {
        threshold: f64::INFINITY,
        precision: 1.0,
        recall: 0.0,
        f1: 0.0,
    }];
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut i = 0usize;
    while i < scored.len() {
        let threshold = scored[i].0;
        // Consume the whole tie group at this threshold.
        while i < scored.len() && scored[i].0 == threshold {
            if scored[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let precision = tp as f64 / (tp + fp) as f64;
        let recall = (tp.min(positives)) as f64 / positives as f64;
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        curve.push(PrPoint {
            threshold,
            precision,
            recall,
            f1,
        });
    }
    Ok(curve)
}

/// Trapezoidal integration of precision over recall across the achieved
/// recall range (anchored at recall 0, never extended toward recall 1).
pub fn auc(curve: &[PrPoint]) -> f64 {
    let mut points: Vec<(f64, f64)> = curve.iter().map(|p| (p.recall, p.precision)).collect();
    points.sort_by(|a, b| a.0.total_cmp(&b.0));
    points
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[0].1 + w[1].1) / 2.0)
        .sum()
}

/// Best F1 along the curve.
pub fn max_f1(curve: &[PrPoint]) -> f64 {
    curve.iter().map(|p| p.f1).fold(0.0, f64::max)
}

/// Writes `query,predicted,score` rows; absent predictions leave the fields
/// empty.
pub fn write_records_csv<W: Write>(records: &[DetectionRecord], w: &mut W) -> std::io::Result<()> {
    writeln!(w, "query,predicted,score")?;
    for r in records {
        match (r.predicted, r.score) {
            (Some(p), Some(s)) => writeln!(w, "{},{},{}", r.query, p, s)?,
            _ => writeln!(w, "{},,", r.query)?,
        }
    }
    Ok(())
}

pub fn write_pr_csv<W: Write>(curve: &[PrPoint], w: &mut W) -> std::io::Result<()> {
    writeln!(w, "threshold,precision,recall,f1")?;
    for p in curve {
        writeln!(w, "{},{},{},{}", p.threshold, p.precision, p.recall, p.f1)?;
    }
    Ok(())
}
