//! Descriptor database: hash-table storage and loop-candidate retrieval.
//!
//! Stored descriptors are bucketed by quantized sorted side lengths. A query
//! probes its own bucket plus all adjacent ones (probe radius
//! `ceil(side_tol / resolution)`, 27 buckets at the defaults, which makes the
//! probe lossless for the side tolerance) and keeps descriptors passing three
//! tests: per-side length difference, canonical vertex label equality, and
//! vertex size ratio. Each matched descriptor votes for its frame; frames are
//! ranked by votes.

use std::collections::HashMap;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::{Point3, Unit, Vector3};
use thiserror::Error;

use crate::descriptor::{hash_key, Descriptor, HashKey};
use crate::instances::{Instance, InstanceLabel, KeyInstanceSet};
use crate::verification::Plane;

/// Magic bytes opening a serialized database.
pub const DB_MAGIC: [u8; 4] = *b"RTDB";
/// Database format version.
pub const DB_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum DbError {
    #[error("frame {frame_id} not greater than last stored frame {last}")]
    OutOfOrderFrame { frame_id: u64, last: u64 },
    #[error("descriptor frame {0} does not match inserted frame {1}")]
    FrameMismatch(u64, u64),
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),
    #[error("corrupt database: {0}")]
    Corrupt(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchConfig {
    /// Maximum absolute per-side length difference, meters.
    pub side_tol: f64,
    /// Maximum per-vertex instance size ratio (≥ 1).
    pub size_ratio_tol: f64,
    /// How many ranked loop candidates to return.
    pub num_candidates: usize,
    /// Instance matching: require equal vertex labels and bounded size
    /// ratios. Off reduces matching to side lengths only.
    pub require_label_match: bool,
    /// Stored frames within this many frames of the query are ignored;
    /// `None` disables the exclusion entirely (the query's own frame becomes
    /// matchable).
    pub temporal_exclusion: Option<u64>,
}

impl Default for MatchConfig {
    fn default() -> Self {
        MatchConfig {
            side_tol: 0.2,
            size_ratio_tol: 3.0,
            num_candidates: 10,
            require_label_match: true,
            temporal_exclusion: Some(100),
        }
    }
}

/// Everything stored for one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameRecord {
    pub frame_id: u64,
    pub key_set: KeyInstanceSet,
    pub planes: Vec<Plane>,
    pub descriptors: Vec<Descriptor>,
}

/// A ranked loop-frame candidate with its supporting descriptor pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateScore {
    pub frame_id: u64,
    /// Number of matched (query, stored) descriptor pairs.
    pub votes: usize,
    /// The pairs themselves, query first.
    pub matched_pairs: Vec<(Descriptor, Descriptor)>,
}

#[derive(Clone, Copy, Debug)]
struct DescRef {
    slot: u32,
    idx: u32,
}

/// Hash-table descriptor store plus per-frame records.
///
/// Single-writer, multi-reader: queries may run concurrently with each other;
/// inserts must be externally ordered after in-flight queries.
#[derive(Debug, Clone)]
pub struct DescriptorDB {
    resolution: f64,
    frames: Vec<FrameRecord>,
    frame_slots: HashMap<u64, u32>,
    buckets: HashMap<HashKey, Vec<DescRef>>,
    descriptor_count: usize,
}

impl DescriptorDB {
    /// `resolution` must match the quantization used to build descriptors.
    pub fn new(resolution: f64) -> Self {
        DescriptorDB {
            resolution,
            frames: Vec::new(),
            frame_slots: HashMap::new(),
            buckets: HashMap::new(),
            descriptor_count: 0,
        }
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn frame_count(&self) -> usize {
        self.frames.len()
    }

    pub fn descriptor_count(&self) -> usize {
        self.descriptor_count
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn frame(&self, frame_id: u64) -> Option<&FrameRecord> {
        self.frame_slots
            .get(&frame_id)
            .map(|&slot| &self.frames[slot as usize])
    }

    pub fn frames(&self) -> impl Iterator<Item = &FrameRecord> {
        self.frames.iter()
    }

    /// Every stored descriptor, enumerated through the hash buckets.
    pub fn iter_bucketed(&self) -> impl Iterator<Item = &Descriptor> {
        self.buckets
            .values()
            .flat_map(move |bucket| bucket.iter().map(move |&r| self.deref(r)))
    }

    pub fn last_frame_id(&self) -> Option<u64> {
        self.frames.last().map(|f| f.frame_id)
    }

    /// Registers a frame and indexes its descriptors. Frame ids must be
    /// strictly increasing across inserts.
    pub fn insert_frame(
        &mut self,
        descriptors: Vec<Descriptor>,
        key_set: KeyInstanceSet,
        planes: Vec<Plane>,
    ) -> Result<(), DbError> {
        let frame_id = key_set.frame_id();
        if let Some(last) = self.last_frame_id() {
            if frame_id <= last {
                return Err(DbError::OutOfOrderFrame { frame_id, last });
            }
        }
        for d in &descriptors {
            if d.frame_id != frame_id {
                return Err(DbError::FrameMismatch(d.frame_id, frame_id));
            }
        }
        let slot = self.frames.len() as u32;
        for (idx, d) in descriptors.iter().enumerate() {
            let key = hash_key(d, self.resolution);
            self.buckets.entry(key).or_default().push(DescRef {
                slot,
                idx: idx as u32,
            });
        }
        self.descriptor_count += descriptors.len();
        self.frame_slots.insert(frame_id, slot);
        self.frames.push(FrameRecord {
            frame_id,
            key_set,
            planes,
            descriptors,
        });
        Ok(())
    }

    fn deref(&self, r: DescRef) -> &Descriptor {
        &self.frames[r.slot as usize].descriptors[r.idx as usize]
    }

    fn excluded(&self, query_frame: u64, stored_frame: u64, cfg: &MatchConfig) -> bool {
        match cfg.temporal_exclusion {
            None => false,
            Some(window) => query_frame.saturating_sub(stored_frame) <= window,
        }
    }

    fn pair_matches(query: &Descriptor, stored: &Descriptor, cfg: &MatchConfig) -> bool {
        for i in 0..3 {
            if (query.sides[i] - stored.sides[i]).abs() > cfg.side_tol {
                return false;
            }
        }
        if cfg.require_label_match {
            for v in 0..3 {
                if query.vertices[v].label != stored.vertices[v].label {
                    return false;
                }
                let a = query.vertices[v].size.max(1) as f64;
                let b = stored.vertices[v].size.max(1) as f64;
                if a.max(b) / a.min(b) > cfg.size_ratio_tol {
                    return false;
                }
            }
        }
        true
    }

    /// All stored descriptors matching the query under side / label / size
    /// tests, excluding the temporal window around the query's frame.
    pub fn match_descriptor(&self, query: &Descriptor, cfg: &MatchConfig) -> Vec<&Descriptor> {
        let mut out = Vec::new();
        self.for_each_match(query, cfg, |_, d| out.push(d));
        out
    }

    fn for_each_match<'a>(
        &'a self,
        query: &Descriptor,
        cfg: &MatchConfig,
        mut f: impl FnMut(DescRef, &'a Descriptor),
    ) {
        let center = hash_key(query, self.resolution);
        let probe = ((cfg.side_tol / self.resolution).ceil() as i64).max(1);
        for dx in -probe..=probe {
            for dy in -probe..=probe {
                for dz in -probe..=probe {
                    let Some(bucket) = self.buckets.get(&center.offset([dx, dy, dz])) else {
                        continue;
                    };
                    for &r in bucket {
                        let stored = self.deref(r);
                        if self.excluded(query.frame_id, stored.frame_id, cfg) {
                            continue;
                        }
                        if Self::pair_matches(query, stored, cfg) {
                            f(r, stored);
                        }
                    }
                }
            }
        }
    }

    /// Matches every query descriptor, aggregates one vote per matched pair
    /// onto the stored frame, and returns the top frames by votes (ties go to
    /// the more recent frame).
    pub fn retrieve_candidates(
        &self,
        query_descriptors: &[Descriptor],
        cfg: &MatchConfig,
    ) -> Vec<CandidateScore> {
        let mut per_frame: HashMap<u64, Vec<(u32, DescRef)>> = HashMap::new();
        for (q_idx, query) in query_descriptors.iter().enumerate() {
            self.for_each_match(query, cfg, |r, stored| {
                per_frame
                    .entry(stored.frame_id)
                    .or_default()
                    .push((q_idx as u32, r));
            });
        }
        let mut ranked: Vec<(u64, Vec<(u32, DescRef)>)> = per_frame.into_iter().collect();
        ranked.sort_by(|a, b| b.1.len().cmp(&a.1.len()).then(b.0.cmp(&a.0)));
        ranked.truncate(cfg.num_candidates);
        ranked
            .into_iter()
            .map(|(frame_id, pairs)| CandidateScore {
                frame_id,
                votes: pairs.len(),
                matched_pairs: pairs
                    .into_iter()
                    .map(|(q_idx, r)| {
                        (
                            query_descriptors[q_idx as usize].clone(),
                            self.deref(r).clone(),
                        )
                    })
                    .collect(),
            })
            .collect()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), DbError> {
        let mut writer = BufWriter::new(File::create(path)?);
        self.write_to(&mut writer)?;
        writer.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, DbError> {
        let mut reader = BufReader::new(File::open(path)?);
        Self::read_from(&mut reader)
    }

    /// Versioned binary dump; see `write_*` helpers below for the exact
    /// field layout. Frames are written in insertion order so a reload
    /// rebuilds identical buckets and a re-serialization is byte-identical.
    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<(), DbError> {
        w.write_all(&DB_MAGIC)?;
        w.write_all(&DB_VERSION.to_le_bytes())?;
        w.write_all(&self.resolution.to_le_bytes())?;
        w.write_all(&(self.frames.len() as u64).to_le_bytes())?;
        for frame in &self.frames {
            w.write_all(&frame.frame_id.to_le_bytes())?;
            w.write_all(&(frame.key_set.len() as u32).to_le_bytes())?;
            for inst in frame.key_set.instances() {
                write_instance(w, inst)?;
            }
            w.write_all(&(frame.planes.len() as u32).to_le_bytes())?;
            for plane in &frame.planes {
                write_point(w, &plane.center)?;
                write_vector(w, &plane.normal)?;
                w.write_all(&[plane.layer])?;
                w.write_all(&plane.support.to_le_bytes())?;
            }
            w.write_all(&(frame.descriptors.len() as u32).to_le_bytes())?;
            for d in &frame.descriptors {
                for v in 0..3 {
                    write_instance(w, &d.vertices[v])?;
                }
                for v in 0..3 {
                    w.write_all(&d.key_indices[v].to_le_bytes())?;
                }
                for v in 0..3 {
                    w.write_all(&d.sides[v].to_le_bytes())?;
                }
                write_point(w, &d.centroid)?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self, DbError> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if magic != DB_MAGIC {
            return Err(DbError::Corrupt("bad magic, expected \"RTDB\"".into()));
        }
        let version = read_u32(r)?;
        if version != DB_VERSION {
            return Err(DbError::Corrupt(format!(
                "unsupported version {version}, expected {DB_VERSION}"
            )));
        }
        let resolution = read_f64(r)?;
        if !(resolution.is_finite() && resolution > 0.0) {
            return Err(DbError::Corrupt(format!("bad resolution {resolution}")));
        }
        let frame_count = read_u64(r)?;
        let mut db = DescriptorDB::new(resolution);
        for _ in 0..frame_count {
            let frame_id = read_u64(r)?;
            let n_instances = read_u32(r)? as usize;
            let mut instances = Vec::with_capacity(n_instances.min(1 << 16));
            for _ in 0..n_instances {
                instances.push(read_instance(r)?);
            }
            let key_set = KeyInstanceSet::new(instances, frame_id);
            let n_planes = read_u32(r)? as usize;
            let mut planes = Vec::with_capacity(n_planes.min(1 << 16));
            for _ in 0..n_planes {
                let center = read_point(r)?;
                let normal = read_vector(r)?;
                let layer = read_u8(r)?;
                let support = read_u32(r)?;
                if layer > 4 {
                    return Err(DbError::Corrupt(format!(
                        "plane layer {layer} out of range"
                    )));
                }
                planes.push(Plane {
                    center,
                    normal: Unit::new_unchecked(normal),
                    layer,
                    support,
                });
            }
            let n_desc = read_u32(r)? as usize;
            let mut descriptors = Vec::with_capacity(n_desc.min(1 << 16));
            for _ in 0..n_desc {
                let vertices = [read_instance(r)?, read_instance(r)?, read_instance(r)?];
                let key_indices = [read_u32(r)?, read_u32(r)?, read_u32(r)?];
                let sides = [read_f64(r)?, read_f64(r)?, read_f64(r)?];
                let centroid = read_point(r)?;
                descriptors.push(Descriptor {
                    vertices,
                    key_indices,
                    sides,
                    centroid,
                    frame_id,
                });
            }
            db.insert_frame(descriptors, key_set, planes)
                .map_err(|e| DbError::Corrupt(format!("frame order: {e}")))?;
        }
        Ok(db)
    }
}

fn write_point<W: Write>(w: &mut W, p: &Point3<f64>) -> io::Result<()> {
    for v in [p.x, p.y, p.z] {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn write_vector<W: Write>(w: &mut W, v: &Vector3<f64>) -> io::Result<()> {
    for c in [v.x, v.y, v.z] {
        w.write_all(&c.to_le_bytes())?;
    }
    Ok(())
}

fn write_instance<W: Write>(w: &mut W, inst: &Instance) -> io::Result<()> {
    write_point(w, &inst.centroid)?;
    w.write_all(&[inst.label.indicator()])?;
    w.write_all(&inst.size.to_le_bytes())?;
    w.write_all(&inst.first_index.to_le_bytes())?;
    Ok(())
}

fn read_u8<R: Read>(r: &mut R) -> Result<u8, DbError> {
    let mut buf = [0u8; 1];
    r.read_exact(&mut buf)?;
    Ok(buf[0])
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32, DbError> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64, DbError> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64, DbError> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(f64::from_le_bytes(buf))
}

fn read_point<R: Read>(r: &mut R) -> Result<Point3<f64>, DbError> {
    Ok(Point3::new(read_f64(r)?, read_f64(r)?, read_f64(r)?))
}

fn read_vector<R: Read>(r: &mut R) -> Result<Vector3<f64>, DbError> {
    Ok(Vector3::new(read_f64(r)?, read_f64(r)?, read_f64(r)?))
}

fn read_instance<R: Read>(r: &mut R) -> Result<Instance, DbError> {
    let centroid = read_point(r)?;
    let label = read_u8(r)?;
    let size = read_u32(r)?;
    let first_index = read_u32(r)?;
    let label = InstanceLabel::from_indicator(label)
        .ok_or_else(|| DbError::Corrupt(format!("bad instance label {label}")))?;
    Ok(Instance {
        centroid,
        label,
        size,
        first_index,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::descriptor::{build_descriptors, DescriptorConfig};
    use proptest::prelude::*;
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn instance(x: f64, y: f64, z: f64, label: InstanceLabel, size: u32) -> Instance {
        Instance {
            centroid: Point3::new(x, y, z),
            label,
            size,
            first_index: 0,
        }
    }

    /// A random key set whose triangles mostly fall inside the default side
    /// band.
    fn random_key_set(rng: &mut ChaCha8Rng, frame_id: u64, n: usize) -> KeyInstanceSet {
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

    fn descriptors_for(set: &KeyInstanceSet) -> Vec<Descriptor> {
        build_descriptors(set, &DescriptorConfig::default())
    }

    fn no_exclusion() -> MatchConfig {
        MatchConfig {
            temporal_exclusion: None,
            ..MatchConfig::default()
        }
    }

    #[test]
    fn self_match_finds_itself() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let set = random_key_set(&mut rng, 0, 10);
        let descs = descriptors_for(&set);
        assert!(!descs.is_empty());
        let mut db = DescriptorDB::new(0.2);
        db.insert_frame(descs.clone(), set, Vec::new()).unwrap();
        let found = db.match_descriptor(&descs[0], &no_exclusion());
        assert!(found.iter().any(|d| **d == descs[0]));
    }

    #[test]
    fn label_mismatch_rejected() {
        let cfg = no_exclusion();
        let make = |labels: [InstanceLabel; 3], frame: u64| {
            let a = instance(0.0, 0.0, 0.0, labels[0], 10);
            let b = instance(10.0, 0.0, 0.0, labels[1], 10);
            let c = instance(0.0, 17.0, 0.0, labels[2], 10);
            let set = KeyInstanceSet::new(vec![a, b, c], frame);
            descriptors_for(&set)
        };
        use InstanceLabel::{Arp, Rrp};
        let stored = make([Arp, Arp, Rrp], 0);
        assert_eq!(stored.len(), 1);
        let query = make([Arp, Arp, Arp], 1);
        let mut db = DescriptorDB::new(0.2);
        let set = KeyInstanceSet::new(Vec::new(), 0);
        db.insert_frame(stored, set, Vec::new()).unwrap();
        // Congruent sides, mismatched labels: rejected with instance
        // matching, admitted without.
        assert!(db.match_descriptor(&query[0], &cfg).is_empty());
        let relaxed = MatchConfig {
            require_label_match: false,
            ..cfg
        };
        assert_eq!(db.match_descriptor(&query[0], &relaxed).len(), 1);
    }

    #[test]
    fn size_ratio_rejected() {
        let cfg = no_exclusion();
        let make = |size: u32, frame: u64| {
            let a = instance(0.0, 0.0, 0.0, InstanceLabel::Arp, size);
            let b = instance(10.0, 0.0, 0.0, InstanceLabel::Arp, 10);
            let c = instance(0.0, 17.0, 0.0, InstanceLabel::Arp, 10);
            descriptors_for(&KeyInstanceSet::new(vec![a, b, c], frame))
        };
        let stored = make(10, 0);
        let query = make(40, 1);
        let mut db = DescriptorDB::new(0.2);
        db.insert_frame(stored, KeyInstanceSet::new(Vec::new(), 0), Vec::new())
            .unwrap();
        assert!(db.match_descriptor(&query[0], &cfg).is_empty());
        // Ratio 4 passes once the tolerance is loosened.
        let loose = MatchConfig {
            size_ratio_tol: 5.0,
            ..cfg
        };
        assert_eq!(db.match_descriptor(&query[0], &loose).len(), 1);
    }

    #[test]
    fn out_of_order_insert_rejected() {
        let mut db = DescriptorDB::new(0.2);
        db.insert_frame(Vec::new(), KeyInstanceSet::new(Vec::new(), 5), Vec::new())
            .unwrap();
        let err = db
            .insert_frame(Vec::new(), KeyInstanceSet::new(Vec::new(), 5), Vec::new())
            .unwrap_err();
        assert!(matches!(err, DbError::OutOfOrderFrame { .. }));
    }

    #[test]
    fn insert_conserves_descriptor_count() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut db = DescriptorDB::new(0.2);
        let mut total = 0;
        let mut inserted: Vec<(u64, [u64; 3])> = Vec::new();
        for frame in 0..5 {
            let set = random_key_set(&mut rng, frame, 12);
            let descs = descriptors_for(&set);
            total += descs.len();
            inserted.extend(descs.iter().map(|d| (frame, d.sides.map(f64::to_bits))));
            db.insert_frame(descs, set, Vec::new()).unwrap();
        }
        assert_eq!(db.descriptor_count(), total);
        let stored: usize = db.frames().map(|f| f.descriptors.len()).sum();
        assert_eq!(stored, total);
        // Enumerating the buckets recovers the inserted multiset.
        let mut bucketed: Vec<(u64, [u64; 3])> = db
            .iter_bucketed()
            .map(|d| (d.frame_id, d.sides.map(f64::to_bits)))
            .collect();
        bucketed.sort_unstable();
        inserted.sort_unstable();
        assert_eq!(bucketed, inserted);
    }

    #[test]
    fn empty_insert_registers_frame_without_buckets() {
        let mut db = DescriptorDB::new(0.2);
        db.insert_frame(Vec::new(), KeyInstanceSet::new(Vec::new(), 9), Vec::new())
            .unwrap();
        assert_eq!(db.frame_count(), 1);
        assert!(db.frame(9).is_some());
        assert_eq!(db.iter_bucketed().count(), 0);
    }

    #[test]
    fn self_retrieval_with_exclusion_disabled() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let set = random_key_set(&mut rng, 4, 12);
        let descs = descriptors_for(&set);
        let mut db = DescriptorDB::new(0.2);
        db.insert_frame(descs.clone(), set, Vec::new()).unwrap();
        let candidates = db.retrieve_candidates(&descs, &no_exclusion());
        assert_eq!(candidates[0].frame_id, 4);
        assert!(candidates[0].votes >= descs.len());
    }

    #[test]
    fn exclusion_window_hides_recent_frames() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let set = random_key_set(&mut rng, 4, 12);
        let descs = descriptors_for(&set);
        let mut db = DescriptorDB::new(0.2);
        db.insert_frame(descs.clone(), set, Vec::new()).unwrap();
        let cfg = MatchConfig {
            temporal_exclusion: Some(100),
            ..MatchConfig::default()
        };
        // Query frame 4 vs stored frame 4: inside the window.
        assert!(db.retrieve_candidates(&descs, &cfg).is_empty());
        // A much later query sees it again.
        let late: Vec<Descriptor> = descs
            .iter()
            .map(|d| Descriptor {
                frame_id: 400,
                ..d.clone()
            })
            .collect();
        assert!(!db.retrieve_candidates(&late, &cfg).is_empty());
    }

    #[test]
    fn empty_db_empty_candidates() {
        let db = DescriptorDB::new(0.2);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let set = random_key_set(&mut rng, 3, 8);
        assert!(db
            .retrieve_candidates(&descriptors_for(&set), &no_exclusion())
            .is_empty());
    }

    #[test]
    fn vote_ranking_two_frames() {
        // Frame 0 shares 10 descriptors with the query, frame 1 shares 2.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let query_set = random_key_set(&mut rng, 50, 12);
        let query = descriptors_for(&query_set);
        assert!(query.len() >= 12, "query has {}", query.len());

        let reframe = |d: &Descriptor, frame: u64| Descriptor {
            frame_id: frame,
            ..d.clone()
        };
        let frame0: Vec<Descriptor> = query[..10].iter().map(|d| reframe(d, 0)).collect();
        let frame1: Vec<Descriptor> = query[10..12].iter().map(|d| reframe(d, 1)).collect();
        let mut db = DescriptorDB::new(0.2);
        db.insert_frame(frame0, KeyInstanceSet::new(Vec::new(), 0), Vec::new())
            .unwrap();
        db.insert_frame(frame1, KeyInstanceSet::new(Vec::new(), 1), Vec::new())
            .unwrap();

        let candidates = db.retrieve_candidates(&query, &no_exclusion());
        assert_eq!(candidates.len(), 2);
        assert_eq!(candidates[0].frame_id, 0);
        assert_eq!(candidates[0].votes, 10);
        assert_eq!(candidates[1].frame_id, 1);
        assert_eq!(candidates[1].votes, 2);
        // Vote conservation: votes sum equals matched pair count.
        let pairs: usize = candidates.iter().map(|c| c.matched_pairs.len()).sum();
        assert_eq!(pairs, 12);
    }

    /// Linear scan with re-stated predicates, independent of the bucket
    /// probing path.
    fn linear_scan<'a>(
        db: &'a DescriptorDB,
        query: &Descriptor,
        cfg: &MatchConfig,
    ) -> Vec<&'a Descriptor> {
        let mut out = Vec::new();
        for frame in db.frames() {
            if let Some(window) = cfg.temporal_exclusion {
                if query.frame_id.saturating_sub(frame.frame_id) <= window {
                    continue;
                }
            }
            for d in &frame.descriptors {
                let sides_ok = (0..3).all(|i| (query.sides[i] - d.sides[i]).abs() <= cfg.side_tol);
                let instances_ok = !cfg.require_label_match
                    || (0..3).all(|v| {
                        let q = &query.vertices[v];
                        let s = &d.vertices[v];
                        let (a, b) = (q.size.max(1) as f64, s.size.max(1) as f64);
                        q.label == s.label && a.max(b) / a.min(b) <= cfg.size_ratio_tol
                    });
                if sides_ok && instances_ok {
                    out.push(d);
                }
            }
        }
        out
    }

    fn sorted_by_ptr(mut v: Vec<&Descriptor>) -> Vec<*const Descriptor> {
        let mut ptrs: Vec<*const Descriptor> = v.drain(..).map(|d| d as *const _).collect();
        ptrs.sort();
        ptrs
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]

        #[test]
        fn bucketed_matches_linear_scan(seed in 0u64..5000, label_match in proptest::bool::ANY) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut db = DescriptorDB::new(0.2);
            for frame in 0..6u64 {
                let set = random_key_set(&mut rng, frame, 10);
                let descs = descriptors_for(&set);
                db.insert_frame(descs, set, Vec::new()).unwrap();
            }
            let query_set = random_key_set(&mut rng, 300, 10);
            let cfg = MatchConfig {
                require_label_match: label_match,
                temporal_exclusion: Some(2),
                ..MatchConfig::default()
            };
            for q in descriptors_for(&query_set) {
                let bucketed = sorted_by_ptr(db.match_descriptor(&q, &cfg));
                let linear = sorted_by_ptr(linear_scan(&db, &q, &cfg));
                prop_assert_eq!(bucketed, linear);
            }
        }

        #[test]
        fn loosening_tolerances_is_monotone(seed in 0u64..2000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut db = DescriptorDB::new(0.2);
            for frame in 0..4u64 {
                let set = random_key_set(&mut rng, frame, 9);
                let descs = descriptors_for(&set);
                db.insert_frame(descs, set, Vec::new()).unwrap();
            }
            let query_set = random_key_set(&mut rng, 300, 9);
            let tight = MatchConfig { temporal_exclusion: None, ..MatchConfig::default() };
            let loose = MatchConfig {
                side_tol: tight.side_tol * 2.0,
                size_ratio_tol: tight.size_ratio_tol * 2.0,
                ..tight
            };
            for q in descriptors_for(&query_set) {
                let tight_set = sorted_by_ptr(db.match_descriptor(&q, &tight));
                let loose_set = sorted_by_ptr(db.match_descriptor(&q, &loose));
                for p in &tight_set {
                    prop_assert!(loose_set.contains(p));
                }
            }
        }

        #[test]
        fn label_matching_prunes(seed in 0u64..2000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut db = DescriptorDB::new(0.2);
            for frame in 0..4u64 {
                let set = random_key_set(&mut rng, frame, 9);
                let descs = descriptors_for(&set);
                db.insert_frame(descs, set, Vec::new()).unwrap();
            }
            let query_set = random_key_set(&mut rng, 300, 9);
            let with = MatchConfig { temporal_exclusion: None, ..MatchConfig::default() };
            let without = MatchConfig { require_label_match: false, ..with };
            for q in descriptors_for(&query_set) {
                let strict = sorted_by_ptr(db.match_descriptor(&q, &with));
                let relaxed = sorted_by_ptr(db.match_descriptor(&q, &without));
                for p in &strict {
                    prop_assert!(relaxed.contains(p));
                }
            }
        }

        #[test]
        fn vote_conservation(seed in 0u64..2000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut db = DescriptorDB::new(0.2);
            for frame in 0..5u64 {
                let set = random_key_set(&mut rng, frame, 9);
                let descs = descriptors_for(&set);
                db.insert_frame(descs, set, Vec::new()).unwrap();
            }
            let query = descriptors_for(&random_key_set(&mut rng, 300, 9));
            let cfg = MatchConfig {
                temporal_exclusion: None,
                num_candidates: usize::MAX,
                ..MatchConfig::default()
            };
            let candidates = db.retrieve_candidates(&query, &cfg);
            let total_pairs: usize = query.iter().map(|q| db.match_descriptor(q, &cfg).len()).sum();
            let votes: usize = candidates.iter().map(|c| c.votes).sum();
            prop_assert_eq!(votes, total_pairs);
            for c in &candidates {
                prop_assert_eq!(c.votes, c.matched_pairs.len());
                prop_assert!(c.votes >= 1);
            }
        }

        #[test]
        fn serialization_round_trips_bit_exact(seed in 0u64..500) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut db = DescriptorDB::new(0.2);
            for frame in 0..3u64 {
                let set = random_key_set(&mut rng, frame, 8);
                let descs = descriptors_for(&set);
                let planes = vec![Plane {
                    center: Point3::new(rng.random::<f64>(), 1.0, 2.0),
                    normal: Unit::new_normalize(Vector3::new(0.3, 0.4, rng.random::<f64>() + 0.1)),
                    layer: (frame % 5) as u8,
                    support: 42,
                }];
                db.insert_frame(descs, set, planes).unwrap();
            }
            let mut bytes = Vec::new();
            db.write_to(&mut bytes).unwrap();
            let reloaded = DescriptorDB::read_from(&mut bytes.as_slice()).unwrap();
            let mut bytes2 = Vec::new();
            reloaded.write_to(&mut bytes2).unwrap();
            prop_assert_eq!(&bytes, &bytes2);
            prop_assert_eq!(db.descriptor_count(), reloaded.descriptor_count());
            // Retrieval behaves identically on the reloaded database.
            let query = descriptors_for(&random_key_set(&mut rng, 300, 8));
            let cfg = MatchConfig { temporal_exclusion: None, ..MatchConfig::default() };
            let a = db.retrieve_candidates(&query, &cfg);
            let b = reloaded.retrieve_candidates(&query, &cfg);
            prop_assert_eq!(a, b);
        }
    }
}
