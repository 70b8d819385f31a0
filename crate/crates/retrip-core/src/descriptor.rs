//! Triangle descriptors over key-instance centroids.
//!
//! Every 3-combination of key instances becomes a candidate triangle. The
//! vertices are relabeled into canonical order (I1-I2 the shortest side,
//! I2-I3 the middle, I1-I3 the longest) so congruent triangles from
//! different viewpoints produce identical sorted side lengths. Triangles with
//! a side outside the admissible band or nearly collinear vertices are
//! rejected. Quantized sorted sides form the hash key for retrieval.

use nalgebra::Point3;

use crate::instances::{Instance, KeyInstanceSet};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DescriptorConfig {
    /// Shortest admissible side, meters. Small triangles repeat across
    /// unrelated places, so they are filtered out.
    pub side_min: f64,
    /// Longest admissible side, meters; bounds the hash range.
    pub side_max: f64,
    /// Hash quantization step, meters.
    pub resolution: f64,
    /// Minimum triangle-inequality slack; below this the triangle counts as
    /// degenerate (collinear vertices).
    pub degenerate_eps: f64,
}

impl Default for DescriptorConfig {
    fn default() -> Self {
        DescriptorConfig {
            side_min: 2.0,
            side_max: 120.0,
            resolution: 0.2,
            degenerate_eps: 0.01,
        }
    }
}

/// A canonicalized triangle over three key instances.
#[derive(Debug, Clone, PartialEq)]
pub struct Descriptor {
    /// Vertices in canonical order (I1, I2, I3).
    pub vertices: [Instance; 3],
    /// Key-set selection indices of the canonical vertices.
    pub key_indices: [u32; 3],
    /// Sorted side lengths (l12, l23, l13), meters, non-decreasing.
    pub sides: [f64; 3],
    /// Triangle centroid q = (μ1 + μ2 + μ3) / 3.
    pub centroid: Point3<f64>,
    /// Frame the descriptor was generated in.
    pub frame_id: u64,
}

/// Quantized sorted side lengths; the retrieval bucket address.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct HashKey(pub [i64; 3]);

impl HashKey {
    /// `floor(side / resolution)` per sorted side.
    pub fn quantize(sides: &[f64; 3], resolution: f64) -> HashKey {
        HashKey([
            (sides[0] / resolution).floor() as i64,
            (sides[1] / resolution).floor() as i64,
            (sides[2] / resolution).floor() as i64,
        ])
    }

    pub fn offset(self, d: [i64; 3]) -> HashKey {
        HashKey([self.0[0] + d[0], self.0[1] + d[1], self.0[2] + d[2]])
    }
}

/// Hash key of a descriptor at the given quantization.
pub fn hash_key(descriptor: &Descriptor, resolution: f64) -> HashKey {
    HashKey::quantize(&descriptor.sides, resolution)
}

fn distance(a: &Instance, b: &Instance) -> f64 {
    (a.centroid - b.centroid).norm()
}

/// Canonicalizes one instance triple into a descriptor, or rejects it.
///
/// Inputs are `(selection_index, instance)` pairs; the selection index is the
/// position in the key-instance set and breaks relabeling ties for isoceles
/// and equilateral triangles (lowest index set becomes I1). Rejection cases:
/// duplicate instances, any side outside `[side_min, side_max]`, triangle
/// inequality slack below `degenerate_eps`.
pub fn canonicalize_triangle(
    vertices: [(u32, &Instance); 3],
    frame_id: u64,
    cfg: &DescriptorConfig,
) -> Option<Descriptor> {
    let [a, b, c] = vertices;
    if a.0 == b.0 || b.0 == c.0 || a.0 == c.0 {
        return None;
    }
    // All six relabelings; keep those with non-decreasing sides and pick the
    // lexicographically smallest selection-index tuple among them. Scalene
    // triangles admit exactly one; ties only arise from equal side lengths.
    const PERMS: [[usize; 3]; 6] = [
        [0, 1, 2],
        [0, 2, 1],
        [1, 0, 2],
        [1, 2, 0],
        [2, 0, 1],
        [2, 1, 0],
    ];
    let verts = [a, b, c];
    let mut best: Option<[usize; 3]> = None;
    for perm in PERMS {
        let (v1, v2, v3) = (verts[perm[0]], verts[perm[1]], verts[perm[2]]);
        let l12 = distance(v1.1, v2.1);
        let l23 = distance(v2.1, v3.1);
        let l13 = distance(v1.1, v3.1);
        if !(l12 <= l23 && l23 <= l13) {
            continue;
        }
        let better = match best {
            None => true,
            Some(cur) => {
                let cur_key = [verts[cur[0]].0, verts[cur[1]].0, verts[cur[2]].0];
                let new_key = [v1.0, v2.0, v3.0];
                new_key < cur_key
            }
        };
        if better {
            best = Some(perm);
        }
    }
    let perm = best?;
    let (v1, v2, v3) = (verts[perm[0]], verts[perm[1]], verts[perm[2]]);
    let sides = [
        distance(v1.1, v2.1),
        distance(v2.1, v3.1),
        distance(v1.1, v3.1),
    ];
    if sides[0] < cfg.side_min || sides[2] > cfg.side_max {
        return None;
    }
    if sides[0] + sides[1] - sides[2] < cfg.degenerate_eps {
        return None;
    }
    let centroid =
        Point3::from((v1.1.centroid.coords + v2.1.centroid.coords + v3.1.centroid.coords) / 3.0);
    Some(Descriptor {
        vertices: [v1.1.clone(), v2.1.clone(), v3.1.clone()],
        key_indices: [v1.0, v2.0, v3.0],
        sides,
        centroid,
        frame_id,
    })
}

/// Enumerates all C(n, 3) instance triples of the key set in lexicographic
/// selection order and keeps the accepted canonical descriptors. Fewer than
/// three instances yield an empty list.
pub fn build_descriptors(key_set: &KeyInstanceSet, cfg: &DescriptorConfig) -> Vec<Descriptor> {
    let instances = key_set.instances();
    let n = instances.len();
    let mut out = Vec::new();
    if n < 3 {
        return out;
    }
    for i in 0..n {
        for j in (i + 1)..n {
            for k in (j + 1)..n {
                let triple = [
                    (i as u32, &instances[i]),
                    (j as u32, &instances[j]),
                    (k as u32, &instances[k]),
                ];
                if let Some(d) = canonicalize_triangle(triple, key_set.frame_id(), cfg) {
                    out.push(d);
                }
            }
        }
    }
    out
}
