//! Key-instance segmentation.
//!
//! Keypoints of each class are grouped into clusters: exact connected
//! components of the radius graph (edge iff pairwise distance ≤ radius),
//! accelerated by a uniform grid with cell size equal to the radius, and
//! summarized as instances (centroid, origin label, size). The key-instance
//! set keeps the `k` largest, preferring ARP-derived instances.

use std::collections::HashMap;

use nalgebra::Point3;

use crate::scan_io::PointCloud;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClusterConfig {
    /// Neighbor distance for cluster connectivity, meters (inclusive).
    pub radius: f64,
    pub min_cluster_size: usize,
    pub max_cluster_size: usize,
    /// Key-instance budget per frame.
    pub k: usize,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        ClusterConfig {
            radius: 0.5,
            min_cluster_size: 5,
            max_cluster_size: 10_000,
            k: 20,
        }
    }
}

/// Which keypoint class a cluster or instance came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum InstanceLabel {
    Rrp,
    Arp,
}

impl InstanceLabel {
    /// Indicator value: 1 for ARP-derived, 0 for RRP-derived.
    pub fn indicator(self) -> u8 {
        match self {
            InstanceLabel::Arp => 1,
            InstanceLabel::Rrp => 0,
        }
    }

    pub fn from_indicator(v: u8) -> Option<Self> {
        match v {
            0 => Some(InstanceLabel::Rrp),
            1 => Some(InstanceLabel::Arp),
            _ => None,
        }
    }
}

/// A connected component of keypoints. Member indices point into the source
/// cloud and are kept sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cluster {
    pub members: Vec<u32>,
    pub source: InstanceLabel,
}

/// Cluster summary used as a triangle vertex.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    /// Arithmetic mean of member positions, sensor frame.
    pub centroid: Point3<f64>,
    pub label: InstanceLabel,
    /// Member point count.
    pub size: u32,
    /// Smallest member point index; deterministic tie-breaker.
    pub first_index: u32,
}

/// The up-to-`k` instances describing one frame, ARP instances first, each
/// label block ordered by size descending (ties: centroid closer to the
/// sensor first, then lower first member index).
#[derive(Debug, Clone, PartialEq)]
pub struct KeyInstanceSet {
    instances: Vec<Instance>,
    frame_id: u64,
}

impl KeyInstanceSet {
    pub fn new(instances: Vec<Instance>, frame_id: u64) -> Self {
        KeyInstanceSet {
            instances,
            frame_id,
        }
    }

    pub fn instances(&self) -> &[Instance] {
        &self.instances
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn frame_id(&self) -> u64 {
        self.frame_id
    }
}

struct UnionFind {
    parent: Vec<u32>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n as u32).collect(),
        }
    }

    fn find(&mut self, i: u32) -> u32 {
        let mut root = i;
        while self.parent[root as usize] != root {
            root = self.parent[root as usize];
        }
        let mut cur = i;
        while self.parent[cur as usize] != root {
            let next = self.parent[cur as usize];
            self.parent[cur as usize] = root;
            cur = next;
        }
        root
    }

    fn union(&mut self, a: u32, b: u32) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[rb.max(ra) as usize] = rb.min(ra);
        }
    }
}

fn grid_cell(p: &Point3<f64>, radius: f64) -> (i64, i64, i64) {
    (
        (p.x / radius).floor() as i64,
        (p.y / radius).floor() as i64,
        (p.z / radius).floor() as i64,
    )
}

/// Exact connected components of the ≤-radius graph over the selected points.
/// Components outside `[min_cluster_size, max_cluster_size]` are discarded.
/// Output is canonical: members sorted ascending, clusters ordered by their
/// first member, independent of the input index order.
pub fn euclidean_cluster(
    cloud: &PointCloud,
    indices: &[u32],
    source: InstanceLabel,
    cfg: &ClusterConfig,
) -> Vec<Cluster> {
    if indices.is_empty() {
        return Vec::new();
    }
    let positions: Vec<Point3<f64>> = indices
        .iter()
        .map(|&i| cloud.point(i as usize).position())
        .collect();

    let mut grid: HashMap<(i64, i64, i64), Vec<u32>> = HashMap::new();
    for (slot, p) in positions.iter().enumerate() {
        grid.entry(grid_cell(p, cfg.radius))
            .or_default()
            .push(slot as u32);
    }

    let r2 = cfg.radius * cfg.radius;
    let mut uf = UnionFind::new(indices.len());
    for (slot, p) in positions.iter().enumerate() {
        let (cx, cy, cz) = grid_cell(p, cfg.radius);
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    let Some(neighbors) = grid.get(&(cx + dx, cy + dy, cz + dz)) else {
                        continue;
                    };
                    for &other in neighbors {
                        if other as usize <= slot {
                            continue;
                        }
                        let d = positions[slot] - positions[other as usize];
                        if d.norm_squared() <= r2 {
                            uf.union(slot as u32, other);
                        }
                    }
                }
            }
        }
    }

    let mut components: HashMap<u32, Vec<u32>> = HashMap::new();
    for slot in 0..indices.len() as u32 {
        components
            .entry(uf.find(slot))
            .or_default()
            .push(indices[slot as usize]);
    }
    let mut clusters: Vec<Cluster> = components
        .into_values()
        .filter(|members| {
            members.len() >= cfg.min_cluster_size && members.len() <= cfg.max_cluster_size
        })
        .map(|mut members| {
            members.sort_unstable();
            Cluster { members, source }
        })
        .collect();
    clusters.sort_by_key(|c| c.members[0]);
    clusters
}

/// Summarizes each cluster into an instance: centroid = mean of member
/// positions, label from the cluster source, size = member count.
pub fn make_instances(cloud: &PointCloud, clusters: &[Cluster]) -> Vec<Instance> {
    clusters
        .iter()
        .map(|cluster| {
            let mut sum = nalgebra::Vector3::zeros();
            for &i in &cluster.members {
                sum += cloud.point(i as usize).coords();
            }
            Instance {
                centroid: Point3::from(sum / cluster.members.len() as f64),
                label: cluster.source,
                size: cluster.members.len() as u32,
                first_index: cluster.members[0],
            }
        })
        .collect()
}

fn selection_order(a: &Instance, b: &Instance) -> std::cmp::Ordering {
    b.size
        .cmp(&a.size)
        .then_with(|| {
            a.centroid
                .coords
                .norm_squared()
                .total_cmp(&b.centroid.coords.norm_squared())
        })
        .then_with(|| a.first_index.cmp(&b.first_index))
}

/// Selects the key-instance set: the `k` largest ARP instances, topped up
/// with the largest RRP instances when fewer than `k` ARP instances exist.
pub fn build_key_instance_set(
    ari: &[Instance],
    rri: &[Instance],
    k: usize,
    frame_id: u64,
) -> KeyInstanceSet {
    debug_assert!(ari.iter().all(|i| i.label == InstanceLabel::Arp));
    debug_assert!(rri.iter().all(|i| i.label == InstanceLabel::Rrp));
    let mut ari: Vec<Instance> = ari.to_vec();
    ari.sort_by(selection_order);
    let mut selected: Vec<Instance> = ari.into_iter().take(k).collect();
    if selected.len() < k {
        let mut rri: Vec<Instance> = rri.to_vec();
        rri.sort_by(selection_order);
        let room = k - selected.len();
        selected.extend(rri.into_iter().take(room));
    }
    KeyInstanceSet::new(selected, frame_id)
}
