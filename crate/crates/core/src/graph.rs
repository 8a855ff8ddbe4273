//! Contact-graph snapshots and truncated network-distance queries.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::ids::DeviceId;
use crate::ingest::ContactEdge;
use crate::time::Timestamp;

/// Default cap on reported network distance.
pub const D_MAX: u8 = 12;

/// Marker for "not reached" in raw distance vectors.
pub const UNREACHED: u8 = u8::MAX;

/// Network distance with the cap applied: exact hop count up to the cap,
/// `Beyond` past it or when disconnected.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Distance {
    Hops(u8),
    Beyond,
}

impl Distance {
    pub fn hops(self) -> Option<u8> {
        match self {
            Distance::Hops(h) => Some(h),
            Distance::Beyond => None,
        }
    }

    /// Maps a raw BFS level, where `UNREACHED` means beyond the cap.
    pub fn from_raw(raw: u8) -> Self {
        if raw == UNREACHED {
            Distance::Beyond
        } else {
            Distance::Hops(raw)
        }
    }
}

impl fmt::Display for Distance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Distance::Hops(h) => write!(f, "{h}"),
            Distance::Beyond => f.write_str("BEYOND"),
        }
    }
}

impl Serialize for Distance {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Distance::Hops(h) => s.serialize_u8(*h),
            Distance::Beyond => s.serialize_str("BEYOND"),
        }
    }
}

/// Compressed undirected adjacency over dense node indices. Self-loops and
/// parallel edges are dropped at construction.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Adjacency {
    offsets: Vec<u32>,
    targets: Vec<u32>,
}

impl Adjacency {
    pub fn from_edges<I>(n: usize, edges: I) -> Self
    where
        I: IntoIterator<Item = (u32, u32)>,
    {
        let mut pairs: Vec<(u32, u32)> = Vec::new();
        for (u, v) in edges {
            assert!((u as usize) < n && (v as usize) < n, "edge ({u},{v}) out of range for {n} nodes");
            if u != v {
                pairs.push((u, v));
                pairs.push((v, u));
            }
        }
        pairs.sort_unstable();
        pairs.dedup();
        let mut offsets = vec![0u32; n + 1];
        for &(u, _) in &pairs {
            offsets[u as usize + 1] += 1;
        }
        for i in 0..n {
            offsets[i + 1] += offsets[i];
        }
        let targets = pairs.into_iter().map(|(_, v)| v).collect();
        Self { offsets, targets }
    }

    pub fn node_count(&self) -> usize {
        self.offsets.len().saturating_sub(1)
    }

    pub fn edge_count(&self) -> usize {
        self.targets.len() / 2
    }

    pub fn neighbors(&self, v: u32) -> &[u32] {
        let v = v as usize;
        &self.targets[self.offsets[v] as usize..self.offsets[v + 1] as usize]
    }

    pub fn degree(&self, v: u32) -> usize {
        self.neighbors(v).len()
    }

    pub fn edges(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        (0..self.node_count() as u32)
            .flat_map(move |u| self.neighbors(u).iter().filter(move |&&v| u < v).map(move |&v| (u, v)))
    }

    /// Level-synchronous BFS from all `sources` at once, expanding at most
    /// `cap` levels. Entry `v` is the distance to the nearest source, or
    /// [`UNREACHED`].
    pub fn bfs(&self, sources: &[u32], cap: u8) -> Vec<u8> {
        let mut dist = vec![UNREACHED; self.node_count()];
        let mut frontier = Vec::with_capacity(sources.len());
        for &s in sources {
            if dist[s as usize] != 0 {
                dist[s as usize] = 0;
                frontier.push(s);
            }
        }
        let mut next = Vec::new();
        let mut level = 0u8;
        while !frontier.is_empty() && level < cap {
            level += 1;
            for &u in &frontier {
                for &v in self.neighbors(u) {
                    if dist[v as usize] == UNREACHED {
                        dist[v as usize] = level;
                        next.push(v);
                    }
                }
            }
            std::mem::swap(&mut frontier, &mut next);
            next.clear();
        }
        dist
    }

    /// Capped single-pair distance with early exit once `to` is labelled.
    pub fn distance(&self, from: u32, to: u32, cap: u8) -> Distance {
        if from == to {
            return Distance::Hops(0);
        }
        let mut seen = vec![false; self.node_count()];
        seen[from as usize] = true;
        let mut frontier = vec![from];
        let mut next = Vec::new();
        let mut level = 0u8;
        while !frontier.is_empty() && level < cap {
            level += 1;
            for &u in &frontier {
                for &v in self.neighbors(u) {
                    if v == to {
                        return Distance::Hops(level);
                    }
                    if !seen[v as usize] {
                        seen[v as usize] = true;
                        next.push(v);
                    }
                }
            }
            std::mem::swap(&mut frontier, &mut next);
            next.clear();
        }
        Distance::Beyond
    }

    /// Same node set with every node where `keep[v]` is false isolated.
    pub fn induced(&self, keep: &[bool]) -> Adjacency {
        let edges = self.edges().filter(|&(u, v)| keep[u as usize] && keep[v as usize]);
        Adjacency::from_edges(self.node_count(), edges.collect::<Vec<_>>())
    }

    /// Connected-component label per node (labels are the smallest member).
    pub fn components(&self) -> Vec<u32> {
        let n = self.node_count();
        let mut label = vec![u32::MAX; n];
        let mut stack = Vec::new();
        for s in 0..n as u32 {
            if label[s as usize] != u32::MAX {
                continue;
            }
            label[s as usize] = s;
            stack.push(s);
            while let Some(u) = stack.pop() {
                for &v in self.neighbors(u) {
                    if label[v as usize] == u32::MAX {
                        label[v as usize] = s;
                        stack.push(v);
                    }
                }
            }
        }
        label
    }

    /// Size of the largest connected component among nodes with `member[v]`.
    /// Edges to non-members are ignored.
    pub fn largest_component_among(&self, member: &[bool]) -> usize {
        let n = self.node_count();
        let mut seen = vec![false; n];
        let mut best = 0;
        let mut stack = Vec::new();
        for s in 0..n {
            if !member[s] || seen[s] {
                continue;
            }
            seen[s] = true;
            stack.push(s as u32);
            let mut size = 0;
            while let Some(u) = stack.pop() {
                size += 1;
                for &v in self.neighbors(u) {
                    if member[v as usize] && !seen[v as usize] {
                        seen[v as usize] = true;
                        stack.push(v);
                    }
                }
            }
            best = best.max(size);
        }
        best
    }
}

/// Count of other users at each distance 1..=cap from a viewer.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DistanceHistogram {
    pub counts: Vec<u64>,
}

impl DistanceHistogram {
    pub fn at(&self, d: u8) -> u64 {
        if d == 0 {
            return 0;
        }
        self.counts.get(d as usize - 1).copied().unwrap_or(0)
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GraphError {
    #[error("unknown device {0}")]
    UnknownDevice(DeviceId),
}

/// Immutable snapshot of the interaction network over a sliding window.
#[derive(Clone, Debug)]
pub struct ContactGraph {
    as_of: Timestamp,
    window_secs: i64,
    generation: u64,
    max_distance: u8,
    ids: Vec<DeviceId>,
    index: HashMap<DeviceId, u32>,
    adjacency: Adjacency,
    edges: Vec<ContactEdge>,
}

impl ContactGraph {
    /// Builds a snapshot over `devices` (every registered device becomes a
    /// node, connected or not). Edges naming unknown devices are ignored.
    pub fn new(
        as_of: Timestamp,
        window_secs: i64,
        generation: u64,
        max_distance: u8,
        devices: impl IntoIterator<Item = DeviceId>,
        edges: Vec<ContactEdge>,
    ) -> Self {
        let mut ids: Vec<DeviceId> = devices.into_iter().collect();
        ids.sort_unstable();
        ids.dedup();
        let index: HashMap<DeviceId, u32> = ids.iter().enumerate().map(|(i, d)| (*d, i as u32)).collect();
        let mut kept: Vec<ContactEdge> = edges
            .into_iter()
            .filter(|e| e.a != e.b && index.contains_key(&e.a) && index.contains_key(&e.b))
            .collect();
        kept.sort();
        let adjacency = Adjacency::from_edges(ids.len(), kept.iter().map(|e| (index[&e.a], index[&e.b])));
        Self { as_of, window_secs, generation, max_distance, ids, index, adjacency, edges: kept }
    }

    pub fn as_of(&self) -> Timestamp {
        self.as_of
    }

    pub fn window_secs(&self) -> i64 {
        self.window_secs
    }

    pub fn generation(&self) -> u64 {
        self.generation
    }

    pub fn max_distance(&self) -> u8 {
        self.max_distance
    }

    pub fn devices(&self) -> &[DeviceId] {
        &self.ids
    }

    pub fn edges(&self) -> &[ContactEdge] {
        &self.edges
    }

    pub fn adjacency(&self) -> &Adjacency {
        &self.adjacency
    }

    pub fn contains(&self, d: &DeviceId) -> bool {
        self.index.contains_key(d)
    }

    pub fn degree(&self, d: &DeviceId) -> Result<usize, GraphError> {
        Ok(self.adjacency.degree(self.idx(d)?))
    }

    fn idx(&self, d: &DeviceId) -> Result<u32, GraphError> {
        self.index.get(d).copied().ok_or(GraphError::UnknownDevice(*d))
    }

    pub fn distance(&self, from: &DeviceId, to: &DeviceId) -> Result<Distance, GraphError> {
        let (f, t) = (self.idx(from)?, self.idx(to)?);
        Ok(self.adjacency.distance(f, t, self.max_distance))
    }

    /// Minimum capped distance from any source, for every device within the
    /// cap (sources map to 0). Unknown sources are skipped.
    pub fn multi_source_distances(&self, sources: &[DeviceId]) -> BTreeMap<DeviceId, u8> {
        let idx: Vec<u32> = sources.iter().filter_map(|s| self.index.get(s).copied()).collect();
        self.adjacency
            .bfs(&idx, self.max_distance)
            .into_iter()
            .enumerate()
            .filter(|&(_, d)| d != UNREACHED)
            .map(|(i, d)| (self.ids[i], d))
            .collect()
    }

    /// Raw BFS distances indexed like [`Self::devices`].
    pub fn distances_from(&self, source: &DeviceId) -> Result<Vec<u8>, GraphError> {
        Ok(self.adjacency.bfs(&[self.idx(source)?], self.max_distance))
    }

    pub fn user_count_histogram(&self, viewer: &DeviceId) -> Result<DistanceHistogram, GraphError> {
        let dist = self.distances_from(viewer)?;
        let mut counts = vec![0u64; self.max_distance as usize];
        for d in dist {
            if d != UNREACHED && d >= 1 {
                counts[d as usize - 1] += 1;
            }
        }
        Ok(DistanceHistogram { counts })
    }

    /// Debug dump: one `uuid_a uuid_b` pair per line, sorted.
    pub fn edge_list(&self) -> String {
        let mut out = String::new();
        for e in &self.edges {
            out.push_str(&format!("{} {}\n", e.a, e.b));
        }
        out
    }
}
