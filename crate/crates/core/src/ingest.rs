//! Detection-record ingestion, co-presence stitching and contact-edge
//! derivation.
//!
//! Devices report what they observed: BLE scans carry the temporary
//! identifier the device broadcast and the one it received, ultrasound
//! exchanges add an estimated distance, and Wi-Fi checks carry a short-lived
//! access-point identifier. Records are kept as raw observations and resolved
//! lazily, so the derived intervals do not depend on arrival order.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::hash::{Hash, Hasher};

use serde::{Deserialize, Serialize};

use crate::config::IngestConfig;
use crate::ids::{DeviceId, DeviceRegistry};
use crate::time::Timestamp;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Channel {
    Ble,
    Ultrasound,
    Wifi,
}

impl Channel {
    pub fn is_proximity(self) -> bool {
        matches!(self, Channel::Ble | Channel::Ultrasound)
    }
}

/// One timestamped observation reported by a device. This is also the line
/// format of the replay log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionRecord {
    pub reporter: DeviceId,
    pub channel: Channel,
    /// Temporary identifier the reporter broadcast during the exchange
    /// (BLE/ultrasound).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub own_temp_id: Option<String>,
    /// Temporary identifier received from the peer (BLE/ultrasound).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub peer_temp_id: Option<String>,
    pub timestamp: Timestamp,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rssi: Option<i32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub est_distance_m: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wifi_temp_id: Option<String>,
}

impl Eq for DetectionRecord {}

impl Hash for DetectionRecord {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.reporter.hash(state);
        self.channel.hash(state);
        self.own_temp_id.hash(state);
        self.peer_temp_id.hash(state);
        self.timestamp.hash(state);
        self.rssi.hash(state);
        self.est_distance_m.map(f64::to_bits).hash(state);
        self.wifi_temp_id.hash(state);
    }
}

impl DetectionRecord {
    pub fn ble(reporter: DeviceId, own: &str, peer: &str, timestamp: Timestamp, rssi: i32) -> Self {
        Self {
            reporter,
            channel: Channel::Ble,
            own_temp_id: Some(own.to_string()),
            peer_temp_id: Some(peer.to_string()),
            timestamp,
            rssi: Some(rssi),
            est_distance_m: None,
            wifi_temp_id: None,
        }
    }

    pub fn ultrasound(
        reporter: DeviceId,
        own: &str,
        peer: &str,
        timestamp: Timestamp,
        distance_m: f64,
    ) -> Self {
        Self {
            reporter,
            channel: Channel::Ultrasound,
            own_temp_id: Some(own.to_string()),
            peer_temp_id: Some(peer.to_string()),
            timestamp,
            rssi: None,
            est_distance_m: Some(distance_m),
            wifi_temp_id: None,
        }
    }

    pub fn wifi(reporter: DeviceId, wifi_temp_id: &str, timestamp: Timestamp) -> Self {
        Self {
            reporter,
            channel: Channel::Wifi,
            own_temp_id: None,
            peer_temp_id: None,
            timestamp,
            rssi: None,
            est_distance_m: None,
            wifi_temp_id: Some(wifi_temp_id.to_string()),
        }
    }

    /// Checks that exactly the fields belonging to the channel are present.
    pub fn check_fields(&self) -> Result<(), IngestError> {
        let malformed = |m: &str| Err(IngestError::MalformedChannelFields(m.to_string()));
        let nonempty = |s: &Option<String>| s.as_deref().is_some_and(|s| !s.is_empty());
        match self.channel {
            Channel::Ble | Channel::Ultrasound => {
                if !nonempty(&self.own_temp_id) || !nonempty(&self.peer_temp_id) {
                    return malformed("proximity records need own_temp_id and peer_temp_id");
                }
                if self.wifi_temp_id.is_some() {
                    return malformed("wifi_temp_id is only valid on WIFI records");
                }
                if self.channel == Channel::Ble && self.est_distance_m.is_some() {
                    return malformed("est_distance_m is only valid on ULTRASOUND records");
                }
                if self.channel == Channel::Ultrasound {
                    if self.rssi.is_some() {
                        return malformed("rssi is only valid on BLE records");
                    }
                    match self.est_distance_m {
                        Some(d) if d.is_finite() && d >= 0.0 => {}
                        _ => return malformed("ULTRASOUND records need a finite est_distance_m >= 0"),
                    }
                }
            }
            Channel::Wifi => {
                if !nonempty(&self.wifi_temp_id) {
                    return malformed("WIFI records need wifi_temp_id");
                }
                if self.own_temp_id.is_some()
                    || self.peer_temp_id.is_some()
                    || self.rssi.is_some()
                    || self.est_distance_m.is_some()
                {
                    return malformed("WIFI records carry only wifi_temp_id");
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum IngestError {
    #[error("unknown reporter {0}")]
    UnknownReporter(DeviceId),
    #[error("timestamp {ts} outside the acceptance horizon [{from}, {to}]")]
    StaleTimestamp { ts: Timestamp, from: Timestamp, to: Timestamp },
    #[error("malformed channel fields: {0}")]
    MalformedChannelFields(String),
}

impl IngestError {
    pub fn reason(&self) -> &'static str {
        match self {
            IngestError::UnknownReporter(_) => "unknown-reporter",
            IngestError::StaleTimestamp { .. } => "stale-timestamp",
            IngestError::MalformedChannelFields(_) => "malformed-channel-fields",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Accepted {
    New,
    Duplicate,
}

/// Stitched span during which two devices were observed together.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoPresenceInterval {
    pub a: DeviceId,
    pub b: DeviceId,
    pub channel: Channel,
    pub start: Timestamp,
    pub end: Timestamp,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_distance_m: Option<f64>,
}

impl CoPresenceInterval {
    /// Builds an interval with the pair in canonical order.
    pub fn new(
        x: DeviceId,
        y: DeviceId,
        channel: Channel,
        start: Timestamp,
        end: Timestamp,
        min_distance_m: Option<f64>,
    ) -> Self {
        let (a, b) = if x <= y { (x, y) } else { (y, x) };
        Self { a, b, channel, start, end: end.max(start), min_distance_m }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ContactEdge {
    pub a: DeviceId,
    pub b: DeviceId,
    pub last_qualified_at: Timestamp,
}

/// Half-open time range `[start, end)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Window {
    pub start: Timestamp,
    pub end: Timestamp,
}

impl Window {
    pub fn ending_at(end: Timestamp, len: i64) -> Self {
        Self { start: end - len, end }
    }

    fn clip(&self, start: Timestamp, end: Timestamp) -> Option<(Timestamp, Timestamp)> {
        let s = start.max(self.start);
        let e = end.min(self.end);
        (s <= e && start < self.end && end >= self.start).then_some((s, e))
    }
}

/// Total length of the union of `spans`.
fn union_length(spans: &mut [(Timestamp, Timestamp)]) -> i64 {
    spans.sort_unstable();
    let mut total = 0;
    let mut cur: Option<(Timestamp, Timestamp)> = None;
    for &(s, e) in spans.iter() {
        match cur {
            Some((cs, ce)) if s <= ce => cur = Some((cs, ce.max(e))),
            Some((cs, ce)) => {
                total += ce - cs;
                cur = Some((s, e));
            }
            None => cur = Some((s, e)),
        }
    }
    if let Some((cs, ce)) = cur {
        total += ce - cs;
    }
    total
}

/// Emits an edge for every pair whose pooled BLE/ultrasound co-presence at or
/// below the distance bound reaches the proximity threshold, or whose
/// same-access-point co-presence reaches the Wi-Fi threshold. Only the part of
/// each interval inside `window` counts. Output is sorted.
pub fn derive_edges(
    intervals: &[CoPresenceInterval],
    window: Window,
    cfg: &IngestConfig,
) -> Vec<ContactEdge> {
    #[derive(Default)]
    struct PairSpans {
        prox: Vec<(Timestamp, Timestamp)>,
        wifi: Vec<(Timestamp, Timestamp)>,
    }
    let mut pairs: BTreeMap<(DeviceId, DeviceId), PairSpans> = BTreeMap::new();
    for iv in intervals {
        if iv.a == iv.b {
            continue;
        }
        let Some(span) = window.clip(iv.start, iv.end) else { continue };
        let key = if iv.a < iv.b { (iv.a, iv.b) } else { (iv.b, iv.a) };
        let entry = pairs.entry(key).or_default();
        if iv.channel.is_proximity() {
            if iv.min_distance_m.is_some_and(|d| d > cfg.max_distance_m) {
                continue;
            }
            entry.prox.push(span);
        } else {
            entry.wifi.push(span);
        }
    }

    let mut edges = Vec::new();
    for ((a, b), mut spans) in pairs {
        let mut last = None;
        if !spans.prox.is_empty() && union_length(&mut spans.prox) >= cfg.proximity_min_secs {
            last = spans.prox.iter().map(|s| s.1).max();
        }
        if !spans.wifi.is_empty() && union_length(&mut spans.wifi) >= cfg.wifi_min_secs {
            last = last.max(spans.wifi.iter().map(|s| s.1).max());
        }
        if let Some(last_qualified_at) = last {
            edges.push(ContactEdge { a, b, last_qualified_at });
        }
    }
    edges
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Owner {
    Unclaimed,
    One(u32),
    Ambiguous,
}

#[derive(Clone, Copy, Debug)]
struct ProximityObs {
    reporter: u32,
    peer_temp: u32,
    ts: Timestamp,
    rssi: Option<i32>,
    distance_m: Option<f64>,
}

#[derive(Clone, Copy, Debug)]
struct WifiObs {
    reporter: u32,
    wifi_temp: u32,
    ts: Timestamp,
}

#[derive(Default)]
struct SampleAgg {
    ultrasound_min: Option<f64>,
    ble_max_rssi: Option<i32>,
}

/// Ingest state machine: device registry, resolved temporary identifiers and
/// retained observations.
#[derive(Clone, Debug)]
pub struct Ingestor {
    config: IngestConfig,
    registry: DeviceRegistry,
    temp_ids: HashMap<String, u32>,
    owners: Vec<Owner>,
    proximity: Vec<ProximityObs>,
    wifi: Vec<WifiObs>,
    seen: HashSet<DetectionRecord>,
}

impl Ingestor {
    pub fn new(config: IngestConfig) -> Self {
        Self {
            config,
            registry: DeviceRegistry::new(),
            temp_ids: HashMap::new(),
            owners: Vec::new(),
            proximity: Vec::new(),
            wifi: Vec::new(),
            seen: HashSet::new(),
        }
    }

    pub fn config(&self) -> &IngestConfig {
        &self.config
    }

    pub fn registry(&self) -> &DeviceRegistry {
        &self.registry
    }

    pub fn registry_mut(&mut self) -> &mut DeviceRegistry {
        &mut self.registry
    }

    pub fn observation_count(&self) -> usize {
        self.proximity.len() + self.wifi.len()
    }

    /// Validates and records `rec`. Exact duplicates of retained records are
    /// accepted without being stored again.
    pub fn ingest(&mut self, rec: &DetectionRecord, now: Timestamp) -> Result<Accepted, IngestError> {
        self.check(rec, now)?;
        Ok(self.apply(rec))
    }

    /// Validation without mutation.
    pub fn check(&self, rec: &DetectionRecord, now: Timestamp) -> Result<(), IngestError> {
        if !self.registry.contains(&rec.reporter) {
            return Err(IngestError::UnknownReporter(rec.reporter));
        }
        rec.check_fields()?;
        let from = now - self.config.window_secs;
        let to = now + self.config.clock_skew_secs;
        if rec.timestamp < from || rec.timestamp > to {
            return Err(IngestError::StaleTimestamp { ts: rec.timestamp, from, to });
        }
        Ok(())
    }

    pub fn is_duplicate(&self, rec: &DetectionRecord) -> bool {
        self.seen.contains(rec)
    }

    /// Records an already-validated record (also the replay path, which
    /// skips the horizon check because the record was accepted once).
    pub fn apply(&mut self, rec: &DetectionRecord) -> Accepted {
        let Some(reporter) = self.registry.index_of(&rec.reporter) else {
            return Accepted::Duplicate;
        };
        if self.seen.contains(rec) {
            return Accepted::Duplicate;
        }
        self.seen.insert(rec.clone());
        match rec.channel {
            Channel::Ble | Channel::Ultrasound => {
                let own = self.intern(rec.own_temp_id.as_deref().unwrap_or_default());
                self.owners[own as usize] = match self.owners[own as usize] {
                    Owner::Unclaimed => Owner::One(reporter),
                    Owner::One(d) if d == reporter => Owner::One(d),
                    _ => Owner::Ambiguous,
                };
                let peer_temp = self.intern(rec.peer_temp_id.as_deref().unwrap_or_default());
                self.proximity.push(ProximityObs {
                    reporter,
                    peer_temp,
                    ts: rec.timestamp,
                    rssi: rec.rssi,
                    distance_m: if rec.channel == Channel::Ultrasound {
                        rec.est_distance_m
                    } else {
                        None
                    },
                });
            }
            Channel::Wifi => {
                let wifi_temp = self.intern(rec.wifi_temp_id.as_deref().unwrap_or_default());
                self.wifi.push(WifiObs { reporter, wifi_temp, ts: rec.timestamp });
            }
        }
        Accepted::New
    }

    fn intern(&mut self, s: &str) -> u32 {
        if let Some(&i) = self.temp_ids.get(s) {
            return i;
        }
        let i = self.owners.len() as u32;
        self.temp_ids.insert(s.to_string(), i);
        self.owners.push(Owner::Unclaimed);
        i
    }

    /// Drops observations and duplicate-detection keys older than `before`.
    pub fn prune(&mut self, before: Timestamp) {
        self.proximity.retain(|o| o.ts >= before);
        self.wifi.retain(|o| o.ts >= before);
        self.seen.retain(|r| r.timestamp >= before);
    }

    fn canonical(&self, x: u32, y: u32) -> (DeviceId, DeviceId) {
        let (a, b) = (self.registry.device(x), self.registry.device(y));
        if a <= b {
            (a, b)
        } else {
            (b, a)
        }
    }

    /// Co-presence intervals touching `window`. Samples a stitch gap beyond
    /// either end are included so that boundary intervals are clipped rather
    /// than truncated.
    pub fn intervals(&self, window: Window) -> Vec<CoPresenceInterval> {
        let gap = self.config.stitch_gap_secs;
        let lo = window.start - gap;
        let hi = window.end + gap;
        let mut out = self.proximity_intervals(lo, hi);
        out.extend(self.wifi_intervals(lo, hi));
        out
    }

    fn proximity_intervals(&self, lo: Timestamp, hi: Timestamp) -> Vec<CoPresenceInterval> {
        let mut samples: BTreeMap<((DeviceId, DeviceId), Timestamp), SampleAgg> = BTreeMap::new();
        for o in &self.proximity {
            if o.ts < lo || o.ts >= hi {
                continue;
            }
            let Owner::One(peer) = self.owners[o.peer_temp as usize] else { continue };
            if peer == o.reporter {
                continue;
            }
            let agg = samples.entry((self.canonical(o.reporter, peer), o.ts)).or_default();
            match o.distance_m {
                Some(d) => agg.ultrasound_min = Some(agg.ultrasound_min.map_or(d, |m: f64| m.min(d))),
                None => {
                    if let Some(r) = o.rssi {
                        agg.ble_max_rssi = Some(agg.ble_max_rssi.map_or(r, |m| m.max(r)));
                    }
                }
            }
        }

        let cfg = &self.config;
        let mut out = Vec::new();
        let mut current: Option<CoPresenceInterval> = None;
        let flush = |cur: &mut Option<CoPresenceInterval>, out: &mut Vec<CoPresenceInterval>| {
            if let Some(iv) = cur.take() {
                out.push(iv);
            }
        };
        for (((a, b), ts), agg) in samples {
            // Ultrasound, when present for the encounter, decides the range.
            let qualifies = match agg.ultrasound_min {
                Some(d) => d <= cfg.max_distance_m,
                None => agg.ble_max_rssi.is_some_and(|r| r >= cfg.rssi_cutoff_db),
            };
            let continues = current
                .as_ref()
                .is_some_and(|c| c.a == a && c.b == b && ts - c.end <= cfg.stitch_gap_secs);
            if !qualifies {
                if current.as_ref().is_some_and(|c| c.a == a && c.b == b) {
                    flush(&mut current, &mut out);
                }
                continue;
            }
            if continues {
                let c = current.as_mut().expect("checked above");
                c.end = ts;
                if let Some(d) = agg.ultrasound_min {
                    c.channel = Channel::Ultrasound;
                    c.min_distance_m = Some(c.min_distance_m.map_or(d, |m| m.min(d)));
                }
            } else {
                flush(&mut current, &mut out);
                current = Some(CoPresenceInterval {
                    a,
                    b,
                    channel: if agg.ultrasound_min.is_some() { Channel::Ultrasound } else { Channel::Ble },
                    start: ts,
                    end: ts,
                    min_distance_m: agg.ultrasound_min,
                });
            }
        }
        flush(&mut current, &mut out);
        out
    }

    fn wifi_intervals(&self, lo: Timestamp, hi: Timestamp) -> Vec<CoPresenceInterval> {
        let gap = self.config.stitch_gap_secs;
        let mut groups: BTreeMap<u32, BTreeMap<DeviceId, Vec<Timestamp>>> = BTreeMap::new();
        for o in &self.wifi {
            if o.ts < lo || o.ts >= hi {
                continue;
            }
            groups
                .entry(o.wifi_temp)
                .or_default()
                .entry(self.registry.device(o.reporter))
                .or_default()
                .push(o.ts);
        }

        // A sighting is a pair sample when the other device saw the same
        // identifier within one stitch gap of it.
        let near = |sorted: &[Timestamp], t: Timestamp| {
            let i = sorted.partition_point(|&x| x < t - gap);
            i < sorted.len() && sorted[i] <= t + gap
        };
        let mut pair_samples: BTreeMap<(DeviceId, DeviceId), Vec<Timestamp>> = BTreeMap::new();
        for devices in groups.values_mut() {
            for ts in devices.values_mut() {
                ts.sort_unstable();
                ts.dedup();
            }
            let list: Vec<_> = devices.iter().collect();
            for (i, (a, ta)) in list.iter().enumerate() {
                for (b, tb) in &list[i + 1..] {
                    let entry = pair_samples.entry((**a, **b)).or_default();
                    entry.extend(ta.iter().copied().filter(|&t| near(tb, t)));
                    entry.extend(tb.iter().copied().filter(|&t| near(ta, t)));
                }
            }
        }

        let mut out = Vec::new();
        for ((a, b), mut ts) in pair_samples {
            ts.sort_unstable();
            ts.dedup();
            let mut iter = ts.into_iter();
            let Some(first) = iter.next() else { continue };
            let (mut start, mut end) = (first, first);
            for t in iter {
                if t - end <= gap {
                    end = t;
                } else {
                    out.push(CoPresenceInterval::new(a, b, Channel::Wifi, start, end, None));
                    start = t;
                    end = t;
                }
            }
            out.push(CoPresenceInterval::new(a, b, Channel::Wifi, start, end, None));
        }
        out
    }

    /// Contact edges for the window ending at `as_of`.
    pub fn edges(&self, as_of: Timestamp) -> Vec<ContactEdge> {
        let window = Window::ending_at(as_of, self.config.window_secs);
        derive_edges(&self.intervals(window), window, &self.config)
    }
}
