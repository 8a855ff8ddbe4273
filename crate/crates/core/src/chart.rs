//! Per-viewer distance charts.
//!
//! A case is fanned out once, at report time: every viewer reachable within
//! the cap gets a [`PinnedSignal`] at the distance observed in that snapshot.
//! Signals never move afterwards; they disappear when `visible_until` passes.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};
use uuid::Uuid;

use crate::cases::{CaseKind, CaseReport};
use crate::graph::{ContactGraph, UNREACHED};
use crate::ids::DeviceId;
use crate::time::{date_start, Timestamp, DAY};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PinnedSignal {
    pub case_id: Uuid,
    pub viewer: DeviceId,
    pub distance: u8,
    pub kind: CaseKind,
    pub pinned_at: Timestamp,
    pub visible_until: Timestamp,
}

impl PinnedSignal {
    pub fn visible_at(&self, t: Timestamp) -> bool {
        self.pinned_at <= t && t < self.visible_until
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseChart {
    /// `positive[d - 1]` counts active positive cases at distance `d`.
    pub positive: Vec<u32>,
    pub contact: Vec<u32>,
    pub as_of: Timestamp,
}

impl CaseChart {
    fn empty(max_distance: u8, as_of: Timestamp) -> Self {
        Self {
            positive: vec![0; max_distance as usize],
            contact: vec![0; max_distance as usize],
            as_of,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.positive.iter().chain(&self.contact).all(|&c| c == 0)
    }

    /// Nearest occupied distance, either kind.
    pub fn nearest(&self) -> Option<u8> {
        (0..self.positive.len())
            .find(|&i| self.positive[i] > 0 || self.contact[i] > 0)
            .map(|i| i as u8 + 1)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ChartError {
    #[error("unknown device {0}")]
    UnknownDevice(DeviceId),
}

/// When a report's signals stop being shown.
pub fn visible_until(report: &CaseReport, fade_days: i64) -> Timestamp {
    let anchor = match (report.kind, report.symptom_start) {
        (CaseKind::Positive, Some(d)) => date_start(d),
        _ => report.reported_at,
    };
    anchor + fade_days * DAY
}

#[derive(Clone, Debug)]
pub struct ChartEngine {
    max_distance: u8,
    fade_days: i64,
    viewers: HashSet<DeviceId>,
    signals: HashMap<DeviceId, Vec<PinnedSignal>>,
    active_cases: HashMap<(DeviceId, CaseKind), Timestamp>,
}

impl ChartEngine {
    pub fn new(max_distance: u8, fade_days: i64) -> Self {
        Self {
            max_distance,
            fade_days,
            viewers: HashSet::new(),
            signals: HashMap::new(),
            active_cases: HashMap::new(),
        }
    }

    pub fn register_viewer(&mut self, d: DeviceId) {
        self.viewers.insert(d);
    }

    pub fn signal_count(&self) -> usize {
        self.signals.values().map(Vec::len).sum()
    }

    /// Fans `report` out over `graph`. A device that already has an active
    /// case of the same kind produces no new signals.
    pub fn pin_case(&mut self, report: &CaseReport, graph: &ContactGraph) -> Vec<PinnedSignal> {
        let until = visible_until(report, self.fade_days);
        let key = (report.device, report.kind);
        if self.active_cases.get(&key).is_some_and(|&u| u > report.reported_at) {
            return Vec::new();
        }
        self.active_cases.insert(key, until);
        if until <= report.reported_at {
            return Vec::new();
        }
        let Ok(dist) = graph.distances_from(&report.device) else {
            return Vec::new();
        };
        let cap = self.max_distance.min(graph.max_distance());
        let mut pinned = Vec::new();
        for (i, &d) in dist.iter().enumerate() {
            if d == UNREACHED || d == 0 || d > cap {
                continue;
            }
            let viewer = graph.devices()[i];
            let s = PinnedSignal { case_id: report.case_id, viewer, distance: d, kind: report.kind, pinned_at: report.reported_at, visible_until: until };
            self.signals.entry(viewer).or_default().push(s.clone());
            pinned.push(s);
        }
        pinned
    }

    pub fn render_chart(&self, viewer: &DeviceId, now: Timestamp) -> Result<CaseChart, ChartError> {
        if !self.viewers.contains(viewer) {
            return Err(ChartError::UnknownDevice(*viewer));
        }
        let mut chart = CaseChart::empty(self.max_distance, now);
        for s in self.signals.get(viewer).into_iter().flatten() {
            if !s.visible_at(now) {
                continue;
            }
            let cell = s.distance as usize - 1;
            match s.kind {
                CaseKind::Positive => chart.positive[cell] += 1,
                CaseKind::Contact => chart.contact[cell] += 1,
            }
        }
        Ok(chart)
    }

    /// Charts at `t0, t0 + step, ...` up to and including `t1`.
    pub fn export_frames(
        &self,
        viewer: &DeviceId,
        t0: Timestamp,
        t1: Timestamp,
        step: i64,
    ) -> Result<Vec<CaseChart>, ChartError> {
        assert!(step > 0, "step must be positive");
        let mut frames = Vec::new();
        let mut t = t0;
        while t <= t1 {
            frames.push(self.render_chart(viewer, t)?);
            t += step;
        }
        Ok(frames)
    }

    /// Signals currently held for `viewer`, expired ones included.
    pub fn signals_for(&self, viewer: &DeviceId) -> &[PinnedSignal] {
        self.signals.get(viewer).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Drops signals and duplicate-suppression entries that expired by `now`.
    pub fn expire(&mut self, now: Timestamp) {
        for v in self.signals.values_mut() {
            v.retain(|s| s.visible_until > now);
        }
        self.signals.retain(|_, v| !v.is_empty());
        self.active_cases.retain(|_, &mut u| u > now);
    }
}

/// Frames as CSV rows `t,d,positive,contact` with ISO-8601 times.
pub fn frames_csv(frames: &[CaseChart]) -> String {
    let mut out = String::from("t,d,positive,contact\n");
    for f in frames {
        let t = crate::time::to_iso8601(f.as_of);
        for d in 0..f.positive.len() {
            out.push_str(&format!("{t},{},{},{}\n", d + 1, f.positive[d], f.contact[d]));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::D_MAX;
    use crate::ingest::ContactEdge;
    use crate::time::{date_of, HOUR};
    use rand::SeedableRng;

    const NOW: Timestamp = 1_600_041_600; // 2020-09-14T00:00:00Z

    fn ids(n: usize) -> Vec<DeviceId> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        (0..n).map(|_| DeviceId::random(&mut rng)).collect()
    }

    fn path_graph(v: &[DeviceId], as_of: Timestamp) -> ContactGraph {
        let edges = v
            .windows(2)
            .map(|w| {
                let (a, b) = if w[0] < w[1] { (w[0], w[1]) } else { (w[1], w[0]) };
                ContactEdge { a, b, last_qualified_at: as_of }
            })
            .collect();
        ContactGraph::new(as_of, 14 * DAY, 1, D_MAX, v.iter().copied(), edges)
    }

    fn engine(v: &[DeviceId]) -> ChartEngine {
        let mut e = ChartEngine::new(D_MAX, 10);
        for d in v {
            e.register_viewer(*d);
        }
        e
    }

    fn report(device: DeviceId, kind: CaseKind, symptom_days_ago: i64, at: Timestamp) -> CaseReport {
        CaseReport {
            case_id: Uuid::from_u128(at as u128 ^ device.0.as_u128()),
            device,
            kind,
            symptom_start: (kind == CaseKind::Positive).then(|| date_of(at - symptom_days_ago * DAY)),
            reported_at: at,
        }
    }

    #[test]
    fn pinned_at_report_distance() {
        let v = ids(5);
        let g = path_graph(&v, NOW);
        let mut e = engine(&v);
        let sigs = e.pin_case(&report(v[0], CaseKind::Positive, 0, NOW), &g);
        assert_eq!(sigs.len(), 4);
        let c = e.render_chart(&v[3], NOW).unwrap();
        assert_eq!(c.positive[2], 1);
        assert_eq!(c.nearest(), Some(3));
        // no signal for the reporter
        assert!(e.render_chart(&v[0], NOW).unwrap().is_empty());
    }

    #[test]
    fn disconnected_viewer_gets_nothing() {
        let v = ids(4);
        let g = path_graph(&v[..3], NOW);
        let g = ContactGraph::new(NOW, 14 * DAY, 1, D_MAX, v.iter().copied(), g.edges().to_vec());
        let mut e = engine(&v);
        e.pin_case(&report(v[0], CaseKind::Positive, 0, NOW), &g);
        assert!(e.render_chart(&v[3], NOW).unwrap().is_empty());
    }

    #[test]
    fn fade_anchored_at_symptom_start() {
        let v = ids(2);
        let g = path_graph(&v, NOW);
        let mut e = engine(&v);
        let r = report(v[0], CaseKind::Positive, 4, NOW);
        let s = &e.pin_case(&r, &g)[0];
        assert_eq!(s.visible_until, NOW + 6 * DAY);
        assert!(!e.render_chart(&v[1], NOW + 6 * DAY - 1).unwrap().is_empty());
        assert!(e.render_chart(&v[1], NOW + 6 * DAY).unwrap().is_empty());
        assert!(e.render_chart(&v[1], NOW + 7 * DAY).unwrap().is_empty());
    }

    #[test]
    fn contact_fade_anchored_at_report() {
        let v = ids(2);
        let g = path_graph(&v, NOW);
        let mut e = engine(&v);
        let s = &e.pin_case(&report(v[0], CaseKind::Contact, 0, NOW + HOUR), &g)[0];
        assert_eq!(s.visible_until, NOW + HOUR + 10 * DAY);
    }

    #[test]
    fn positive_and_contact_cells() {
        let v = ids(4);
        // v1 and v3 both at distance 2 from v2? build star around v0 instead
        let mut edges = vec![];
        for (a, b) in [(0, 1), (1, 2), (1, 3)] {
            let (x, y) = if v[a] < v[b] { (v[a], v[b]) } else { (v[b], v[a]) };
            edges.push(ContactEdge { a: x, b: y, last_qualified_at: NOW });
        }
        let g = ContactGraph::new(NOW, 14 * DAY, 1, D_MAX, v.iter().copied(), edges);
        let mut e = engine(&v);
        e.pin_case(&report(v[2], CaseKind::Positive, 0, NOW), &g);
        e.pin_case(&report(v[3], CaseKind::Contact, 0, NOW), &g);
        let c = e.render_chart(&v[0], NOW).unwrap();
        assert_eq!(c.positive[1], 1);
        assert_eq!(c.contact[1], 1);
        assert_eq!(c.positive.iter().sum::<u32>(), 1);
    }

    #[test]
    fn unknown_viewer() {
        let e = ChartEngine::new(D_MAX, 10);
        let v = ids(1);
        assert_eq!(e.render_chart(&v[0], NOW), Err(ChartError::UnknownDevice(v[0])));
    }

    #[test]
    fn signals_ignore_later_graphs() {
        let v = ids(4);
        let mut e = engine(&v);
        e.pin_case(&report(v[0], CaseKind::Positive, 0, NOW), &path_graph(&v, NOW));
        // the network changes afterwards; nothing is re-derived
        let later = ContactGraph::new(NOW + DAY, 14 * DAY, 2, D_MAX, v.iter().copied(), vec![]);
        let _ = later;
        assert_eq!(e.render_chart(&v[3], NOW + DAY).unwrap().positive[2], 1);
    }

    #[test]
    fn duplicate_reports_collapse() {
        let v = ids(2);
        let g = path_graph(&v, NOW);
        let mut e = engine(&v);
        assert_eq!(e.pin_case(&report(v[0], CaseKind::Positive, 0, NOW), &g).len(), 1);
        assert!(e.pin_case(&report(v[0], CaseKind::Positive, 0, NOW + DAY), &g).is_empty());
        assert_eq!(e.pin_case(&report(v[0], CaseKind::Positive, 0, NOW + 11 * DAY), &g).len(), 1);
    }

    #[test]
    fn frames() {
        let v = ids(3);
        let mut e = engine(&v);
        e.pin_case(&report(v[0], CaseKind::Positive, 0, NOW + 3 * DAY), &path_graph(&v, NOW));
        let frames = e.export_frames(&v[2], NOW, NOW + 14 * DAY, DAY).unwrap();
        assert_eq!(frames.len(), 15);
        for (i, f) in frames.iter().enumerate() {
            let visible = (3..13).contains(&i);
            assert_eq!(f.positive[1], visible as u32, "frame {i}");
            assert_eq!(f.positive.iter().sum::<u32>(), visible as u32);
        }
        assert_eq!(e.export_frames(&v[2], NOW, NOW + DAY, 2 * DAY).unwrap().len(), 1);
        let csv = frames_csv(&frames[..1]);
        assert_eq!(csv.lines().count(), 13);
        assert!(csv.starts_with("t,d,positive,contact\n2020-09-14T00:00:00Z,1,0,0"));
    }

    #[test]
    fn expire_prunes() {
        let v = ids(2);
        let mut e = engine(&v);
        e.pin_case(&report(v[0], CaseKind::Positive, 0, NOW), &path_graph(&v, NOW));
        e.expire(NOW + 10 * DAY);
        assert_eq!(e.signal_count(), 0);
    }
}
