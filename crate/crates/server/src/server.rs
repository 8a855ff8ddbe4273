//! The signal server: registry, ingestion, case redemption and chart queries
//! behind one commit lock.

use std::path::Path;
use std::sync::Arc;

use chrono::NaiveDate;
use netdist_core::cases::{make_report, CaseError};
use netdist_core::chart::{ChartError, ChartEngine};
use netdist_core::graph::GraphError;
use netdist_core::ids::{AuthorityId, DeviceEntry, RegistryError};
use netdist_core::ingest::{Accepted, IngestError};
use netdist_core::wifi::{SingleUseId, SingleUsePair, SingleUseRegistry};
use netdist_core::{
    CaseChart, CaseKind, CaseReport, CaseToken, Config, ContactGraph, DetectionRecord, DeviceId,
    DistanceHistogram, Ingestor, PinnedSignal, Timestamp, TokenStore,
};
use parking_lot::Mutex;
use rand::rngs::StdRng;
use rand::{RngCore, SeedableRng};

use crate::clock::Clock;
use crate::store::{FileStore, Logs, ReportEntry, StoreError};

#[derive(Debug, thiserror::Error)]
pub enum ServerError {
    #[error("unknown device {0}")]
    UnknownDevice(DeviceId),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Case(#[from] CaseError),
    #[error(transparent)]
    Registry(#[from] RegistryError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("unauthorized")]
    Unauthorized,
}

impl From<ChartError> for ServerError {
    fn from(e: ChartError) -> Self {
        match e {
            ChartError::UnknownDevice(d) => ServerError::UnknownDevice(d),
        }
    }
}

impl From<GraphError> for ServerError {
    fn from(e: GraphError) -> Self {
        match e {
            GraphError::UnknownDevice(d) => ServerError::UnknownDevice(d),
        }
    }
}

/// Where committed changes go.
enum Sink {
    /// Nothing is retained beyond live state (simulation).
    None,
    /// Logs kept in memory; used for replay comparisons.
    Memory(Logs),
    File(FileStore),
}

/// Result of a successful redemption.
#[derive(Clone, Debug)]
pub struct Redemption {
    pub report: CaseReport,
    pub signals: Vec<PinnedSignal>,
}

struct State {
    ingest: Ingestor,
    tokens: TokenStore,
    reports: Vec<ReportEntry>,
    charts: ChartEngine,
    single_use: SingleUseRegistry,
    sink: Sink,
    rng: StdRng,
    event_seq: u64,
    generation: u64,
    snapshot: Option<(u64, Timestamp, usize, Arc<ContactGraph>)>,
}

pub struct SignalServer {
    config: Config,
    clock: Arc<dyn Clock>,
    state: Mutex<State>,
}

impl State {
    fn new(config: &Config, rng: StdRng, sink: Sink) -> Self {
        Self {
            ingest: Ingestor::new(config.ingest.clone()),
            tokens: TokenStore::new(),
            reports: Vec::new(),
            charts: ChartEngine::new(config.graph.max_distance, config.chart.fade_days),
            single_use: SingleUseRegistry::new(),
            sink,
            rng,
            event_seq: 0,
            generation: 0,
            snapshot: None,
        }
    }

    fn snapshot(&mut self, config: &Config, as_of: Timestamp) -> Arc<ContactGraph> {
        let n = self.ingest.registry().len();
        if let Some((seq, t, devs, g)) = &self.snapshot {
            if *seq == self.event_seq && *t == as_of && *devs == n {
                return Arc::clone(g);
            }
        }
        self.generation += 1;
        let devices = self.ingest.registry().entries().iter().map(|e| e.device);
        let g = Arc::new(ContactGraph::new(
            as_of,
            config.ingest.window_secs,
            self.generation,
            config.graph.max_distance,
            devices,
            self.ingest.edges(as_of),
        ));
        self.snapshot = Some((self.event_seq, as_of, n, Arc::clone(&g)));
        g
    }

    fn add_device(&mut self, entry: DeviceEntry) -> Result<(), ServerError> {
        if self.ingest.registry().contains(&entry.device) {
            return Err(RegistryError::Duplicate(entry.device).into());
        }
        match &mut self.sink {
            Sink::None => {}
            Sink::Memory(l) => l.devices.push(entry.clone()),
            Sink::File(f) => f.append_device(&entry)?,
        }
        self.charts.register_viewer(entry.device);
        self.ingest.registry_mut().insert(entry)?;
        Ok(())
    }

    fn commit_event(&mut self, rec: &DetectionRecord) -> Result<Accepted, ServerError> {
        if self.ingest.is_duplicate(rec) {
            return Ok(Accepted::Duplicate);
        }
        match &mut self.sink {
            Sink::None => {}
            Sink::Memory(l) => l.events.push(rec.clone()),
            Sink::File(f) => f.append_event(rec)?,
        }
        self.event_seq += 1;
        Ok(self.ingest.apply(rec))
    }

    fn persist_tokens(&mut self) -> Result<(), ServerError> {
        match &mut self.sink {
            Sink::None => {}
            Sink::Memory(l) => l.tokens = self.tokens.tokens().cloned().collect(),
            Sink::File(f) => f.write_tokens(self.tokens.tokens())?,
        }
        Ok(())
    }

    fn commit_report(&mut self, config: &Config, report: CaseReport) -> Result<Redemption, ServerError> {
        let entry = ReportEntry { event_seq: self.event_seq, report };
        match &mut self.sink {
            Sink::None => {}
            Sink::Memory(l) => l.reports.push(entry.clone()),
            Sink::File(f) => f.append_report(&entry)?,
        }
        let signals = self.pin(config, &entry.report);
        self.reports.push(entry.clone());
        Ok(Redemption { report: entry.report, signals })
    }

    fn pin(&mut self, config: &Config, report: &CaseReport) -> Vec<PinnedSignal> {
        let g = self.snapshot(config, report.reported_at);
        self.charts.pin_case(report, &g)
    }
}

impl SignalServer {
    /// Server with no persistence.
    pub fn in_memory(config: Config, clock: Arc<dyn Clock>, seed: Option<u64>) -> Self {
        Self::with_sink(config, clock, seed, Sink::None)
    }

    /// Server that keeps its logs in memory (see [`SignalServer::logs`]).
    pub fn recording(config: Config, clock: Arc<dyn Clock>, seed: Option<u64>) -> Self {
        Self::with_sink(config, clock, seed, Sink::Memory(Logs::default()))
    }

    fn with_sink(config: Config, clock: Arc<dyn Clock>, seed: Option<u64>, sink: Sink) -> Self {
        let rng = match seed {
            Some(s) => StdRng::seed_from_u64(s),
            None => StdRng::from_os_rng(),
        };
        let state = Mutex::new(State::new(&config, rng, sink));
        Self { config, clock, state }
    }

    /// Opens (or creates) a state directory, replaying whatever it holds.
    pub fn open(config: Config, dir: &Path, clock: Arc<dyn Clock>) -> Result<Self, ServerError> {
        let logs = Logs::load(dir)?;
        let server = Self::replay(config, &logs, clock, None);
        let store = FileStore::open(dir, server.config.server.fsync)?;
        server.state.lock().sink = Sink::File(store);
        Ok(server)
    }

    /// Rebuilds state from logs. Devices are registered first; reports are
    /// pinned after exactly the events that preceded them.
    pub fn replay(config: Config, logs: &Logs, clock: Arc<dyn Clock>, seed: Option<u64>) -> Self {
        let server = Self::with_sink(config, clock, seed, Sink::None);
        {
            let mut st = server.state.lock();
            for d in &logs.devices {
                st.charts.register_viewer(d.device);
                // Duplicates cannot be committed, so an error here means the
                // line is a repeat of an earlier one.
                let _ = st.ingest.registry_mut().insert(d.clone());
            }
            for t in &logs.tokens {
                st.tokens.restore(t.clone());
            }
            let mut events = logs.events.iter();
            for r in &logs.reports {
                while st.event_seq < r.event_seq {
                    let Some(e) = events.next() else { break };
                    st.event_seq += 1;
                    st.ingest.apply(e);
                }
                st.pin(&server.config, &r.report);
                st.reports.push(r.clone());
            }
            for e in events {
                st.event_seq += 1;
                st.ingest.apply(e);
            }
        }
        server
    }

    pub fn config(&self) -> &Config {
        &self.config
    }

    pub fn now(&self) -> Timestamp {
        self.clock.now()
    }

    /// Copy of the in-memory logs of a recording server.
    pub fn logs(&self) -> Option<Logs> {
        match &self.state.lock().sink {
            Sink::Memory(l) => Some(l.clone()),
            _ => None,
        }
    }

    pub fn register_device(&self, community: Option<AuthorityId>) -> Result<DeviceId, ServerError> {
        let mut st = self.state.lock();
        let mut device = DeviceId::random(&mut st.rng);
        while st.ingest.registry().contains(&device) {
            device = DeviceId::random(&mut st.rng);
        }
        st.add_device(DeviceEntry { device, community })?;
        Ok(device)
    }

    pub fn device_count(&self) -> usize {
        self.state.lock().ingest.registry().len()
    }

    pub fn devices(&self) -> Vec<DeviceId> {
        self.state.lock().ingest.registry().entries().iter().map(|e| e.device).collect()
    }

    pub fn ingest(&self, rec: &DetectionRecord) -> Result<Accepted, ServerError> {
        let now = self.clock.now();
        let mut st = self.state.lock();
        st.ingest.check(rec, now)?;
        st.commit_event(rec)
    }

    pub fn ingest_batch(&self, recs: &[DetectionRecord]) -> Vec<Result<Accepted, ServerError>> {
        let now = self.clock.now();
        let mut st = self.state.lock();
        recs.iter()
            .map(|r| {
                st.ingest.check(r, now)?;
                st.commit_event(r)
            })
            .collect()
    }

    pub fn event_count(&self) -> u64 {
        self.state.lock().event_seq
    }

    pub fn issue_tokens(&self, secret: &str, kind: CaseKind, count: usize) -> Result<Vec<CaseToken>, ServerError> {
        let authority = TokenStore::authenticate(&self.config.cases, secret)?;
        let now = self.clock.now();
        let mut st = self.state.lock();
        let st = &mut *st;
        let issued = st.tokens.issue_tokens(&self.config.cases, &authority, kind, count, now, &mut st.rng)?;
        st.persist_tokens()?;
        Ok(issued)
    }

    /// Redeems `token` for `device`. Without a token the report is accepted
    /// only when unauthenticated self-reporting is enabled, and is POSITIVE.
    pub fn redeem(
        &self,
        device: DeviceId,
        token: Option<&str>,
        symptom_start: Option<NaiveDate>,
    ) -> Result<Redemption, ServerError> {
        let now = self.clock.now();
        let mut st = self.state.lock();
        let st = &mut *st;
        if !st.ingest.registry().contains(&device) {
            return Err(ServerError::UnknownDevice(device));
        }
        let community = st.ingest.registry().community(&device).cloned();
        let report = match token {
            Some(token) => {
                let kind = st.tokens.check(token, community.as_ref(), now)?.kind;
                let report = make_report(device, kind, symptom_start, now, &mut st.rng)?;
                st.tokens.consume(token, community.as_ref(), now)?;
                if let Err(e) = st.persist_tokens() {
                    // Undo so memory never runs ahead of disk.
                    let mut t = st.tokens.get(token).cloned().expect("just consumed");
                    t.consumed = false;
                    st.tokens.restore(t);
                    return Err(e);
                }
                report
            }
            None if self.config.cases.allow_unauthenticated => {
                make_report(device, CaseKind::Positive, symptom_start, now, &mut st.rng)?
            }
            None => return Err(CaseError::UnauthenticatedDisabled.into()),
        };
        st.commit_report(&self.config, report)
    }

    pub fn reports(&self) -> Vec<CaseReport> {
        self.state.lock().reports.iter().map(|r| r.report.clone()).collect()
    }

    pub fn tokens(&self) -> Vec<CaseToken> {
        self.state.lock().tokens.tokens().cloned().collect()
    }

    pub fn chart(&self, device: &DeviceId) -> Result<CaseChart, ServerError> {
        self.chart_at(device, self.clock.now())
    }

    pub fn chart_at(&self, device: &DeviceId, t: Timestamp) -> Result<CaseChart, ServerError> {
        Ok(self.state.lock().charts.render_chart(device, t)?)
    }

    pub fn export_frames(
        &self,
        device: &DeviceId,
        t0: Timestamp,
        t1: Timestamp,
        step: i64,
    ) -> Result<Vec<CaseChart>, ServerError> {
        Ok(self.state.lock().charts.export_frames(device, t0, t1, step)?)
    }

    pub fn signals_for(&self, device: &DeviceId) -> Vec<PinnedSignal> {
        self.state.lock().charts.signals_for(device).to_vec()
    }

    /// Contact graph for the window ending at `as_of`.
    pub fn snapshot(&self, as_of: Timestamp) -> Arc<ContactGraph> {
        self.state.lock().snapshot(&self.config, as_of)
    }

    pub fn network_chart(&self, device: &DeviceId) -> Result<DistanceHistogram, ServerError> {
        let g = self.snapshot(self.clock.now());
        Ok(g.user_count_histogram(device)?)
    }

    /// Snapshot generation counter.
    pub fn generation(&self) -> u64 {
        self.state.lock().generation
    }

    /// Records that `device` will use `id` in the current matching round.
    pub fn announce_single_use(&self, device: DeviceId, id: SingleUseId) -> Result<(), ServerError> {
        let now = self.clock.now();
        let mut st = self.state.lock();
        if !st.ingest.registry().contains(&device) {
            return Err(ServerError::UnknownDevice(device));
        }
        st.single_use.announce(device, id, now);
        Ok(())
    }

    /// Turns matcher-reported pairs into Wi-Fi detection records: each linked
    /// pair becomes one record per device sharing a fresh identifier.
    pub fn link_wifi_pairs(&self, secret: &str, pairs: &[SingleUsePair]) -> Result<usize, ServerError> {
        if secret != self.config.wifi_matcher.shared_secret {
            return Err(ServerError::Unauthorized);
        }
        let now = self.clock.now();
        let mut st = self.state.lock();
        let st = &mut *st;
        let linked = st.single_use.link_pairs(pairs);
        let mut committed = 0;
        for p in &linked {
            let mut raw = [0u8; 8];
            st.rng.fill_bytes(&mut raw);
            let shared: String = raw.iter().map(|b| format!("{b:02x}")).collect();
            for d in [p.a, p.b] {
                let rec = DetectionRecord::wifi(d, &shared, p.timestamp);
                if st.ingest.check(&rec, now).is_ok() {
                    st.commit_event(&rec)?;
                    committed += 1;
                }
            }
        }
        Ok(committed)
    }

    pub fn wifi_pairs_dropped(&self) -> u64 {
        self.state.lock().single_use.dropped()
    }

    /// Drops retained observations and signals that can no longer matter at
    /// `now`. Only for servers without a durable log.
    pub fn prune(&self, now: Timestamp) {
        let mut st = self.state.lock();
        let horizon = now - self.config.ingest.window_secs - self.config.ingest.stitch_gap_secs;
        st.ingest.prune(horizon);
        st.single_use.prune(horizon);
        st.charts.expire(now);
    }
}
