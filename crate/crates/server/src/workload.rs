//! Seeded randomized workloads that drive a signal server and a matcher the
//! way a population of devices would: rotating BLE identifiers, occasional
//! ultrasound ranging, Wi-Fi sightings through the matcher, token issuance
//! and redemption.
//!
//! Operations name devices by index so the same script can be replayed
//! against servers that assign different ids.

use std::collections::VecDeque;
use std::path::Path;
use std::sync::Arc;

use chrono::NaiveDate;
use netdist_core::config::WifiMode;
use netdist_core::ids::AuthorityId;
use netdist_core::time::{date_of, DAY, HOUR, MINUTE};
use netdist_core::wifi::{HashedBssid, SingleUseId, Submission};
use netdist_core::{CaseKind, Config, DetectionRecord, DeviceId, Timestamp};
use rand::rngs::StdRng;
use rand::{Rng, RngCore, SeedableRng};

use crate::clock::{Clock, ManualClock};
use crate::matcher::MatcherService;
use crate::server::{ServerError, SignalServer};

pub const WORKLOAD_SALT: &[u8] = b"workload-deployment-salt";

#[derive(Clone, Debug, PartialEq)]
pub enum Op {
    Register { community: Option<AuthorityId> },
    SetTime(Timestamp),
    Detect { device: usize, record: DetectionRecord },
    WifiSighting { device: usize, ap: usize },
    CloseRound,
    Issue { kind: CaseKind, count: usize },
    Redeem { device: usize, symptom_days_ago: i64 },
}

#[derive(Clone, Debug)]
pub struct WorkloadSpec {
    pub seed: u64,
    pub devices: usize,
    pub access_points: usize,
    /// Detection-producing operations to generate.
    pub events: usize,
    pub start: Timestamp,
    pub mode: WifiMode,
}

impl Default for WorkloadSpec {
    fn default() -> Self {
        Self {
            seed: 1,
            devices: 40,
            access_points: 8,
            events: 10_000,
            start: 1_600_000_000 - 1_600_000_000 % DAY,
            mode: WifiMode::TempId,
        }
    }
}

pub const AUTHORITY: &str = "campus";
pub const AUTHORITY_SECRET: &str = "campus-secret";

/// Config used with generated workloads.
pub fn workload_config(mode: WifiMode) -> Config {
    let mut c = Config::default();
    c.cases.authorities.push(netdist_core::config::AuthorityConfig {
        id: AUTHORITY.into(),
        secret: AUTHORITY_SECRET.into(),
    });
    c.wifi_matcher.mode = mode;
    c.server.fsync = false;
    c
}

pub fn bssid(ap: usize) -> String {
    let b = (ap as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15).to_be_bytes();
    format!("{:02x}:{:02x}:{:02x}:{:02x}:{:02x}:{:02x}", 0x02, b[0], b[1], b[2], b[3], b[4])
}

struct Session {
    a: usize,
    b: usize,
    steps_left: u32,
    rssi: i32,
    ultrasound_m: Option<f64>,
}

/// Generates the operation script for `spec`.
pub fn generate(spec: &WorkloadSpec) -> Vec<Op> {
    let mut rng = StdRng::seed_from_u64(spec.seed);
    let n = spec.devices;
    let mut ops = Vec::new();
    for i in 0..n {
        // A few devices are not enrolled in any community.
        let community = (i % 10 != 9).then(|| AuthorityId(AUTHORITY.into()));
        ops.push(Op::Register { community });
    }
    let step = 5 * MINUTE;
    let mut t = spec.start;
    let mut temp_ids: Vec<(i64, String)> = vec![(i64::MIN, String::new()); n];
    let mut temp_for = |rng: &mut StdRng, d: usize, t: Timestamp| -> String {
        let day = t.div_euclid(DAY);
        if temp_ids[d].0 != day {
            let mut b = [0u8; 8];
            rng.fill_bytes(&mut b);
            temp_ids[d] = (day, b.iter().map(|x| format!("{x:02x}")).collect());
        }
        temp_ids[d].1.clone()
    };
    let mut location: Vec<Option<usize>> = vec![None; n];
    let mut sessions: Vec<Session> = Vec::new();
    let mut events = 0;
    let mut step_no = 0u64;
    while events < spec.events {
        ops.push(Op::SetTime(t));
        step_no += 1;
        if rng.random_bool(0.6) {
            let a = rng.random_range(0..n);
            let b = rng.random_range(0..n);
            if a != b {
                sessions.push(Session {
                    a,
                    b,
                    steps_left: rng.random_range(1..10),
                    rssi: rng.random_range(-90..-40),
                    ultrasound_m: rng.random_bool(0.3).then(|| rng.random_range(0.5..20.0)),
                });
            }
        }
        for s in &mut sessions {
            let (ta, tb) = (temp_for(&mut rng, s.a, t), temp_for(&mut rng, s.b, t));
            for (dev, own, peer) in [(s.a, &ta, &tb), (s.b, &tb, &ta)] {
                let ts = t + rng.random_range(0..30);
                let record = match s.ultrasound_m {
                    Some(m) => DetectionRecord::ultrasound(DeviceId(uuid::Uuid::nil()), own, peer, ts, m),
                    None => DetectionRecord::ble(DeviceId(uuid::Uuid::nil()), own, peer, ts, s.rssi),
                };
                ops.push(Op::Detect { device: dev, record });
                events += 1;
            }
            s.steps_left -= 1;
        }
        sessions.retain(|s| s.steps_left > 0);
        for (d, loc) in location.iter_mut().enumerate() {
            if rng.random_bool(0.02) {
                *loc = rng.random_bool(0.5).then(|| rng.random_range(0..spec.access_points));
            }
            if let Some(ap) = *loc {
                if rng.random_bool(0.5) {
                    ops.push(Op::WifiSighting { device: d, ap });
                    events += 1;
                }
            }
        }
        if spec.mode == WifiMode::PairReport {
            ops.push(Op::CloseRound);
        }
        if step_no.is_multiple_of(60) {
            ops.push(Op::Issue { kind: CaseKind::Positive, count: 3 });
            ops.push(Op::Issue { kind: CaseKind::Contact, count: 2 });
        }
        if step_no % 60 == 30 {
            for _ in 0..rng.random_range(1..5) {
                ops.push(Op::Redeem { device: rng.random_range(0..n), symptom_days_ago: rng.random_range(0..6) });
            }
        }
        t += step;
        // Quiet nights: jump ahead after each simulated evening.
        if (t % DAY) >= 20 * HOUR {
            t += DAY - (t % DAY) + 7 * HOUR;
            sessions.clear();
        }
    }
    ops
}

/// Executes operations against a server/matcher pair.
pub struct Harness {
    pub config: Config,
    pub clock: Arc<ManualClock>,
    pub server: Arc<SignalServer>,
    pub matcher: Arc<MatcherService>,
    pub devices: Vec<DeviceId>,
    pub tokens: VecDeque<String>,
    pub issued: Vec<String>,
    pub hashed_bssids: Vec<String>,
    pub raw_bssids: Vec<String>,
    rng: StdRng,
    /// Errors returned by the server, by reason; expected for some ops.
    pub rejections: Vec<String>,
}

impl Harness {
    pub fn new(config: Config, server: SignalServer, clock: Arc<ManualClock>, seed: u64) -> Self {
        let matcher = MatcherService::new(config.wifi_matcher.clone(), clock.clone(), Some(seed ^ 0x5eed));
        Self {
            config,
            clock,
            server: Arc::new(server),
            matcher: Arc::new(matcher),
            devices: Vec::new(),
            tokens: VecDeque::new(),
            issued: Vec::new(),
            hashed_bssids: Vec::new(),
            raw_bssids: Vec::new(),
            rng: StdRng::seed_from_u64(seed ^ 0xa11ce),
            rejections: Vec::new(),
        }
    }

    /// Swaps in a restarted server (same devices, same token queue).
    pub fn restart(&mut self, dir: &Path) -> Result<(), ServerError> {
        let fresh = SignalServer::open(self.config.clone(), dir, self.clock.clone())?;
        self.server = Arc::new(fresh);
        Ok(())
    }

    fn hashed(&mut self, ap: usize) -> HashedBssid {
        let raw = bssid(ap);
        let h = HashedBssid::from_bssid(&raw, WORKLOAD_SALT);
        if !self.raw_bssids.contains(&raw) {
            self.raw_bssids.push(raw);
            self.hashed_bssids.push(h.0.clone());
        }
        h
    }

    fn note<T>(&mut self, r: Result<T, ServerError>) -> Option<T> {
        match r {
            Ok(v) => Some(v),
            Err(e) => {
                self.rejections.push(e.to_string());
                None
            }
        }
    }

    pub fn run(&mut self, ops: &[Op]) {
        for op in ops {
            self.apply(op);
        }
    }

    pub fn apply(&mut self, op: &Op) {
        match op {
            Op::Register { community } => {
                let d = self.server.register_device(community.clone()).expect("registration");
                self.devices.push(d);
            }
            Op::SetTime(t) => self.clock.set(*t),
            Op::Detect { device, record } => {
                let rec = DetectionRecord { reporter: self.devices[*device], ..record.clone() };
                let r = self.server.ingest(&rec);
                self.note(r);
            }
            Op::WifiSighting { device, ap } => {
                let h = self.hashed(*ap);
                let now = self.clock.now();
                match self.config.wifi_matcher.mode {
                    WifiMode::TempId => {
                        let tid = self.matcher.resolve(&h);
                        let rec = DetectionRecord::wifi(self.devices[*device], &tid.id, now);
                        let r = self.server.ingest(&rec);
                        self.note(r);
                    }
                    WifiMode::PairReport => {
                        let id = SingleUseId::random(&mut self.rng);
                        let r = self.server.announce_single_use(self.devices[*device], id.clone());
                        self.note(r);
                        self.matcher
                            .submit(Submission { single_use_id: id, hashed_bssid: h, timestamp: now })
                            .expect("fresh single-use id");
                    }
                }
            }
            Op::CloseRound => {
                let pairs = self.matcher.close_round(&self.config.wifi_matcher.shared_secret).expect("secret");
                let r = self.server.link_wifi_pairs(&self.config.wifi_matcher.shared_secret, &pairs);
                self.note(r);
            }
            Op::Issue { kind, count } => {
                let r = self.server.issue_tokens(AUTHORITY_SECRET, *kind, *count);
                for t in self.note(r).unwrap_or_default() {
                    self.issued.push(t.token.clone());
                    self.tokens.push_back(t.token);
                }
            }
            Op::Redeem { device, symptom_days_ago } => {
                let Some(token) = self.tokens.pop_front() else { return };
                let date: NaiveDate = date_of(self.clock.now() - symptom_days_ago * DAY);
                let r = self.server.redeem(self.devices[*device], Some(&token), Some(date));
                self.note(r);
            }
        }
    }

    /// Charts of every device at each of `times`.
    pub fn charts(&self, times: &[Timestamp]) -> Vec<Vec<netdist_core::CaseChart>> {
        self.devices
            .iter()
            .map(|d| times.iter().map(|&t| self.server.chart_at(d, t).expect("registered")).collect())
            .collect()
    }
}

/// Index of the first `CloseRound` (or any op, without rounds) at or after
/// `at`, so a restart never splits a matching round.
pub fn restart_point(ops: &[Op], at: usize) -> usize {
    let has_rounds = ops.contains(&Op::CloseRound);
    (at..ops.len())
        .find(|&i| !has_rounds || ops[i] == Op::CloseRound)
        .map_or(ops.len(), |i| if has_rounds { i + 1 } else { i })
}

/// Runs every storage audit over a harness whose server persists to `dir`.
/// Returns all violations found.
pub fn privacy_audit(h: &Harness, dir: &Path) -> Vec<String> {
    use crate::audit::*;
    let files = StateFiles::read(dir).expect("state dir readable");
    h.matcher.purge();
    let dump = h.matcher.dump();
    let mut out = main_server_bssid_violations(&files, &h.raw_bssids, &h.hashed_bssids);
    out.extend(matcher_device_violations(&dump, &h.devices));
    out.extend(matcher_expired_violations(&dump, h.clock.now()));
    out.extend(token_link_violations(&files, &h.devices));
    out.extend(pii_field_violations(&files));
    out.extend(unexpected_files(&files).into_iter().map(|f| format!("unexpected file {f}")));
    out
}
