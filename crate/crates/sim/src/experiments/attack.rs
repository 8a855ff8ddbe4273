//! Co-presence inference with planted accounts.
//!
//! An attacker who wants to know whether targets A and B spent time together
//! plants phone A′ next to A and phone B′ next to B, then reports A′
//! positive. A signal at distance ≤ 3 on B′ is consistent with a path
//! A′–A–B–B′; no signal rules that path out. Only the negative deduction is
//! sound, because any third person near the planted phones can complete a
//! path of the same length.

use std::sync::Arc;

use netdist_core::config::AuthorityConfig;
use netdist_core::ids::AuthorityId;
use netdist_core::time::{date_of, DAY, HOUR, MINUTE};
use netdist_core::{CaseKind, Config, DetectionRecord, DeviceId, Timestamp};
use netdist_server::{Clock, ManualClock, SignalServer};
use serde::Serialize;

use crate::rng::{key, Tag};
use crate::SimError;

const COMMUNITY: &str = "attack-lab";
const SECRET: &str = "attack-lab-secret";
/// Largest distance the attacker treats as evidence of a meeting.
pub const INFERENCE_DISTANCE: u8 = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    TrueNegative,
    TruePositive,
    FalsePositive,
    FalseNegative,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AttackRow {
    pub scenario: String,
    /// Ground truth: A and B were co-present.
    pub targets_met: bool,
    pub confounder: bool,
    /// Nearest positive case on B′'s chart, if any.
    pub observed_distance: Option<u8>,
    pub inferred_met: bool,
    pub verdict: Verdict,
    pub expected: Verdict,
    /// The deduction the attacker drew is logically implied by the chart.
    pub deduction_sound: bool,
}

struct Lab {
    server: SignalServer,
    clock: Arc<ManualClock>,
    seed: u64,
}

impl Lab {
    fn new(seed: u64, start: Timestamp) -> Result<Self, SimError> {
        let mut config = Config::default();
        config.cases.authorities = vec![AuthorityConfig { id: COMMUNITY.into(), secret: SECRET.into() }];
        let clock = Arc::new(ManualClock::new(start));
        let server = SignalServer::in_memory(config, clock.clone(), Some(seed));
        Ok(Self { server, clock, seed })
    }

    fn device(&self) -> Result<DeviceId, SimError> {
        Ok(self.server.register_device(Some(AuthorityId(COMMUNITY.into())))?)
    }

    /// Both phones log BLE samples every five minutes for `minutes`.
    fn meet(&self, a: DeviceId, b: DeviceId, start: Timestamp, minutes: i64) -> Result<(), SimError> {
        let tid = |d: DeviceId| format!("{:016x}", key(self.seed, Tag::Device, d.0.as_u128() as u64, start as u64, 0));
        let (ta, tb) = (tid(a), tid(b));
        let mut recs = Vec::new();
        for i in 0..=minutes / 5 {
            let ts = start + i * 5 * MINUTE;
            recs.push(DetectionRecord::ble(a, &ta, &tb, ts, -60));
            recs.push(DetectionRecord::ble(b, &tb, &ta, ts, -60));
        }
        self.clock.set(self.clock.now().max(start + minutes * MINUTE));
        for r in self.server.ingest_batch(&recs) {
            r?;
        }
        Ok(())
    }
}

/// Runs one scripted scenario and returns B′'s nearest positive distance.
fn scenario(seed: u64, start: Timestamp, targets_met: bool, confounder: bool, background: usize) -> Result<Option<u8>, SimError> {
    let lab = Lab::new(seed, start)?;
    let [a, b, a2, b2, c] = [lab.device()?, lab.device()?, lab.device()?, lab.device()?, lab.device()?];
    // Unrelated people going about their day.
    let bg: Vec<DeviceId> = (0..background).map(|_| lab.device()).collect::<Result<_, _>>()?;
    let morning = start + 9 * HOUR;
    for (i, w) in bg.windows(2).enumerate() {
        lab.meet(w[0], w[1], morning + (i as i64 % 6) * 20 * MINUTE, 20)?;
    }
    let day = start + 10 * HOUR;
    if confounder {
        // C works with B, and is next to A′ while it is being planted.
        lab.meet(c, b, day, 30)?;
    }
    if targets_met {
        lab.meet(a, b, day + HOUR, 20)?;
    }
    lab.meet(a2, a, day + 2 * HOUR, 15)?;
    if confounder {
        lab.meet(a2, c, day + 2 * HOUR, 15)?;
    }
    lab.meet(b2, b, day + 3 * HOUR, 15)?;

    lab.clock.set(start + 20 * HOUR);
    let token = lab.server.issue_tokens(SECRET, CaseKind::Positive, 1)?.remove(0);
    lab.server.redeem(a2, Some(&token.token), Some(date_of(start)))?;
    let chart = lab.server.chart(&b2)?;
    Ok(chart.positive.iter().position(|&n| n > 0).map(|i| i as u8 + 1))
}

pub fn exp_copresence_attack(seed: u64, start: Timestamp, background: usize) -> Result<Vec<AttackRow>, SimError> {
    let scripts = [
        ("targets_never_met", false, false, Verdict::TrueNegative),
        ("targets_met_20_min", true, false, Verdict::TruePositive),
        ("confounder_near_planted_phone", false, true, Verdict::FalsePositive),
    ];
    scripts
        .iter()
        .enumerate()
        .map(|(i, &(name, met, conf, expected))| {
            let observed = scenario(key(seed, Tag::Device, i as u64, 4, 0), start + i as i64 * DAY, met, conf, background)?;
            let inferred = observed.is_some_and(|d| d <= INFERENCE_DISTANCE);
            let verdict = match (inferred, met) {
                (false, false) => Verdict::TrueNegative,
                (true, true) => Verdict::TruePositive,
                (true, false) => Verdict::FalsePositive,
                (false, true) => Verdict::FalseNegative,
            };
            Ok(AttackRow {
                scenario: name.into(),
                targets_met: met,
                confounder: conf,
                observed_distance: observed,
                inferred_met: inferred,
                verdict,
                expected,
                // "No signal, so no meeting" is implied by the chart;
                // "signal, so a meeting" is not.
                deduction_sound: !inferred,
            })
        })
        .collect()
}
