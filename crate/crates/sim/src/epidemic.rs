//! SEIR dynamics with the app and the behaviour model layered on top.
//!
//! A run without the app layer is the baseline. With it, adopters carry
//! devices registered with an in-process [`SignalServer`]: their long
//! contacts become detection records, cases redeem tokens, and the signals
//! pinned by each report drive who takes precautions. All epidemic draws are
//! counter-based, so a run whose precautions never fire follows the baseline
//! trajectory exactly.

use std::collections::{BTreeSet, HashMap};
use std::sync::Arc;

use netdist_core::config::AuthorityConfig;
use netdist_core::ids::AuthorityId;
use netdist_core::time::{date_of, DAY, HOUR, MINUTE};
use netdist_core::{CaseKind, DetectionRecord, DeviceId, Timestamp};
use netdist_server::{Clock, ManualClock, ServerError, SignalServer};
use serde::Serialize;

use crate::config::ScenarioConfig;
use crate::contacts::{daily_contacts, DailyContact};
use crate::rng::{key, uniform, Tag};
use crate::world::{PersonId, SimWorld};

pub const SIM_AUTHORITY: &str = "sim-health";
const SIM_SECRET: &str = "sim-health-secret";
/// Synthetic encounters start at noon and carry four samples five minutes
/// apart, alternating between the two phones.
const ENCOUNTER_START: i64 = 12 * HOUR;
const ENCOUNTER_RSSI: i32 = -60;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Health {
    S,
    E,
    I,
    R,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct DayCounts {
    pub day: u32,
    pub s: u32,
    pub e: u32,
    pub i: u32,
    pub r: u32,
    pub new_infections: u32,
    pub blocked: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct Transmission {
    pub from: PersonId,
    pub to: PersonId,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct StepOutcome {
    /// One entry per newly infected person, attributed to the first
    /// unblocked contact that reached them.
    pub infections: Vec<Transmission>,
    /// Would-be transmissions stopped by a precaution.
    pub blocked: Vec<Transmission>,
}

/// One day of transmission over `contacts`. A contact between an infectious
/// and a susceptible person transmits when its draw falls below `beta`; each
/// party under precaution then independently blocks it with probability
/// `p2`.
pub fn transmission_step(
    health: &[Health],
    contacts: &[DailyContact],
    precaution: &[bool],
    beta: f64,
    p2: f64,
    seed: u64,
    day: u32,
) -> StepOutcome {
    let mut out = StepOutcome::default();
    let mut infected = BTreeSet::new();
    for c in contacts {
        let (from, to) = match (health[c.a as usize], health[c.b as usize]) {
            (Health::I, Health::S) => (c.a, c.b),
            (Health::S, Health::I) => (c.b, c.a),
            _ => continue,
        };
        let (pair, slot) = c.key();
        if uniform(seed, Tag::Transmit, pair, slot, day as u64) >= beta {
            continue;
        }
        let blocked = [(c.a, 0u64), (c.b, 1)].iter().any(|&(x, side)| {
            precaution[x as usize] && uniform(seed, Tag::Block, pair, slot, (day as u64) << 1 | side) < p2
        });
        let t = Transmission { from, to };
        if blocked {
            out.blocked.push(t);
        } else if infected.insert(to) {
            out.infections.push(t);
        }
    }
    out
}

struct AppLayer {
    server: SignalServer,
    clock: Arc<ManualClock>,
    device_of: Vec<Option<DeviceId>>,
    person_of: HashMap<DeviceId, PersonId>,
}

impl AppLayer {
    fn new(cfg: &ScenarioConfig, adopters: &[bool], seed: u64) -> Result<Self, ServerError> {
        let mut config = cfg.server.clone();
        config.cases.authorities =
            vec![AuthorityConfig { id: SIM_AUTHORITY.into(), secret: SIM_SECRET.into() }];
        let clock = Arc::new(ManualClock::new(cfg.start));
        let server = SignalServer::in_memory(config, clock.clone(), Some(key(seed, Tag::Device, 0, 0, 0)));
        let mut device_of = vec![None; adopters.len()];
        let mut person_of = HashMap::new();
        for (p, _) in adopters.iter().enumerate().filter(|(_, &a)| a) {
            let d = server.register_device(Some(AuthorityId(SIM_AUTHORITY.into())))?;
            device_of[p] = Some(d);
            person_of.insert(d, p as PersonId);
        }
        Ok(Self { server, clock, device_of, person_of })
    }
}

/// Daily rotating broadcast identifier of a person's phone.
fn temp_id(seed: u64, person: PersonId, day: u32) -> String {
    format!("{:016x}", key(seed, Tag::Device, person as u64 + 1, day as u64, 1))
}

/// Inputs and result of one day's transmission step, kept for audits.
#[derive(Clone, Debug, PartialEq)]
pub struct DayAudit {
    pub day: u32,
    pub health: Vec<Health>,
    pub precaution: Vec<bool>,
    pub outcome: StepOutcome,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct RunStats {
    pub reports: u32,
    pub alerts: u32,
    pub precautions: u32,
    pub informed: u32,
    pub blocked: u32,
}

pub struct Simulation<'w> {
    world: &'w SimWorld,
    cfg: ScenarioConfig,
    seed: u64,
    day: u32,
    health: Vec<Health>,
    infected_day: Vec<u32>,
    secondary: Vec<u32>,
    /// Last day (inclusive) of each person's precautions.
    precaution_until: Vec<Option<u32>>,
    neighbors: Option<Vec<Vec<PersonId>>>,
    app: Option<AppLayer>,
    trajectory: Vec<DayCounts>,
    stats: RunStats,
    audit: Option<Vec<DayAudit>>,
}

const NOT_INFECTED: u32 = u32::MAX;

impl<'w> Simulation<'w> {
    /// `adopters` empty or all false runs the baseline with no server.
    pub fn new(world: &'w SimWorld, cfg: &ScenarioConfig, seed: u64, adopters: &[bool]) -> Result<Self, ServerError> {
        let n = world.size;
        let mut health = vec![Health::S; n];
        let mut infected_day = vec![NOT_INFECTED; n];
        let mut order: Vec<(u64, PersonId)> =
            (0..n as PersonId).map(|p| (key(seed, Tag::Seeds, p as u64, 0, 0), p)).collect();
        order.sort_unstable();
        for &(_, p) in order.iter().take(cfg.epi.initial_seeds) {
            health[p as usize] = Health::E;
            infected_day[p as usize] = 0;
        }
        let app = if adopters.iter().any(|&a| a) { Some(AppLayer::new(cfg, adopters, seed)?) } else { None };
        let neighbors = (cfg.behavior.p3 > 0.0 && app.is_some()).then(|| world.recurring_neighbors());
        Ok(Self {
            world,
            cfg: cfg.clone(),
            seed,
            day: 0,
            health,
            infected_day,
            secondary: vec![0; n],
            precaution_until: vec![None; n],
            neighbors,
            app,
            trajectory: Vec::new(),
            stats: RunStats::default(),
            audit: None,
        })
    }

    /// Keeps every day's transmission inputs and outcome.
    pub fn with_audit(mut self) -> Self {
        self.audit = Some(Vec::new());
        self
    }

    pub fn audit_log(&self) -> &[DayAudit] {
        self.audit.as_deref().unwrap_or_default()
    }

    pub fn day(&self) -> u32 {
        self.day
    }

    pub fn health(&self) -> &[Health] {
        &self.health
    }

    pub fn trajectory(&self) -> &[DayCounts] {
        &self.trajectory
    }

    pub fn stats(&self) -> &RunStats {
        &self.stats
    }

    pub fn server(&self) -> Option<&SignalServer> {
        self.app.as_ref().map(|a| &a.server)
    }

    pub fn device_of(&self, p: PersonId) -> Option<DeviceId> {
        self.app.as_ref().and_then(|a| a.device_of[p as usize])
    }

    pub fn is_active(&self) -> bool {
        self.health.iter().any(|h| matches!(h, Health::E | Health::I))
    }

    pub fn precaution_mask(&self) -> Vec<bool> {
        self.precaution_until.iter().map(|u| u.is_some_and(|u| u >= self.day)).collect()
    }

    fn day_start(&self) -> Timestamp {
        self.cfg.start + self.day as i64 * DAY
    }

    fn counts(&self, new_infections: u32, blocked: u32) -> DayCounts {
        let mut c = DayCounts { day: self.day, new_infections, blocked, ..Default::default() };
        for h in &self.health {
            match h {
                Health::S => c.s += 1,
                Health::E => c.e += 1,
                Health::I => c.i += 1,
                Health::R => c.r += 1,
            }
        }
        c
    }

    /// Advances one day: stage progression, contacts and transmission,
    /// detections, evening reports and the behavioural response to them.
    pub fn step_day(&mut self) -> Result<DayCounts, ServerError> {
        let (latent, infectious) = (self.cfg.epi.latent_days, self.cfg.epi.infectious_days);
        let mut symptomatic = Vec::new();
        for p in 0..self.health.len() {
            let t0 = self.infected_day[p];
            if t0 == NOT_INFECTED {
                continue;
            }
            if self.health[p] == Health::E && self.day >= t0 + latent {
                self.health[p] = Health::I;
                symptomatic.push(p as PersonId);
            }
            if self.health[p] == Health::I && self.day >= t0 + latent + infectious {
                self.health[p] = Health::R;
            }
        }

        let contacts = daily_contacts(self.world, &self.cfg.population, self.seed, self.day);
        let precaution = self.precaution_mask();
        let outcome = transmission_step(
            &self.health,
            &contacts,
            &precaution,
            self.cfg.epi.transmission_prob,
            self.cfg.behavior.p2,
            self.seed,
            self.day,
        );
        if let Some(log) = &mut self.audit {
            log.push(DayAudit {
                day: self.day,
                health: self.health.clone(),
                precaution,
                outcome: outcome.clone(),
            });
        }
        for t in &outcome.infections {
            self.health[t.to as usize] = Health::E;
            self.infected_day[t.to as usize] = self.day;
            self.secondary[t.from as usize] += 1;
        }
        self.stats.blocked += outcome.blocked.len() as u32;

        if self.app.is_some() {
            self.feed_detections(&contacts)?;
            self.report(&symptomatic)?;
        }
        let counts = self.counts(outcome.infections.len() as u32, outcome.blocked.len() as u32);
        self.trajectory.push(counts);
        self.day += 1;
        Ok(counts)
    }

    fn feed_detections(&mut self, contacts: &[DailyContact]) -> Result<(), ServerError> {
        let start = self.day_start();
        let app = self.app.as_mut().expect("app layer present");
        let mut pairs: Vec<(PersonId, PersonId)> = contacts
            .iter()
            .filter(|c| c.long && app.device_of[c.a as usize].is_some() && app.device_of[c.b as usize].is_some())
            .map(|c| (c.a, c.b))
            .collect();
        pairs.sort_unstable();
        pairs.dedup();
        let mut records = Vec::with_capacity(pairs.len() * 4);
        for (a, b) in pairs {
            let (da, db) = (app.device_of[a as usize].expect("adopter"), app.device_of[b as usize].expect("adopter"));
            let (ta, tb) = (temp_id(self.seed, a, self.day), temp_id(self.seed, b, self.day));
            for i in 0..4i64 {
                let ts = start + ENCOUNTER_START + i * 5 * MINUTE;
                records.push(if i % 2 == 0 {
                    DetectionRecord::ble(da, &ta, &tb, ts, ENCOUNTER_RSSI)
                } else {
                    DetectionRecord::ble(db, &tb, &ta, ts, ENCOUNTER_RSSI)
                });
            }
        }
        app.clock.set(start + self.cfg.report_hour as i64 * HOUR);
        for r in app.server.ingest_batch(&records) {
            r?;
        }
        Ok(())
    }

    /// Evening reports: every new symptomatic case is diagnosed; adopters
    /// among them redeem a POSITIVE token, and household members handed a
    /// contact token redeem it if they carry the app.
    fn report(&mut self, symptomatic: &[PersonId]) -> Result<(), ServerError> {
        let seed = self.seed;
        let day = self.day as u64;
        let rep = self.cfg.reporting.clone();
        let mut redemptions: Vec<(PersonId, CaseKind)> = Vec::new();
        {
            let app = self.app.as_ref().expect("app layer present");
            for &p in symptomatic {
                if app.device_of[p as usize].is_some()
                    && uniform(seed, Tag::Report, p as u64, day, 0) < rep.positive_redeem_prob
                {
                    redemptions.push((p, CaseKind::Positive));
                }
                let h = &self.world.households[self.world.household_of[p as usize] as usize];
                for &m in h.iter().filter(|&&m| m != p) {
                    if uniform(seed, Tag::ContactToken, p as u64, m as u64, 0) < rep.contact_token_prob
                        && app.device_of[m as usize].is_some()
                        && uniform(seed, Tag::ContactRedeem, m as u64, p as u64, 0) < rep.contact_redeem_prob
                    {
                        redemptions.push((m, CaseKind::Contact));
                    }
                }
            }
        }
        if redemptions.is_empty() {
            self.prune();
            return Ok(());
        }
        let today = date_of(self.day_start());
        let d_star = self.cfg.behavior.alert_distance;
        let mut alerted: Vec<(PersonId, u8)> = Vec::new();
        {
            let app = self.app.as_ref().expect("app layer present");
            for (p, kind) in redemptions {
                let token = app.server.issue_tokens(SIM_SECRET, kind, 1)?.remove(0);
                let device = app.device_of[p as usize].expect("adopter");
                let symptom = (kind == CaseKind::Positive).then_some(today);
                let r = app.server.redeem(device, Some(&token.token), symptom)?;
                self.stats.reports += 1;
                for s in r.signals {
                    alerted.push((app.person_of[&s.viewer], s.distance));
                }
            }
        }
        self.respond(alerted, d_star);
        self.prune();
        Ok(())
    }

    fn respond(&mut self, alerted: Vec<(PersonId, u8)>, d_star: u8) {
        let b = self.cfg.behavior.clone();
        let mut reached: Vec<PersonId> = Vec::new();
        for &(p, d) in &alerted {
            if d <= d_star {
                self.stats.alerts += 1;
                reached.push(p);
            }
            if let Some(nb) = &self.neighbors {
                if d < d_star {
                    for &m in &nb[p as usize] {
                        if uniform(self.seed, Tag::Inform, p as u64, m as u64, self.day as u64) < b.p3 {
                            self.stats.informed += 1;
                            reached.push(m);
                        }
                    }
                }
            }
        }
        reached.sort_unstable();
        reached.dedup();
        for p in reached {
            if uniform(self.seed, Tag::Precaution, p as u64, self.day as u64, 0) < b.p1 {
                let until = self.day + b.precaution_days;
                let slot = &mut self.precaution_until[p as usize];
                if slot.is_none_or(|u| u < until) {
                    *slot = Some(until);
                }
                self.stats.precautions += 1;
            }
        }
    }

    fn prune(&self) {
        if let Some(app) = &self.app {
            app.server.prune(app.clock.now());
        }
    }

    /// Runs until the configured horizon or until no one is exposed or
    /// infectious.
    pub fn run(mut self) -> Result<RunResult, ServerError> {
        while self.day < self.cfg.days && self.is_active() {
            self.step_day()?;
        }
        Ok(self.finish())
    }

    pub fn finish(self) -> RunResult {
        let n = self.health.len();
        let ever = self.infected_day.iter().filter(|&&d| d != NOT_INFECTED).count();
        // Early-phase reproduction number: mean secondary infections of the
        // cases infected before cumulative incidence reached 10%.
        let mut by_day: Vec<(u32, PersonId)> = self
            .infected_day
            .iter()
            .enumerate()
            .filter(|(_, &d)| d != NOT_INFECTED)
            .map(|(p, &d)| (d, p as PersonId))
            .collect();
        by_day.sort_unstable();
        let early = by_day.len().min(((n as f64 * 0.1).ceil() as usize).max(self.cfg.epi.initial_seeds));
        let cutoff_day = by_day.get(early.saturating_sub(1)).map(|x| x.0);
        let early_cases: Vec<PersonId> = match cutoff_day {
            Some(c) => by_day.iter().filter(|x| x.0 < c || x.0 == 0).map(|x| x.1).collect(),
            None => Vec::new(),
        };
        let r_eff = if early_cases.is_empty() {
            0.0
        } else {
            early_cases.iter().map(|&p| self.secondary[p as usize] as f64).sum::<f64>() / early_cases.len() as f64
        };
        RunResult {
            attack_rate: ever as f64 / n as f64,
            r_eff,
            trajectory: self.trajectory,
            stats: self.stats,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunResult {
    pub attack_rate: f64,
    pub r_eff: f64,
    pub trajectory: Vec<DayCounts>,
    pub stats: RunStats,
}
