//! Split-trust Wi-Fi co-location.
//!
//! Devices hash the BSSID of their access point with a deployment salt and
//! talk to a separate Matching Entity. In temporary-identifier mode the
//! matcher answers with a short-lived random identifier per hashed BSSID that
//! the device forwards to the main server. In pair-report mode devices send a
//! single-use identifier alongside the hash; the matcher reports which
//! single-use identifiers were co-located and the main server, which alone
//! knows the single-use → device mapping, links them.
//!
//! The matcher never receives device identifiers and the main server never
//! receives hashes.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use rand::RngCore;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::WifiMatcherConfig;
use crate::ids::DeviceId;
use crate::time::Timestamp;

fn random_hex<R: RngCore + ?Sized>(rng: &mut R) -> String {
    let mut bytes = [0u8; 16];
    rng.fill_bytes(&mut bytes);
    hex::encode(bytes)
}

/// Salted SHA-256 digest of an access-point BSSID, hex encoded.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct HashedBssid(pub String);

impl HashedBssid {
    /// Device-side hashing. BSSIDs are normalised to lower case before
    /// hashing so `AA:BB:..` and `aa:bb:..` agree.
    pub fn from_bssid(bssid: &str, salt: &[u8]) -> Self {
        let mut h = Sha256::new();
        h.update(salt);
        h.update(bssid.trim().to_ascii_lowercase().as_bytes());
        HashedBssid(hex::encode(h.finalize()))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WifiTempId {
    pub id: String,
    pub issued_at: Timestamp,
    pub ttl: i64,
}

impl WifiTempId {
    pub fn expires_at(&self) -> Timestamp {
        self.issued_at + self.ttl
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SingleUseId(pub String);

impl SingleUseId {
    pub fn random<R: RngCore + ?Sized>(rng: &mut R) -> Self {
        SingleUseId(random_hex(rng))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Submission {
    pub single_use_id: SingleUseId,
    pub hashed_bssid: HashedBssid,
    pub timestamp: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum WifiError {
    #[error("single-use id {0:?} submitted twice in one round")]
    DuplicateSingleUseId(String),
}

/// Unordered pair in canonical order.
pub type SingleUsePair = (SingleUseId, SingleUseId);

/// Pairs of submissions with equal hashes whose timestamps fall in the same
/// epoch. Output is sorted and each pair appears once.
pub fn match_round(submissions: &[Submission], epoch_secs: i64) -> Result<Vec<SingleUsePair>, WifiError> {
    let mut ids = HashSet::new();
    for s in submissions {
        if !ids.insert(&s.single_use_id) {
            return Err(WifiError::DuplicateSingleUseId(s.single_use_id.0.clone()));
        }
    }
    let mut buckets: BTreeMap<(&HashedBssid, i64), Vec<&SingleUseId>> = BTreeMap::new();
    for s in submissions {
        buckets
            .entry((&s.hashed_bssid, s.timestamp.div_euclid(epoch_secs)))
            .or_default()
            .push(&s.single_use_id);
    }
    let mut pairs = BTreeSet::new();
    for members in buckets.values() {
        for (i, x) in members.iter().enumerate() {
            for y in &members[i + 1..] {
                let (a, b) = if x <= y { (x, y) } else { (y, x) };
                pairs.insert(((*a).clone(), (*b).clone()));
            }
        }
    }
    Ok(pairs.into_iter().collect())
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct ClosedRound {
    closed_at: Timestamp,
    submissions: Vec<Submission>,
}

/// State held by the Matching Entity. It is keyed only by hashes and
/// single-use identifiers.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Matcher {
    config: WifiMatcherConfig,
    temp_ids: BTreeMap<HashedBssid, WifiTempId>,
    open_round: Vec<Submission>,
    closed_rounds: Vec<ClosedRound>,
    rounds_closed: u64,
}

impl Matcher {
    pub fn new(config: WifiMatcherConfig) -> Self {
        Self {
            config,
            temp_ids: BTreeMap::new(),
            open_round: Vec::new(),
            closed_rounds: Vec::new(),
            rounds_closed: 0,
        }
    }

    pub fn config(&self) -> &WifiMatcherConfig {
        &self.config
    }

    /// Returns the identifier currently associated with `h`, issuing a new
    /// one when none is live. Expired associations are expunged first.
    pub fn resolve_bssid<R: RngCore + ?Sized>(&mut self, h: &HashedBssid, now: Timestamp, rng: &mut R) -> WifiTempId {
        self.expire_temp_ids(now);
        if let Some(t) = self.temp_ids.get(h) {
            return t.clone();
        }
        let t = WifiTempId { id: random_hex(rng), issued_at: now, ttl: self.config.epoch_secs };
        self.temp_ids.insert(h.clone(), t.clone());
        t
    }

    fn expire_temp_ids(&mut self, now: Timestamp) {
        self.temp_ids.retain(|_, t| now < t.expires_at());
    }

    pub fn submit(&mut self, s: Submission) -> Result<(), WifiError> {
        if self.open_round.iter().any(|o| o.single_use_id == s.single_use_id) {
            return Err(WifiError::DuplicateSingleUseId(s.single_use_id.0));
        }
        self.open_round.push(s);
        Ok(())
    }

    pub fn pending(&self) -> usize {
        self.open_round.len()
    }

    /// Matches the open round and starts a new one. With zero retention the
    /// round's submissions are destroyed immediately.
    pub fn close_round(&mut self, now: Timestamp) -> Vec<SingleUsePair> {
        let subs = std::mem::take(&mut self.open_round);
        let pairs = match_round(&subs, self.config.epoch_secs).expect("duplicates rejected at submit");
        self.rounds_closed += 1;
        if self.config.retention_secs > 0 {
            self.closed_rounds.push(ClosedRound { closed_at: now, submissions: subs });
        }
        self.purge(now);
        pairs
    }

    /// Destroys closed rounds past retention and expired identifier
    /// associations.
    pub fn purge(&mut self, now: Timestamp) {
        let keep = self.config.retention_secs;
        self.closed_rounds.retain(|r| now - r.closed_at < keep);
        self.expire_temp_ids(now);
    }

    /// Submissions retained from rounds closed at or before `closed_before`.
    pub fn retained_from_rounds_closed_before(&self, closed_before: Timestamp) -> usize {
        self.closed_rounds
            .iter()
            .filter(|r| r.closed_at < closed_before)
            .map(|r| r.submissions.len())
            .sum()
    }

    /// Everything the matcher stores, for audits.
    pub fn dump(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("matcher state serialises")
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct Announcement {
    device: DeviceId,
    timestamp: Timestamp,
}

/// Main-server mapping of single-use identifiers to devices.
#[derive(Clone, Debug, Default)]
pub struct SingleUseRegistry {
    entries: HashMap<SingleUseId, Announcement>,
    dropped: u64,
}

/// Device-level Wi-Fi co-presence observation.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct LinkedPair {
    pub a: DeviceId,
    pub b: DeviceId,
    pub timestamp: Timestamp,
}

impl SingleUseRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn announce(&mut self, device: DeviceId, id: SingleUseId, timestamp: Timestamp) {
        self.entries.insert(id, Announcement { device, timestamp });
    }

    pub fn dropped(&self) -> u64 {
        self.dropped
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Resolves matched pairs to devices. Pairs naming an unknown id are
    /// dropped and counted; pairs resolving to one device are suppressed.
    /// Resolved identifiers are consumed.
    pub fn link_pairs(&mut self, pairs: &[SingleUsePair]) -> Vec<LinkedPair> {
        let mut out = BTreeSet::new();
        let mut used = Vec::new();
        for (x, y) in pairs {
            let (Some(ax), Some(ay)) = (self.entries.get(x), self.entries.get(y)) else {
                self.dropped += 1;
                continue;
            };
            used.push(x.clone());
            used.push(y.clone());
            if ax.device == ay.device {
                continue;
            }
            let (a, b) = if ax.device < ay.device { (ax.device, ay.device) } else { (ay.device, ax.device) };
            out.insert(LinkedPair { a, b, timestamp: ax.timestamp.min(ay.timestamp) });
        }
        for id in used {
            self.entries.remove(&id);
        }
        out.into_iter().collect()
    }

    /// Forgets announcements older than `before`.
    pub fn prune(&mut self, before: Timestamp) {
        self.entries.retain(|_, a| a.timestamp >= before);
    }
}
