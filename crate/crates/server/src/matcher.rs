//! The Wi-Fi Matching Entity as a service. It runs separately from the
//! signal server and shares nothing with it except the channel secret.

use std::sync::Arc;

use netdist_core::config::WifiMatcherConfig;
use netdist_core::wifi::{HashedBssid, Matcher, SingleUsePair, Submission, WifiError, WifiTempId};
use parking_lot::Mutex;
use rand::rngs::StdRng;
use rand::SeedableRng;

use crate::clock::Clock;

pub struct MatcherService {
    secret: String,
    clock: Arc<dyn Clock>,
    inner: Mutex<(Matcher, StdRng)>,
}

#[derive(Debug, thiserror::Error)]
pub enum MatcherError {
    #[error(transparent)]
    Wifi(#[from] WifiError),
    #[error("unauthorized")]
    Unauthorized,
}

impl MatcherService {
    pub fn new(config: WifiMatcherConfig, clock: Arc<dyn Clock>, seed: Option<u64>) -> Self {
        let rng = match seed {
            Some(s) => StdRng::seed_from_u64(s),
            None => StdRng::from_os_rng(),
        };
        Self { secret: config.shared_secret.clone(), clock, inner: Mutex::new((Matcher::new(config), rng)) }
    }

    pub fn resolve(&self, h: &HashedBssid) -> WifiTempId {
        let now = self.clock.now();
        let mut g = self.inner.lock();
        let (m, rng) = &mut *g;
        m.resolve_bssid(h, now, rng)
    }

    pub fn submit(&self, s: Submission) -> Result<(), MatcherError> {
        Ok(self.inner.lock().0.submit(s)?)
    }

    /// Closes the open round. Only the main server holds the secret.
    pub fn close_round(&self, secret: &str) -> Result<Vec<SingleUsePair>, MatcherError> {
        if secret != self.secret {
            return Err(MatcherError::Unauthorized);
        }
        let now = self.clock.now();
        Ok(self.inner.lock().0.close_round(now))
    }

    /// Applies retention at the current time.
    pub fn purge(&self) {
        let now = self.clock.now();
        self.inner.lock().0.purge(now);
    }

    pub fn pending(&self) -> usize {
        self.inner.lock().0.pending()
    }

    pub fn retained_from_rounds_closed_before(&self, t: netdist_core::Timestamp) -> usize {
        self.inner.lock().0.retained_from_rounds_closed_before(t)
    }

    /// Full matcher state, for storage audits.
    pub fn dump(&self) -> serde_json::Value {
        self.inner.lock().0.dump()
    }
}
