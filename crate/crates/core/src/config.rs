//! Service configuration. Every section has defaults so a scenario file only
//! needs to name what it changes.

use serde::{Deserialize, Serialize};

use crate::time::{DAY, HOUR, MINUTE};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Config {
    pub ingest: IngestConfig,
    pub wifi_matcher: WifiMatcherConfig,
    pub graph: GraphConfig,
    pub cases: CasesConfig,
    pub chart: ChartConfig,
    pub server: ServerConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IngestConfig {
    /// Minimum pooled BLE/ultrasound co-presence, seconds.
    pub proximity_min_secs: i64,
    /// Minimum same-access-point co-presence, seconds.
    pub wifi_min_secs: i64,
    /// Distance bound for proximity co-presence, meters.
    pub max_distance_m: f64,
    /// BLE samples without ultrasound refinement count as in range iff
    /// `rssi >= rssi_cutoff_db`.
    pub rssi_cutoff_db: i32,
    /// Consecutive samples no further apart than this merge into one interval.
    pub stitch_gap_secs: i64,
    pub window_secs: i64,
    pub clock_skew_secs: i64,
}

impl Default for IngestConfig {
    fn default() -> Self {
        Self {
            proximity_min_secs: 15 * MINUTE,
            wifi_min_secs: 3 * HOUR,
            max_distance_m: 10.0,
            rssi_cutoff_db: -75,
            stitch_gap_secs: 5 * MINUTE,
            window_secs: 14 * DAY,
            clock_skew_secs: 2 * MINUTE,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WifiMode {
    /// Matcher hands out short-lived identifiers per hashed BSSID; devices
    /// report those identifiers to the main server.
    TempId,
    /// Matcher reports proximal pairs of single-use identifiers; the main
    /// server resolves them to devices.
    PairReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WifiMatcherConfig {
    pub mode: WifiMode,
    pub epoch_secs: i64,
    /// How long closed-round submissions survive; 0 destroys them at close.
    pub retention_secs: i64,
    /// Shared secret authenticating the main server on the matcher channel.
    pub shared_secret: String,
    pub bind: Option<String>,
}

pub const MAX_MATCHER_RETENTION_SECS: i64 = 4 * HOUR;

impl Default for WifiMatcherConfig {
    fn default() -> Self {
        Self {
            mode: WifiMode::TempId,
            epoch_secs: 20 * MINUTE,
            retention_secs: 0,
            shared_secret: "matcher-secret".into(),
            bind: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GraphConfig {
    pub max_distance: u8,
}

impl Default for GraphConfig {
    fn default() -> Self {
        Self { max_distance: 12 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuthorityConfig {
    pub id: String,
    pub secret: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CasesConfig {
    pub token_validity_secs: i64,
    pub allow_unauthenticated: bool,
    pub authorities: Vec<AuthorityConfig>,
}

impl Default for CasesConfig {
    fn default() -> Self {
        Self {
            token_validity_secs: 72 * HOUR,
            allow_unauthenticated: false,
            authorities: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChartConfig {
    pub fade_days: i64,
}

impl Default for ChartConfig {
    fn default() -> Self {
        Self { fade_days: 10 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServerConfig {
    pub bind: String,
    pub state_dir: Option<String>,
    /// fsync every committed log line before acknowledging.
    pub fsync: bool,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self { bind: "127.0.0.1:8080".into(), state_dir: None, fsync: true }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Config {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let cfg: Config = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: &str| Err(ConfigError::Invalid(m.to_string()));
        let i = &self.ingest;
        if i.proximity_min_secs < 0 || i.wifi_min_secs < 0 || i.stitch_gap_secs < 0 {
            return bad("ingest durations must be non-negative");
        }
        if i.window_secs <= 0 {
            return bad("ingest.window_secs must be positive");
        }
        // Written negated so that NaN is rejected too.
        if !(i.max_distance_m >= 0.0) {
            return bad("ingest.max_distance_m must be non-negative");
        }
        let w = &self.wifi_matcher;
        if w.epoch_secs <= 0 || w.epoch_secs >= HOUR {
            return bad("wifi_matcher.epoch_secs must be positive and below one hour");
        }
        if !(0..=MAX_MATCHER_RETENTION_SECS).contains(&w.retention_secs) {
            return bad("wifi_matcher.retention_secs must be within 0..=4h");
        }
        if self.graph.max_distance == 0 || self.graph.max_distance == u8::MAX {
            return bad("graph.max_distance must be within 1..=254");
        }
        if self.chart.fade_days <= 0 {
            return bad("chart.fade_days must be positive");
        }
        if self.cases.token_validity_secs <= 0 {
            return bad("cases.token_validity_secs must be positive");
        }
        Ok(())
    }
}
