//! Storage scans backing the privacy invariants. Each check returns the list
//! of violations found; an empty list means the store is clean.

use std::collections::BTreeSet;
use std::fs;
use std::io;
use std::path::Path;

use netdist_core::DeviceId;
use serde_json::Value;

use crate::store::{DEVICES_FILE, EVENTS_FILE, REPORTS_FILE, TOKENS_FILE};

/// Field names that must not exist in any persisted schema.
pub const FORBIDDEN_FIELDS: &[&str] = &[
    "bssid", "hashed_bssid", "gps", "lat", "latitude", "lon", "lng", "longitude", "location", "mac",
    "imei", "phone", "phone_number", "name", "email", "hardware_id",
];

/// Contents of every file in a state directory, by file name.
pub struct StateFiles(pub Vec<(String, String)>);

impl StateFiles {
    pub fn read(dir: &Path) -> io::Result<Self> {
        let mut files = Vec::new();
        for entry in fs::read_dir(dir)? {
            let entry = entry?;
            if entry.file_type()?.is_file() {
                let name = entry.file_name().to_string_lossy().into_owned();
                files.push((name, fs::read_to_string(entry.path())?));
            }
        }
        files.sort();
        Ok(Self(files))
    }

    fn get(&self, name: &str) -> &str {
        self.0.iter().find(|(n, _)| n == name).map(|(_, s)| s.as_str()).unwrap_or("")
    }

    /// Parsed JSON values of every line (or of the whole file for `.json`).
    fn values(&self) -> Vec<(String, Value)> {
        let mut out = Vec::new();
        for (name, text) in &self.0 {
            if name.ends_with(".json") {
                if let Ok(v) = serde_json::from_str(text) {
                    out.push((name.clone(), v));
                }
            } else {
                out.extend(text.lines().filter_map(|l| serde_json::from_str(l).ok()).map(|v| (name.clone(), v)));
            }
        }
        out
    }
}

fn keys(v: &Value, out: &mut BTreeSet<String>) {
    match v {
        Value::Object(m) => {
            for (k, x) in m {
                out.insert(k.to_ascii_lowercase());
                keys(x, out);
            }
        }
        Value::Array(a) => a.iter().for_each(|x| keys(x, out)),
        _ => {}
    }
}

/// Every object key appearing anywhere in `v`.
pub fn field_names(v: &Value) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    keys(v, &mut out);
    out
}

fn occurrences<'a>(haystacks: impl Iterator<Item = (&'a str, &'a str)>, needles: &[String], what: &str) -> Vec<String> {
    let mut out = Vec::new();
    for (name, text) in haystacks {
        for n in needles {
            if !n.is_empty() && text.contains(n.as_str()) {
                out.push(format!("{name} contains {what} {n}"));
            }
        }
    }
    out
}

/// The main server must hold nothing derived from a BSSID: neither the raw
/// values nor their hashes, and no BSSID-named fields.
pub fn main_server_bssid_violations(files: &StateFiles, raw: &[String], hashed: &[String]) -> Vec<String> {
    let mut out = occurrences(files.0.iter().map(|(n, t)| (n.as_str(), t.as_str())), raw, "raw BSSID");
    out.extend(occurrences(files.0.iter().map(|(n, t)| (n.as_str(), t.as_str())), hashed, "hashed BSSID"));
    for (name, v) in files.values() {
        for k in field_names(&v) {
            if k.contains("bssid") {
                out.push(format!("{name} has field {k}"));
            }
        }
    }
    out
}

/// The matcher must hold no device ids.
pub fn matcher_device_violations(dump: &Value, devices: &[DeviceId]) -> Vec<String> {
    let text = dump.to_string();
    let needles: Vec<String> = devices.iter().map(|d| d.to_string()).collect();
    let mut out = occurrences(std::iter::once(("matcher", text.as_str())), &needles, "device id");
    for k in field_names(dump) {
        if k.contains("device") || k == "reporter" || k.contains("uuid") {
            out.push(format!("matcher has field {k}"));
        }
    }
    out
}

/// No persisted table may join a token value to a device or a case: token
/// strings appear only in the token snapshot, which has no device or case
/// columns.
pub fn token_link_violations(files: &StateFiles, devices: &[DeviceId]) -> Vec<String> {
    let mut out = Vec::new();
    let tokens_text = files.get(TOKENS_FILE);
    let tokens: Vec<String> = serde_json::from_str::<Vec<Value>>(tokens_text)
        .unwrap_or_default()
        .iter()
        .filter_map(|t| t.get("token").and_then(Value::as_str).map(str::to_string))
        .collect();
    let others = files.0.iter().filter(|(n, _)| n != TOKENS_FILE).map(|(n, t)| (n.as_str(), t.as_str()));
    out.extend(occurrences(others, &tokens, "token"));
    let ids: Vec<String> = devices.iter().map(|d| d.to_string()).collect();
    out.extend(occurrences(std::iter::once((TOKENS_FILE, tokens_text)), &ids, "device id"));
    if let Ok(v) = serde_json::from_str::<Value>(tokens_text) {
        for k in field_names(&v) {
            if k.contains("device") || k.contains("case") || k == "reporter" || k == "redeemed_by" {
                out.push(format!("{TOKENS_FILE} has field {k}"));
            }
        }
    }
    for (name, v) in files.values() {
        if name != TOKENS_FILE && field_names(&v).contains("token") {
            out.push(format!("{name} has field token"));
        }
    }
    out
}

/// No persisted record carries a personal-data field.
pub fn pii_field_violations(files: &StateFiles) -> Vec<String> {
    let mut out = Vec::new();
    for (name, v) in files.values() {
        for k in field_names(&v) {
            if FORBIDDEN_FIELDS.contains(&k.as_str()) {
                out.push(format!("{name} has field {k}"));
            }
        }
    }
    out
}

/// Files a healthy state directory may contain.
pub fn unexpected_files(files: &StateFiles) -> Vec<String> {
    files
        .0
        .iter()
        .map(|(n, _)| n)
        .filter(|n| ![DEVICES_FILE, EVENTS_FILE, REPORTS_FILE, TOKENS_FILE].contains(&n.as_str()))
        .cloned()
        .collect()
}

/// Submissions and identifier associations the matcher still holds although
/// their retention has passed at `now`.
pub fn matcher_expired_violations(dump: &Value, now: netdist_core::Timestamp) -> Vec<String> {
    let mut out = Vec::new();
    let retention = dump["config"]["retention_secs"].as_i64().unwrap_or(0);
    for r in dump["closed_rounds"].as_array().into_iter().flatten() {
        let closed = r["closed_at"].as_i64().unwrap_or(i64::MIN);
        if now - closed >= retention {
            out.push(format!("round closed at {closed} retained past {retention}s"));
        }
    }
    for (h, t) in dump["temp_ids"].as_object().into_iter().flatten() {
        let until = t["issued_at"].as_i64().unwrap_or(i64::MIN) + t["ttl"].as_i64().unwrap_or(0);
        if until <= now {
            out.push(format!("expired identifier for {h} retained"));
        }
    }
    out
}
