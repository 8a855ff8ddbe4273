//! Append-only persistence.
//!
//! A state directory holds three NDJSON logs and one snapshot:
//!
//! | file              | line type                        |
//! |-------------------|----------------------------------|
//! | `devices.ndjson`  | [`DeviceEntry`]                  |
//! | `events.ndjson`   | [`DetectionRecord`]              |
//! | `reports.ndjson`  | [`ReportEntry`]                  |
//! | `tokens.json`     | sorted array of [`CaseToken`]    |
//!
//! The token snapshot is rewritten whole (write to a temporary file, then
//! rename) so its line order carries no information about redemption order.

use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use netdist_core::ids::DeviceEntry;
use netdist_core::{CaseReport, CaseToken, DetectionRecord};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

pub const DEVICES_FILE: &str = "devices.ndjson";
pub const EVENTS_FILE: &str = "events.ndjson";
pub const REPORTS_FILE: &str = "reports.ndjson";
pub const TOKENS_FILE: &str = "tokens.json";

/// A case report together with the number of detection events committed
/// before it, so replay pins it against the same log prefix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportEntry {
    pub event_seq: u64,
    pub report: CaseReport,
}

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}:{line}: malformed line: {message}")]
    MalformedLine { path: PathBuf, line: usize, message: String },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> StoreError + '_ {
    move |source| StoreError::Io { path: path.to_path_buf(), source }
}

/// Everything needed to rebuild server state.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Logs {
    pub devices: Vec<DeviceEntry>,
    pub events: Vec<DetectionRecord>,
    pub reports: Vec<ReportEntry>,
    pub tokens: Vec<CaseToken>,
}

pub fn read_ndjson<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, StoreError> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(io_err(path)(e)),
    };
    parse_ndjson(BufReader::new(file), path)
}

pub fn parse_ndjson<T: DeserializeOwned>(reader: impl BufRead, path: &Path) -> Result<Vec<T>, StoreError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let v = serde_json::from_str(&line).map_err(|e| StoreError::MalformedLine {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(v);
    }
    Ok(out)
}

impl Logs {
    pub fn load(dir: &Path) -> Result<Self, StoreError> {
        let tokens_path = dir.join(TOKENS_FILE);
        let tokens = match fs::read_to_string(&tokens_path) {
            Ok(s) => serde_json::from_str(&s).map_err(|e| StoreError::MalformedLine {
                path: tokens_path.clone(),
                line: e.line(),
                message: e.to_string(),
            })?,
            Err(e) if e.kind() == io::ErrorKind::NotFound => Vec::new(),
            Err(e) => return Err(io_err(&tokens_path)(e)),
        };
        Ok(Self {
            devices: read_ndjson(&dir.join(DEVICES_FILE))?,
            events: read_ndjson(&dir.join(EVENTS_FILE))?,
            reports: read_ndjson(&dir.join(REPORTS_FILE))?,
            tokens,
        })
    }
}

struct Appender {
    path: PathBuf,
    out: BufWriter<File>,
}

impl Appender {
    fn open(path: PathBuf) -> Result<Self, StoreError> {
        let f = OpenOptions::new().create(true).append(true).open(&path).map_err(io_err(&path))?;
        Ok(Self { path, out: BufWriter::new(f) })
    }

    fn append<T: Serialize>(&mut self, v: &T, fsync: bool) -> Result<(), StoreError> {
        let mut line = serde_json::to_vec(v).expect("log types serialise");
        line.push(b'\n');
        let path = &self.path;
        self.out.write_all(&line).map_err(io_err(path))?;
        self.out.flush().map_err(io_err(path))?;
        if fsync {
            self.out.get_ref().sync_data().map_err(io_err(path))?;
        }
        Ok(())
    }
}

/// Durable sink for state changes. Every method returns only after the data
/// reached the OS (and the disk, when `fsync` is set).
pub struct FileStore {
    dir: PathBuf,
    fsync: bool,
    devices: Appender,
    events: Appender,
    reports: Appender,
}

impl FileStore {
    pub fn open(dir: &Path, fsync: bool) -> Result<Self, StoreError> {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            fsync,
            devices: Appender::open(dir.join(DEVICES_FILE))?,
            events: Appender::open(dir.join(EVENTS_FILE))?,
            reports: Appender::open(dir.join(REPORTS_FILE))?,
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn append_device(&mut self, e: &DeviceEntry) -> Result<(), StoreError> {
        self.devices.append(e, self.fsync)
    }

    pub fn append_event(&mut self, e: &DetectionRecord) -> Result<(), StoreError> {
        self.events.append(e, self.fsync)
    }

    pub fn append_report(&mut self, e: &ReportEntry) -> Result<(), StoreError> {
        self.reports.append(e, self.fsync)
    }

    pub fn write_tokens<'a>(&mut self, tokens: impl Iterator<Item = &'a CaseToken>) -> Result<(), StoreError> {
        let list: Vec<&CaseToken> = tokens.collect();
        let path = self.dir.join(TOKENS_FILE);
        let tmp = self.dir.join(format!("{TOKENS_FILE}.tmp"));
        {
            let mut f = File::create(&tmp).map_err(io_err(&tmp))?;
            serde_json::to_writer(&mut f, &list).expect("tokens serialise");
            f.write_all(b"\n").map_err(io_err(&tmp))?;
            if self.fsync {
                f.sync_data().map_err(io_err(&tmp))?;
            }
        }
        fs::rename(&tmp, &path).map_err(io_err(&path))
    }
}
