//! Centralized signal server and the separate Wi-Fi matching entity.
//!
//! [`SignalServer`] composes ingestion, snapshots, token redemption and chart
//! pinning behind a single commit lock; [`http::router`] exposes it over
//! HTTP/JSON. [`MatcherService`] is deployed apart from it and never sees a
//! device id.

pub mod audit;
pub mod clock;
pub mod http;
pub mod matcher;
pub mod server;
pub mod store;
pub mod workload;

pub use clock::{Clock, ManualClock, SystemClock};
pub use matcher::MatcherService;
pub use server::{Redemption, ServerError, SignalServer};
pub use store::{FileStore, Logs, ReportEntry, StoreError};
