//! Core building blocks of the network-distance notification service.
//!
//! The crate is organised around the data path of a single report:
//! detection records are stitched into co-presence intervals ([`ingest`]),
//! intervals become contact edges and an immutable 14-day [`graph`] snapshot,
//! a redeemed one-time token ([`cases`]) yields a case report, and the
//! [`chart`] engine pins that case on every connected viewer's chart at the
//! network distance observed at report time. Wi-Fi co-location goes through
//! the split-trust matcher in [`wifi`].

pub mod cases;
pub mod chart;
pub mod config;
pub mod graph;
pub mod ids;
pub mod ingest;
pub mod time;
pub mod wifi;

pub use cases::{amplification_probability, CaseKind, CaseReport, CaseToken, TokenStore};
pub use chart::{CaseChart, ChartEngine, PinnedSignal};
pub use config::Config;
pub use graph::{Adjacency, ContactGraph, Distance, DistanceHistogram};
pub use ids::{DeviceId, DeviceRegistry};
pub use ingest::{Channel, CoPresenceInterval, ContactEdge, DetectionRecord, Ingestor};
pub use time::Timestamp;
