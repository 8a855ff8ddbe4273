#![allow(dead_code)]

use std::sync::Arc;

use netdist_core::time::{DAY, MINUTE};
use netdist_core::{DetectionRecord, DeviceId, Timestamp};
use netdist_server::workload::{workload_config, AUTHORITY};
use netdist_server::{ManualClock, SignalServer};


pub const T0: Timestamp = 1_600_041_600; // 2020-09-14T00:00:00Z

/// BLE records from both sides covering 15 minutes starting at `t`.
pub fn qualifying_pair(a: DeviceId, b: DeviceId, t: Timestamp) -> Vec<DetectionRecord> {
    let (ta, tb) = (format!("tmp-{a}"), format!("tmp-{b}"));
    let mut out = Vec::new();
    for k in 0..4 {
        let ts = t + k * 5 * MINUTE;
        out.push(DetectionRecord::ble(a, &ta, &tb, ts, -60));
        out.push(DetectionRecord::ble(b, &tb, &ta, ts, -60));
    }
    out
}

pub fn path_server(n: usize) -> (SignalServer, Arc<ManualClock>, Vec<DeviceId>) {
    let clock = Arc::new(ManualClock::new(T0));
    let server = SignalServer::recording(
        workload_config(netdist_core::config::WifiMode::TempId),
        clock.clone(),
        Some(7),
    );
    let auth = netdist_core::ids::AuthorityId(AUTHORITY.into());
    let devices: Vec<DeviceId> = (0..n).map(|_| server.register_device(Some(auth.clone())).unwrap()).collect();
    clock.set(T0 + 10 * 3600);
    for w in devices.windows(2) {
        for r in qualifying_pair(w[0], w[1], T0 + 9 * 3600) {
            server.ingest(&r).unwrap();
        }
    }
    clock.set(T0 + DAY);
    (server, clock, devices)
}
