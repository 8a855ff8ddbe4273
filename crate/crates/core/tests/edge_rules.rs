//! Edge thresholds against a brute-force duration-summing oracle.
//!
//! Interval endpoints fall on whole minutes, so the oracle can measure a
//! union by counting covered one-minute cells.

use netdist_core::config::IngestConfig;
use netdist_core::ingest::{derive_edges, Window};
use netdist_core::time::{HOUR, MINUTE};
use netdist_core::{Channel, CoPresenceInterval, DeviceId, Timestamp};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use uuid::Uuid;

const T0: Timestamp = 1_600_000_000 - 1_600_000_000 % 60;

fn dev(i: u128) -> DeviceId {
    DeviceId(Uuid::from_u128(i + 1))
}

struct Oracle<'a> {
    cfg: &'a IngestConfig,
    window: Window,
}

impl Oracle<'_> {
    fn clip(&self, iv: &CoPresenceInterval) -> Option<(i64, i64)> {
        (iv.start < self.window.end && iv.end >= self.window.start)
            .then(|| (iv.start.max(self.window.start), iv.end.min(self.window.end)))
            .filter(|(s, e)| s <= e)
    }

    /// Covered seconds, summed minute by minute.
    fn covered(spans: &[(i64, i64)]) -> i64 {
        let (lo, hi) = match (spans.iter().map(|s| s.0).min(), spans.iter().map(|s| s.1).max()) {
            (Some(lo), Some(hi)) => (lo, hi),
            _ => return 0,
        };
        let mut total = 0;
        let mut m = lo;
        while m < hi {
            if spans.iter().any(|&(s, e)| s <= m && m + MINUTE <= e) {
                total += MINUTE;
            }
            m += MINUTE;
        }
        total
    }

    fn last_qualified(&self, ivs: &[CoPresenceInterval], a: DeviceId, b: DeviceId) -> Option<Timestamp> {
        let mine = |iv: &&CoPresenceInterval| (iv.a == a && iv.b == b) || (iv.a == b && iv.b == a);
        let prox: Vec<(i64, i64)> = ivs
            .iter()
            .filter(mine)
            .filter(|iv| iv.channel != Channel::Wifi && iv.min_distance_m.is_none_or(|d| d <= self.cfg.max_distance_m))
            .filter_map(|iv| self.clip(iv))
            .collect();
        let wifi: Vec<(i64, i64)> =
            ivs.iter().filter(mine).filter(|iv| iv.channel == Channel::Wifi).filter_map(|iv| self.clip(iv)).collect();
        let mut last = None;
        if !prox.is_empty() && Self::covered(&prox) >= self.cfg.proximity_min_secs {
            last = prox.iter().map(|s| s.1).max();
        }
        if !wifi.is_empty() && Self::covered(&wifi) >= self.cfg.wifi_min_secs {
            last = last.max(wifi.iter().map(|s| s.1).max());
        }
        last
    }
}

fn random_intervals(rng: &mut ChaCha8Rng, window: Window) -> Vec<CoPresenceInterval> {
    let devices = rng.random_range(2..=3u128);
    let count = rng.random_range(0..8);
    let span_minutes = (window.end - window.start) / MINUTE;
    (0..count)
        .map(|_| {
            let a = rng.random_range(0..devices);
            let mut b = rng.random_range(0..devices - 1);
            if b >= a {
                b += 1;
            }
            let channel = [Channel::Ble, Channel::Ultrasound, Channel::Wifi][rng.random_range(0..3)];
            // Intervals may straddle either window edge.
            let start = window.start + (rng.random_range(-60..span_minutes + 30)) * MINUTE;
            let len = match channel {
                Channel::Wifi => rng.random_range(0..=240),
                _ => rng.random_range(0..=20),
            } * MINUTE;
            let dist = (channel == Channel::Ultrasound).then(|| rng.random_range(0.5..14.0));
            CoPresenceInterval::new(dev(a), dev(b), channel, start, start + len, dist)
        })
        .collect()
}

#[test]
fn derived_edges_match_oracle_on_10k_cases() {
    let cfg = IngestConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut qualified = [0usize; 2];
    for case in 0..10_000 {
        let window = Window::ending_at(T0 + 6 * HOUR, 6 * HOUR);
        let ivs = random_intervals(&mut rng, window);
        let oracle = Oracle { cfg: &cfg, window };
        let got = derive_edges(&ivs, window, &cfg);
        for a in 0..3u128 {
            for b in a + 1..3 {
                let (da, db) = if dev(a) < dev(b) { (dev(a), dev(b)) } else { (dev(b), dev(a)) };
                let edge = got.iter().find(|e| e.a == da && e.b == db).map(|e| e.last_qualified_at);
                let want = oracle.last_qualified(&ivs, da, db);
                assert_eq!(edge, want, "case {case}, pair ({a},{b}): {ivs:?}");
                if want.is_some() {
                    qualified[usize::from(ivs.iter().any(|i| i.channel == Channel::Wifi))] += 1;
                }
            }
        }
    }
    // Both outcomes occur often enough for the comparison to mean something.
    assert!(qualified.iter().sum::<usize>() > 500, "{qualified:?}");
}

#[test]
fn threshold_boundaries() {
    let cfg = IngestConfig::default();
    let window = Window::ending_at(T0 + 10 * HOUR, 14 * 24 * HOUR);
    let (a, b) = (dev(0), dev(1));
    let iv = |ch, s: i64, e: i64, d| CoPresenceInterval::new(a, b, ch, T0 + s, T0 + e, d);
    let qualifies = |ivs: &[CoPresenceInterval]| !derive_edges(ivs, window, &cfg).is_empty();

    assert!(qualifies(&[iv(Channel::Ble, 0, 15 * MINUTE, None)]));
    assert!(!qualifies(&[iv(Channel::Ble, 0, 15 * MINUTE - 1, None)]));
    // Pooled across channels and separate encounters.
    assert!(qualifies(&[
        iv(Channel::Ble, 0, 8 * MINUTE, None),
        iv(Channel::Ultrasound, HOUR, HOUR + 7 * MINUTE, Some(2.0)),
    ]));
    // Overlap counts once.
    assert!(!qualifies(&[iv(Channel::Ble, 0, 10 * MINUTE, None), iv(Channel::Ble, 5 * MINUTE, 14 * MINUTE, None)]));
    // Too far away.
    assert!(!qualifies(&[iv(Channel::Ultrasound, 0, HOUR, Some(10.5))]));
    assert!(qualifies(&[iv(Channel::Ultrasound, 0, HOUR, Some(10.0))]));
    // Wi-Fi needs three hours and does not pool with proximity.
    assert!(qualifies(&[iv(Channel::Wifi, 0, 3 * HOUR, None)]));
    assert!(!qualifies(&[iv(Channel::Wifi, 0, 3 * HOUR - 1, None)]));
    assert!(!qualifies(&[iv(Channel::Wifi, 0, 2 * HOUR, None), iv(Channel::Ble, 3 * HOUR, 3 * HOUR + 14 * MINUTE, None)]));
}

mod arrival_order {
    use netdist_core::config::IngestConfig;
    use netdist_core::{DetectionRecord, Ingestor};
    use proptest::prelude::*;
    use rand::SeedableRng;

    use super::T0;

    /// (reporter, peer, minute, rssi or ultrasound metres)
    type Sample = (usize, usize, i64, Result<i32, f64>);

    fn sample() -> impl Strategy<Value = Sample> {
        (0..4usize, 0..4usize, 0..120i64, prop_oneof![(-90..-50i32).prop_map(Ok), (0.5..15.0f64).prop_map(Err)])
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(300))]
        /// Edges depend on what was observed, not on the order it arrived in.
        #[test]
        fn edges_ignore_arrival_order(samples in prop::collection::vec(sample(), 0..60), rot in 0usize..60) {
            let build = |order: &[Sample]| {
                let mut ing = Ingestor::new(IngestConfig::default());
                let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
                let ids: Vec<_> = (0..4).map(|_| ing.registry_mut().register_device(&mut rng, None)).collect();
                let now = T0 + 3 * 3600;
                for &(r, p, m, obs) in order {
                    let (own, peer) = (format!("tid{r}"), format!("tid{p}"));
                    let ts = T0 + m * 60;
                    let rec = match obs {
                        Ok(rssi) => DetectionRecord::ble(ids[r], &own, &peer, ts, rssi),
                        Err(d) => DetectionRecord::ultrasound(ids[r], &own, &peer, ts, d),
                    };
                    ing.ingest(&rec, now).unwrap();
                }
                ing.edges(now)
            };
            let mut rotated = samples.clone();
            if !rotated.is_empty() {
                let k = rot % rotated.len();
                rotated.rotate_left(k);
            }
            let mut reversed = samples.clone();
            reversed.reverse();
            let base = build(&samples);
            prop_assert_eq!(&base, &build(&rotated));
            prop_assert_eq!(&base, &build(&reversed));
        }
    }
}
