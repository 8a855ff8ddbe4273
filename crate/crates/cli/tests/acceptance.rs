//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
//! fails. Every check runs against the default configuration unless the
//! criterion names its own parameters.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use chrono::Days;
use netdist_core::config::{IngestConfig, WifiMode};
use netdist_core::graph::{Adjacency, UNREACHED};
use netdist_core::ingest::{derive_edges, Window};
use netdist_core::time::{date_of, date_start, DAY, HOUR, MINUTE};
use netdist_core::{
    amplification_probability, CaseChart, CaseKind, Channel, CoPresenceInterval, DetectionRecord, DeviceId, Timestamp,
};
use netdist_server::workload::{
    generate, privacy_audit, restart_point, workload_config, Harness, Op, WorkloadSpec, AUTHORITY, AUTHORITY_SECRET,
};
use netdist_server::{ManualClock, SignalServer};
use netdist_sim::config::{AttackConfig, CriticalMassConfig, DistortionConfig, InterventionConfig};
use netdist_sim::experiments::{
    exp_copresence_attack, exp_critical_mass, exp_distance_distortion, exp_intervention_impact, Verdict,
};
use netdist_sim::ScenarioConfig;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use uuid::Uuid;

type Check = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

const T0: Timestamp = 1_600_041_600; // 2020-09-14T00:00:00Z

// ---------------------------------------------------------------------------
// 1. Truncated BFS against Floyd–Warshall.

const CAP: u8 = 12;

fn floyd_warshall(n: usize, edges: &[(u32, u32)]) -> Vec<Vec<u32>> {
    const INF: u32 = u32::MAX / 2;
    let mut d = vec![vec![INF; n]; n];
    for (i, row) in d.iter_mut().enumerate() {
        row[i] = 0;
    }
    for &(u, v) in edges {
        d[u as usize][v as usize] = 1;
        d[v as usize][u as usize] = 1;
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                d[i][j] = d[i][j].min(d[i][k] + d[k][j]);
            }
        }
    }
    d
}

fn distance_oracle() -> Check {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut compared = 0usize;
    for g in 0..100 {
        let n = rng.random_range(1..=200usize);
        let mean_degree = [0.5, 1.0, 1.5, 2.0, 3.0, 6.0, 20.0][g % 7];
        let p = (mean_degree / n as f64).min(1.0);
        let mut edges = Vec::new();
        for u in 0..n as u32 {
            for v in u + 1..n as u32 {
                if rng.random_bool(p) {
                    edges.push((u, v));
                }
            }
        }
        let adj = Adjacency::from_edges(n, edges.iter().copied());
        let truth = floyd_warshall(n, &edges);
        for s in 0..n {
            let got = adj.bfs(&[s as u32], CAP);
            for t in 0..n {
                let want = if truth[s][t] <= CAP as u32 { truth[s][t] as u8 } else { UNREACHED };
                ensure(got[t] == want, || format!("graph {g}, {s}->{t}: bfs {} vs oracle {}", got[t], truth[s][t]))?;
                compared += 1;
            }
        }
    }
    let elapsed = started.elapsed();
    ensure(elapsed < Duration::from_secs(10), || format!("took {elapsed:?}"))?;
    Ok(format!("{compared} pairs on 100 graphs identical, {:.2} s", elapsed.as_secs_f64()))
}

// ---------------------------------------------------------------------------
// 2. Token amplification.

fn token_amplification() -> Check {
    let p = amplification_probability(11, 0.2);
    let closed = 1.0 - 0.8f64.powi(11);
    ensure((p - closed).abs() <= 1e-6, || format!("{p} vs {closed}"))?;
    ensure(p > 0.9, || format!("{p} is not above 0.90"))?;
    let trials = 1_000_000u32;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let hits = (0..trials).filter(|_| (0..11).any(|_| rng.random_bool(0.2))).count();
    let est = hits as f64 / trials as f64;
    let se = (p * (1.0 - p) / trials as f64).sqrt();
    ensure((est - p).abs() <= 3.0 * se, || format!("monte carlo {est} vs {p} (se {se})"))?;
    Ok(format!("P = {p:.6}, monte carlo {est:.6} ({:.2} se)", (est - p).abs() / se))
}

// ---------------------------------------------------------------------------
// 3. Chart lifecycle on a six-device path.

fn meet(server: &SignalServer, a: DeviceId, b: DeviceId, t: Timestamp) {
    let (ta, tb) = (format!("tmp-{a}"), format!("tmp-{b}"));
    for k in 0..4 {
        let ts = t + k * 5 * MINUTE;
        server.ingest(&DetectionRecord::ble(a, &ta, &tb, ts, -60)).unwrap();
        server.ingest(&DetectionRecord::ble(b, &tb, &ta, ts, -60)).unwrap();
    }
}

fn chart_lifecycle() -> Check {
    let clock = Arc::new(ManualClock::new(T0));
    let server = SignalServer::in_memory(workload_config(WifiMode::TempId), clock.clone(), Some(3));
    let auth = netdist_core::ids::AuthorityId(AUTHORITY.into());
    let v: Vec<DeviceId> = (0..6).map(|_| server.register_device(Some(auth.clone())).unwrap()).collect();
    clock.set(T0 + 10 * HOUR);
    for w in v.windows(2) {
        meet(&server, w[0], w[1], T0 + 9 * HOUR);
    }
    // Symptoms started the day before the meetings; the report comes a day
    // after them.
    let symptom = date_of(T0).checked_sub_days(Days::new(1)).unwrap();
    let report_at = T0 + DAY + 17 * HOUR;
    clock.set(report_at);
    let token = server.issue_tokens(AUTHORITY_SECRET, CaseKind::Positive, 1).unwrap().remove(0);
    server.redeem(v[0], Some(&token.token), Some(symptom)).unwrap();
    let expires = date_start(symptom) + 10 * DAY;

    // Later contact that would shorten every path if distances were live.
    clock.set(report_at + 2 * HOUR);
    for &d in &v[2..] {
        meet(&server, v[0], d, report_at + HOUR);
    }

    let expect = |k: usize, visible: bool| {
        let mut positive = vec![0u32; CAP as usize];
        if visible {
            positive[k - 1] = 1;
        }
        positive
    };
    let mut frames = 0;
    let mut t = report_at;
    while t < expires {
        for (k, d) in v.iter().enumerate().skip(1) {
            let c: CaseChart = server.chart_at(d, t).unwrap();
            ensure(c.positive == expect(k, true), || format!("device {k} at t={t}: {:?}", c.positive))?;
        }
        frames += 1;
        t += HOUR;
    }
    for probe in [expires - 1, expires, expires + 1, expires + 30 * DAY] {
        for (k, d) in v.iter().enumerate().skip(1) {
            let c = server.chart_at(d, probe).unwrap();
            let visible = probe < expires;
            ensure(c.positive == expect(k, visible), || format!("device {k} at {probe}: {:?}", c.positive))?;
        }
    }
    ensure(server.chart_at(&v[0], report_at).unwrap().is_empty(), || "reporter sees own case".into())?;
    Ok(format!("columns 1..5 fixed over {frames} hourly frames, gone at symptom day + 10 d to the second"))
}

// ---------------------------------------------------------------------------
// 4. Edge thresholds against a minute-summing oracle.

fn dev(i: u128) -> DeviceId {
    DeviceId(Uuid::from_u128(i + 1))
}

fn covered(spans: &[(i64, i64)]) -> i64 {
    let (Some(lo), Some(hi)) = (spans.iter().map(|s| s.0).min(), spans.iter().map(|s| s.1).max()) else {
        return 0;
    };
    (0..(hi - lo) / MINUTE)
        .map(|m| lo + m * MINUTE)
        .filter(|&m| spans.iter().any(|&(s, e)| s <= m && m + MINUTE <= e))
        .count() as i64
        * MINUTE
}

fn oracle_last_qualified(
    cfg: &IngestConfig,
    w: Window,
    ivs: &[CoPresenceInterval],
    a: DeviceId,
    b: DeviceId,
) -> Option<Timestamp> {
    let clip = |iv: &CoPresenceInterval| {
        (iv.start < w.end && iv.end >= w.start)
            .then(|| (iv.start.max(w.start), iv.end.min(w.end)))
            .filter(|(s, e)| s <= e)
    };
    let pair = |iv: &&CoPresenceInterval| (iv.a == a && iv.b == b) || (iv.a == b && iv.b == a);
    let near = |iv: &&CoPresenceInterval| iv.min_distance_m.is_none_or(|d| d <= cfg.max_distance_m);
    let prox: Vec<_> =
        ivs.iter().filter(pair).filter(|iv| iv.channel != Channel::Wifi).filter(near).filter_map(clip).collect();
    let wifi: Vec<_> = ivs.iter().filter(pair).filter(|iv| iv.channel == Channel::Wifi).filter_map(clip).collect();
    let mut last = None;
    if !prox.is_empty() && covered(&prox) >= cfg.proximity_min_secs {
        last = prox.iter().map(|s| s.1).max();
    }
    if !wifi.is_empty() && covered(&wifi) >= cfg.wifi_min_secs {
        last = last.max(wifi.iter().map(|s| s.1).max());
    }
    last
}

fn edge_thresholds() -> Check {
    ensure(IngestConfig::default().proximity_min_secs == 15 * MINUTE, || "proximity threshold".into())?;
    ensure(IngestConfig::default().wifi_min_secs == 3 * HOUR, || "wifi threshold".into())?;
    ensure(IngestConfig::default().max_distance_m == 10.0, || "distance threshold".into())?;
    let cfg = IngestConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let window = Window::ending_at(T0 + 6 * HOUR, 6 * HOUR);
    let span = (window.end - window.start) / MINUTE;
    let mut qualified = 0;
    for case in 0..10_000 {
        let ivs: Vec<CoPresenceInterval> = (0..rng.random_range(0..8))
            .map(|_| {
                let a = rng.random_range(0..3u128);
                let b = (a + rng.random_range(1..3u128)) % 3;
                let channel = [Channel::Ble, Channel::Ultrasound, Channel::Wifi][rng.random_range(0..3)];
                let start = window.start + rng.random_range(-60..span + 30) * MINUTE;
                let len = if channel == Channel::Wifi { rng.random_range(0..=240) } else { rng.random_range(0..=20) };
                let dist = (channel == Channel::Ultrasound).then(|| rng.random_range(0.5..14.0));
                CoPresenceInterval::new(dev(a), dev(b), channel, start, start + len * MINUTE, dist)
            })
            .collect();
        let got = derive_edges(&ivs, window, &cfg);
        for a in 0..3 {
            for b in a + 1..3 {
                let (x, y) = (dev(a).min(dev(b)), dev(a).max(dev(b)));
                let edge = got.iter().find(|e| e.a == x && e.b == y).map(|e| e.last_qualified_at);
                let want = oracle_last_qualified(&cfg, window, &ivs, x, y);
                ensure(edge == want, || format!("case {case}: {edge:?} vs {want:?} for {ivs:?}"))?;
                qualified += usize::from(want.is_some());
            }
        }
    }
    Ok(format!("10000 cases, 0 mismatches, {qualified} qualifying pairs"))
}

// ---------------------------------------------------------------------------
// 5. Critical-mass knee.

fn critical_mass() -> Check {
    let started = Instant::now();
    let cfg = CriticalMassConfig::default();
    ensure(cfg.replicates == 30, || format!("{} replicates", cfg.replicates))?;
    let table = exp_critical_mass(&cfg, ScenarioConfig::default().seed).map_err(|e| e.to_string())?;
    let elapsed = started.elapsed();
    let at = |q: f64| {
        table.rows.iter().find(|r| r.adoption_rate == q && r.correlation == 0.0).map(|r| r.mean_largest_cluster_fraction)
    };
    let (lo, hi) = (at(0.05).ok_or("0.05 not swept")?, at(0.15).ok_or("0.15 not swept")?);
    let d = table.rows[0].mean_degree;
    let knee = table.knees[0].1.ok_or("curve never reaches one half")?;
    ensure((27.0..=33.0).contains(&d), || format!("mean degree {d:.1}"))?;
    ensure(lo < 0.2, || format!("fraction {lo:.3} at 5%"))?;
    ensure(hi > 0.6, || format!("fraction {hi:.3} at 15%"))?;
    ensure((0.05..=0.15).contains(&knee), || format!("knee {knee:.3}"))?;
    ensure((0.05..=0.15).contains(&(3.0 / d)), || format!("3/d = {:.3}", 3.0 / d))?;
    ensure(elapsed < Duration::from_secs(300), || format!("took {elapsed:?}"))?;
    Ok(format!(
        "d = {d:.1} (3/d = {:.3}), fraction {lo:.3} at 5% and {hi:.3} at 15%, knee {knee:.3}, {:.1} s",
        3.0 / d,
        elapsed.as_secs_f64()
    ))
}

// ---------------------------------------------------------------------------
// 6. Distance distortion.

fn distortion() -> Check {
    let cfg = DistortionConfig { adoption_levels: vec![0.25, 0.5, 0.75], ..DistortionConfig::default() };
    let s = ScenarioConfig::default();
    let rows = exp_distance_distortion(&cfg, &s.population, s.seed).map_err(|e| e.to_string())?;
    for r in &rows {
        ensure(r.pairs >= 10_000, || format!("{} pairs at {}", r.pairs, r.adoption_rate))?;
        ensure(r.finite_reported > 0, || format!("no finite pairs at {}", r.adoption_rate))?;
        ensure(r.monotonicity_violations == 0, || {
            format!("{} violations at {}", r.monotonicity_violations, r.adoption_rate)
        })?;
    }
    for w in rows.windows(2) {
        ensure(w[1].beyond_fraction <= w[0].beyond_fraction, || {
            format!("BEYOND rose from {} to {}", w[0].beyond_fraction, w[1].beyond_fraction)
        })?;
    }
    let fr: Vec<String> = rows.iter().map(|r| format!("{:.4}", r.beyond_fraction)).collect();
    Ok(format!("0 violations over {} pairs; BEYOND fraction {}", rows.iter().map(|r| r.pairs).sum::<usize>(), fr.join(" ≥ ")))
}

// ---------------------------------------------------------------------------
// 7. Intervention directionality.

fn intervention() -> Check {
    let iv = InterventionConfig::default();
    ensure(
        iv.p1_values == [0.0, 0.25, 0.5, 0.75, 1.0] && iv.p2_values == [0.5] && iv.adoption_levels == [0.4] && iv.replicates == 30,
        || format!("unexpected sweep {iv:?}"),
    )?;
    let rows = exp_intervention_impact(&ScenarioConfig::default(), &iv).map_err(|e| e.to_string())?;
    ensure(rows[0].p1 == 0.0 && rows[0].identical_to_baseline, || "p1 = 0 differs from the baseline".into())?;
    for w in rows.windows(2) {
        ensure(w[1].mean_attack_rate <= w[0].mean_attack_rate, || {
            format!("attack rate rose from {} (p1 {}) to {} (p1 {})", w[0].mean_attack_rate, w[0].p1, w[1].mean_attack_rate, w[1].p1)
        })?;
    }
    let means: Vec<String> = rows.iter().map(|r| format!("{:.4}", r.mean_attack_rate)).collect();
    Ok(format!("baseline {:.4}; mean attack rate {}; p1 = 0 bit-identical", rows[0].baseline_attack_rate, means.join(" ≥ ")))
}

// ---------------------------------------------------------------------------
// 8. Privacy audits.

fn privacy() -> Check {
    let mut details = Vec::new();
    for mode in [WifiMode::TempId, WifiMode::PairReport] {
        let cfg = workload_config(mode);
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let clock = Arc::new(ManualClock::new(0));
        let server = SignalServer::open(cfg.clone(), dir.path(), clock.clone()).map_err(|e| e.to_string())?;
        let mut h = Harness::new(cfg, server, clock, 8);
        h.run(&generate(&WorkloadSpec { seed: 8, events: 10_000, mode, ..WorkloadSpec::default() }));
        ensure(!h.hashed_bssids.is_empty() && !h.server.reports().is_empty(), || {
            format!("{mode:?}: workload produced no Wi-Fi data or no reports")
        })?;
        let violations = privacy_audit(&h, dir.path());
        ensure(violations.is_empty(), || format!("{mode:?}: {violations:?}"))?;
        details.push(format!("{mode:?}: {} reports, {} BSSIDs", h.server.reports().len(), h.hashed_bssids.len()));
    }
    Ok(format!("0 violations after 10000-event workloads ({})", details.join("; ")))
}

// ---------------------------------------------------------------------------
// 9. Co-presence attack.

fn attack() -> Check {
    let s = ScenarioConfig::default();
    let rows = exp_copresence_attack(s.seed, s.start, AttackConfig::default().background).map_err(|e| e.to_string())?;
    let verdicts: Vec<Verdict> = rows.iter().map(|r| r.verdict).collect();
    ensure(verdicts == [Verdict::TrueNegative, Verdict::TruePositive, Verdict::FalsePositive], || format!("{rows:?}"))?;
    ensure(rows.iter().all(|r| r.verdict == r.expected), || format!("{rows:?}"))?;
    let desc: Vec<String> = rows.iter().map(|r| format!("{} -> {:?}", r.scenario, r.verdict)).collect();
    Ok(desc.join(", "))
}

// ---------------------------------------------------------------------------
// 10. Restart and replay determinism.

fn replay_determinism() -> Check {
    let mut details = Vec::new();
    for mode in [WifiMode::TempId, WifiMode::PairReport] {
        let cfg = workload_config(mode);
        let ops = generate(&WorkloadSpec { seed: 10, events: 5000, mode, ..WorkloadSpec::default() });
        let set_times: Vec<Timestamp> = ops.iter().filter_map(|o| if let Op::SetTime(t) = o { Some(*t) } else { None }).collect();
        let (first, last) = (set_times[0], *set_times.last().unwrap());
        let times: Vec<Timestamp> = (0..).map(|k| first + k * DAY / 2).take_while(|&t| t <= last + 12 * DAY).collect();

        let clock = Arc::new(ManualClock::new(0));
        let mut reference = Harness::new(cfg.clone(), SignalServer::recording(cfg.clone(), clock.clone(), Some(1)), clock, 5);
        reference.run(&ops);
        let expected = reference.charts(&times);
        ensure(expected.iter().flatten().any(|c| !c.is_empty()), || "all charts empty".into())?;

        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let clock = Arc::new(ManualClock::new(0));
        let server = SignalServer::open(cfg.clone(), dir.path(), clock.clone()).map_err(|e| e.to_string())?;
        let mut h = Harness::new(cfg.clone(), server, clock, 5);
        let cut = restart_point(&ops, ops.len() / 2);
        h.run(&ops[..cut]);
        h.restart(dir.path()).map_err(|e| e.to_string())?;
        h.run(&ops[cut..]);
        ensure(h.charts(&times) == expected, || format!("{mode:?}: restarted charts differ"))?;

        let replayed = SignalServer::open(cfg, dir.path(), Arc::new(ManualClock::new(0))).map_err(|e| e.to_string())?;
        for (d, row) in h.devices.iter().zip(&expected) {
            let got: Vec<CaseChart> = times.iter().map(|&t| replayed.chart_at(d, t).unwrap()).collect();
            ensure(&got == row, || format!("{mode:?}: replayed chart differs for {d}"))?;
        }
        details.push(format!("{mode:?}: {} devices x {} times", h.devices.len(), times.len()));
    }
    Ok(format!("restart and replay identical ({})", details.join("; ")))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Check); 10] = [
        ("distance engine matches all-pairs oracle", distance_oracle),
        ("token amplification", token_amplification),
        ("chart lifecycle", chart_lifecycle),
        ("edge thresholds", edge_thresholds),
        ("critical-mass knee", critical_mass),
        ("distortion monotonicity", distortion),
        ("intervention directionality", intervention),
        ("privacy audits", privacy),
        ("co-presence attack", attack),
        ("replay determinism", replay_determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let started = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {:>2} {name}: {detail} [{secs:.1} s]", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {why} [{secs:.1} s]", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
