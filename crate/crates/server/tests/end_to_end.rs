mod common;

use chrono::Duration;
use common::*;
use netdist_core::time::{date_of, DAY};
use netdist_core::{CaseKind, Distance};
use netdist_server::workload::AUTHORITY_SECRET;
use netdist_server::Clock;

#[test]
fn path_scenario_charts() {
    let (server, clock, v) = path_server(6);
    let tokens = server.issue_tokens(AUTHORITY_SECRET, CaseKind::Positive, 1).unwrap();
    let now = clock.now();
    let r = server.redeem(v[0], Some(&tokens[0].token), Some(date_of(now))).unwrap();
    assert_eq!(r.signals.len(), 5);
    for (k, d) in v.iter().enumerate().skip(1) {
        let c = server.chart(d).unwrap();
        let mut expected = vec![0u32; 12];
        expected[k - 1] = 1;
        assert_eq!(c.positive, expected, "device {k}");
        assert_eq!(c.contact, vec![0; 12]);
    }
    assert!(server.chart(&v[0]).unwrap().is_empty());
}

#[test]
fn snapshot_and_network_chart() {
    let (server, clock, v) = path_server(6);
    let g = server.snapshot(clock.now());
    assert_eq!(g.edges().len(), 5);
    assert_eq!(g.distance(&v[0], &v[5]).unwrap(), Distance::Hops(5));
    let h = server.network_chart(&v[0]).unwrap();
    assert_eq!(h.counts, vec![1, 1, 1, 1, 1, 0, 0, 0, 0, 0, 0, 0]);
    // 15 days later the window no longer holds the edges.
    let later = server.snapshot(clock.now() + 15 * DAY);
    assert!(later.edges().is_empty());
}

#[test]
fn post_report_detections_do_not_add_signals() {
    let (server, clock, v) = path_server(6);
    let t = server.issue_tokens(AUTHORITY_SECRET, CaseKind::Positive, 1).unwrap();
    server.redeem(v[5], Some(&t[0].token), Some(date_of(clock.now()))).unwrap();
    let before = server.chart(&v[0]).unwrap();
    // v0 now meets v5 directly; the pinned distance stays at 5.
    clock.set(clock.now() + 3600);
    for r in qualifying_pair(v[0], v[5], clock.now() - 1800) {
        server.ingest(&r).unwrap();
    }
    assert_eq!(server.chart(&v[0]).unwrap().positive, before.positive);
    assert_eq!(before.positive[4], 1);
}

#[test]
fn contact_overlay_and_fade() {
    let (server, clock, v) = path_server(4);
    let now = clock.now();
    let p = server.issue_tokens(AUTHORITY_SECRET, CaseKind::Positive, 1).unwrap();
    let c = server.issue_tokens(AUTHORITY_SECRET, CaseKind::Contact, 1).unwrap();
    let sym = date_of(now) - Duration::days(2);
    server.redeem(v[0], Some(&p[0].token), Some(sym)).unwrap();
    server.redeem(v[2], Some(&c[0].token), None).unwrap();
    let chart = server.chart(&v[1]).unwrap();
    assert_eq!(chart.positive[0], 1);
    assert_eq!(chart.contact[0], 1);
    // positive fades 10 days after symptom start, contact 10 days after report
    let positive_end = now - 2 * DAY;
    let positive_end = positive_end - positive_end.rem_euclid(DAY) + 10 * DAY;
    assert_eq!(server.chart_at(&v[1], positive_end - 1).unwrap().positive[0], 1);
    assert_eq!(server.chart_at(&v[1], positive_end).unwrap().positive[0], 0);
    assert_eq!(server.chart_at(&v[1], now + 10 * DAY - 1).unwrap().contact[0], 1);
    assert_eq!(server.chart_at(&v[1], now + 10 * DAY).unwrap().contact[0], 0);
}

#[test]
fn empty_server_charts_are_empty() {
    let (server, _clock, v) = path_server(1);
    assert!(server.chart(&v[0]).unwrap().is_empty());
    assert_eq!(server.network_chart(&v[0]).unwrap().counts, vec![0; 12]);
}
