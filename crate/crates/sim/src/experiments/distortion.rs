//! Reported versus true network distance.
//!
//! True distances come from the full 14-day contact graph; reported ones
//! from the graph the server can see, which keeps only adopters. Removing
//! nodes can only lengthen paths, so reported ≥ true whenever reported is
//! finite.

use netdist_core::graph::{Adjacency, UNREACHED};
use serde::Serialize;

use super::quantile;
use crate::config::{DistortionConfig, PopulationConfig};
use crate::contacts::long_contact_graph;
use crate::rng::{key, uniform, Tag};
use crate::world::generate_world;
use crate::SimConfigError;

pub const DISTANCE_CAP: u8 = 12;
/// Histogram bins of `reported − true` for pairs finite on both graphs.
pub const HIST_BINS: usize = DISTANCE_CAP as usize;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DistortionRow {
    pub adoption_rate: f64,
    pub adopters: usize,
    pub pairs: usize,
    pub finite_true: usize,
    pub finite_reported: usize,
    /// Pairs whose reported distance is BEYOND.
    pub beyond_fraction: f64,
    pub true_beyond_fraction: f64,
    pub monotonicity_violations: usize,
    pub mean_distortion: f64,
    pub p50: Option<u32>,
    pub p90: Option<u32>,
    pub p99: Option<u32>,
    pub max: Option<u32>,
    #[serde(skip)]
    pub histogram: [u64; HIST_BINS],
}

/// Compares distances between `sources` and their `viewers` on `full` and
/// on `full` restricted to `member`.
pub fn compare(
    full: &Adjacency,
    member: &[bool],
    pairs: &[(u32, Vec<u32>)],
    adoption_rate: f64,
) -> DistortionRow {
    let seen = full.induced(member);
    let mut row = DistortionRow {
        adoption_rate,
        adopters: member.iter().filter(|&&m| m).count(),
        pairs: 0,
        finite_true: 0,
        finite_reported: 0,
        beyond_fraction: 0.0,
        true_beyond_fraction: 0.0,
        monotonicity_violations: 0,
        mean_distortion: 0.0,
        p50: None,
        p90: None,
        p99: None,
        max: None,
        histogram: [0; HIST_BINS],
    };
    let mut distortions = Vec::new();
    for (s, viewers) in pairs {
        let truth = full.bfs(&[*s], DISTANCE_CAP);
        let reported = seen.bfs(&[*s], DISTANCE_CAP);
        for &v in viewers {
            row.pairs += 1;
            let (t, r) = (truth[v as usize], reported[v as usize]);
            if t != UNREACHED {
                row.finite_true += 1;
            }
            if r == UNREACHED {
                continue;
            }
            row.finite_reported += 1;
            if t == UNREACHED || r < t {
                row.monotonicity_violations += 1;
                continue;
            }
            let d = (r - t) as u32;
            row.histogram[(d as usize).min(HIST_BINS - 1)] += 1;
            distortions.push(d);
        }
    }
    if row.pairs > 0 {
        row.beyond_fraction = (row.pairs - row.finite_reported) as f64 / row.pairs as f64;
        row.true_beyond_fraction = (row.pairs - row.finite_true) as f64 / row.pairs as f64;
    }
    distortions.sort_unstable();
    if !distortions.is_empty() {
        row.mean_distortion = distortions.iter().map(|&d| d as f64).sum::<f64>() / distortions.len() as f64;
    }
    row.p50 = quantile(&distortions, 0.5);
    row.p90 = quantile(&distortions, 0.9);
    row.p99 = quantile(&distortions, 0.99);
    row.max = distortions.last().copied();
    row
}

/// Samples `n_cases` adopter sources with `viewers_per_case` other adopters
/// each (with replacement).
fn sample_pairs(member: &[bool], cfg: &DistortionConfig, seed: u64, level: u64) -> Vec<(u32, Vec<u32>)> {
    let adopters: Vec<u32> = (0..member.len() as u32).filter(|&p| member[p as usize]).collect();
    if adopters.len() < 2 {
        return Vec::new();
    }
    let pick = |a: u64, b: u64| adopters[(uniform(seed, Tag::Sample, level, a, b) * adopters.len() as f64) as usize];
    (0..cfg.n_cases as u64)
        .map(|i| {
            let s = pick(i, u64::MAX);
            let mut viewers = Vec::with_capacity(cfg.viewers_per_case);
            let mut j = 0u64;
            while viewers.len() < cfg.viewers_per_case {
                let v = pick(i, j);
                j += 1;
                if v != s {
                    viewers.push(v);
                }
            }
            (s, viewers)
        })
        .collect()
}

pub fn exp_distance_distortion(
    cfg: &DistortionConfig,
    population: &PopulationConfig,
    seed: u64,
) -> Result<Vec<DistortionRow>, SimConfigError> {
    let wseed = key(seed, Tag::World, 0, 2, 0);
    let world = generate_world(population, wseed)?;
    let full = long_contact_graph(&world, population, wseed, 0, 14);
    let scores = world.adoption_scores(key(seed, Tag::Adoption, 0, 2, 0), 0.0);
    Ok(cfg
        .adoption_levels
        .iter()
        .map(|&q| {
            let member: Vec<bool> = scores.iter().map(|&s| s < q).collect();
            let pairs = sample_pairs(&member, cfg, seed, q.to_bits());
            compare(&full, &member, &pairs, q)
        })
        .collect())
}
