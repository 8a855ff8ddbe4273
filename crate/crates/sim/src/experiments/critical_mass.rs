//! Largest adopter cluster as a function of adoption.
//!
//! The 14-day graph is the person-level graph of long contacts; the
//! pipeline builds the same graph from detections (checked in the
//! integration tests), and building it directly keeps a 30-replicate sweep
//! over a 4000-person campus within seconds.

use rayon::prelude::*;
use serde::Serialize;

use super::mean_sd;
use crate::config::CriticalMassConfig;
use crate::contacts::{degree_stats, long_contact_graph};
use crate::rng::{key, uniform, Tag};
use crate::world::generate_world;
use crate::SimConfigError;

/// Chart depth used for the reachable-user count.
const CHART_DEPTH: u8 = 12;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CriticalMassRow {
    pub adoption_rate: f64,
    pub correlation: f64,
    pub replicates: usize,
    pub mean_adopters: f64,
    pub mean_largest_cluster_fraction: f64,
    pub sd_largest_cluster_fraction: f64,
    /// Other adopters within chart depth of a sampled adopter.
    pub mean_connections_in_chart: f64,
    pub mean_degree: f64,
    pub median_degree: f64,
    pub threshold_3_over_mean_degree: f64,
    pub threshold_3_over_median_degree: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CriticalMassTable {
    pub rows: Vec<CriticalMassRow>,
    /// Per correlation: adoption rate where the mean cluster fraction first
    /// reaches one half, linearly interpolated between sweep points.
    pub knees: Vec<(f64, Option<f64>)>,
}

struct Replicate {
    /// `[correlation][rate] -> (adopters, largest fraction, connections)`
    cells: Vec<Vec<(usize, f64, f64)>>,
    mean_degree: f64,
    median_degree: f64,
}

pub fn exp_critical_mass(cfg: &CriticalMassConfig, seed: u64) -> Result<CriticalMassTable, SimConfigError> {
    cfg.population.validate()?;
    let reps: Vec<Replicate> = (0..cfg.replicates)
        .into_par_iter()
        .map(|r| {
            let wseed = key(seed, Tag::World, r as u64, 1, 0);
            let world = generate_world(&cfg.population, wseed).expect("validated above");
            let g = long_contact_graph(&world, &cfg.population, wseed, 0, 14);
            let (mean_degree, median_degree) = degree_stats(&g);
            let aseed = key(seed, Tag::Adoption, r as u64, 1, 0);
            let cells = cfg
                .correlations
                .iter()
                .map(|&corr| {
                    let scores = world.adoption_scores(aseed, corr);
                    cfg.adoption_sweep
                        .iter()
                        .map(|&q| {
                            let member: Vec<bool> = scores.iter().map(|&s| s < q).collect();
                            let adopters: Vec<u32> =
                                (0..world.size as u32).filter(|&p| member[p as usize]).collect();
                            if adopters.is_empty() {
                                return (0, 0.0, 0.0);
                            }
                            let largest = g.largest_component_among(&member);
                            let induced = g.induced(&member);
                            let samples = cfg.chart_samples.min(adopters.len());
                            let mut reach = 0usize;
                            for i in 0..samples {
                                let u = uniform(seed, Tag::Sample, r as u64, i as u64, q.to_bits());
                                let v = adopters[(u * adopters.len() as f64) as usize];
                                let d = induced.bfs(&[v], CHART_DEPTH);
                                reach += d.iter().filter(|&&x| x != 0 && x <= CHART_DEPTH).count();
                            }
                            let conn = if samples == 0 { 0.0 } else { reach as f64 / samples as f64 };
                            (adopters.len(), largest as f64 / adopters.len() as f64, conn)
                        })
                        .collect()
                })
                .collect();
            Replicate { cells, mean_degree, median_degree }
        })
        .collect();

    let (mean_degree, _) = mean_sd(&reps.iter().map(|r| r.mean_degree).collect::<Vec<_>>());
    let (median_degree, _) = mean_sd(&reps.iter().map(|r| r.median_degree).collect::<Vec<_>>());
    let mut rows = Vec::new();
    let mut knees = Vec::new();
    for (ci, &corr) in cfg.correlations.iter().enumerate() {
        let mut curve = Vec::new();
        for (qi, &q) in cfg.adoption_sweep.iter().enumerate() {
            let cells: Vec<_> = reps.iter().map(|r| r.cells[ci][qi]).collect();
            let (adopters, _) = mean_sd(&cells.iter().map(|c| c.0 as f64).collect::<Vec<_>>());
            let (frac, sd) = mean_sd(&cells.iter().map(|c| c.1).collect::<Vec<_>>());
            let (conn, _) = mean_sd(&cells.iter().map(|c| c.2).collect::<Vec<_>>());
            curve.push((q, frac));
            rows.push(CriticalMassRow {
                adoption_rate: q,
                correlation: corr,
                replicates: cfg.replicates,
                mean_adopters: adopters,
                mean_largest_cluster_fraction: frac,
                sd_largest_cluster_fraction: sd,
                mean_connections_in_chart: conn,
                mean_degree,
                median_degree,
                threshold_3_over_mean_degree: 3.0 / mean_degree,
                threshold_3_over_median_degree: 3.0 / median_degree,
            });
        }
        knees.push((corr, knee(&curve, 0.5)));
    }
    Ok(CriticalMassTable { rows, knees })
}

/// First crossing of `level` along a curve sorted by x.
pub fn knee(curve: &[(f64, f64)], level: f64) -> Option<f64> {
    let mut pts = curve.to_vec();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    pts.windows(2).find(|w| w[0].1 < level && w[1].1 >= level).map(|w| {
        let ((x0, y0), (x1, y1)) = (w[0], w[1]);
        x0 + (level - y0) * (x1 - x0) / (y1 - y0)
    })
}
