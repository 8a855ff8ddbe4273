//! Final attack rate along sweeps of the behaviour model.
//!
//! Every cell of a sweep reuses the same worlds, seeds and adopter sets
//! replicate by replicate, so differences between cells come from the swept
//! parameter alone. The baseline is the same replicate with no app.

use rayon::prelude::*;
use serde::Serialize;

use super::{ci95, mean_sd};
use crate::config::{InterventionConfig, ScenarioConfig};
use crate::epidemic::{RunResult, Simulation};
use crate::rng::{key, Tag};
use crate::world::{generate_world, SimWorld};
use crate::SimError;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InterventionRow {
    pub p1: f64,
    pub p2: f64,
    pub p3: f64,
    pub adoption: f64,
    pub replicates: usize,
    pub mean_attack_rate: f64,
    pub sd_attack_rate: f64,
    pub ci95_lo: f64,
    pub ci95_hi: f64,
    pub baseline_attack_rate: f64,
    /// Paired difference (cell − baseline), averaged over replicates.
    pub delta_mean: f64,
    pub delta_ci95_lo: f64,
    pub delta_ci95_hi: f64,
    pub mean_r_eff: f64,
    pub baseline_r_eff: f64,
    pub mean_reports: f64,
    pub mean_precautions: f64,
    pub mean_blocked: f64,
    /// Every replicate's daily trajectory equals its baseline's.
    pub identical_to_baseline: bool,
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct Cell {
    p1: f64,
    p2: f64,
    p3: f64,
    adoption: f64,
}

/// Seeds for replicate `r`: (world, run, adoption).
pub fn replicate_seeds(seed: u64, r: usize) -> (u64, u64, u64) {
    (key(seed, Tag::World, r as u64, 3, 0), key(seed, Tag::Sample, r as u64, 3, 0), key(seed, Tag::Adoption, r as u64, 3, 0))
}

/// One run of `base` with the cell's behaviour and adoption applied.
pub fn run_cell(
    world: &SimWorld,
    base: &ScenarioConfig,
    run_seed: u64,
    adoption_seed: u64,
    p: (f64, f64, f64),
    adoption: f64,
) -> Result<RunResult, SimError> {
    let mut cfg = base.clone();
    (cfg.behavior.p1, cfg.behavior.p2, cfg.behavior.p3) = p;
    cfg.adoption.rate = adoption;
    let scores = world.adoption_scores(adoption_seed, cfg.adoption.correlation);
    let adopters = world.adopters(&scores, &cfg.adoption);
    Ok(Simulation::new(world, &cfg, run_seed, &adopters)?.run()?)
}

pub fn exp_intervention_impact(base: &ScenarioConfig, iv: &InterventionConfig) -> Result<Vec<InterventionRow>, SimError> {
    base.validate()?;
    let mut cells = Vec::new();
    for &adoption in &iv.adoption_levels {
        for &p3 in &iv.p3_values {
            for &p2 in &iv.p2_values {
                for &p1 in &iv.p1_values {
                    cells.push(Cell { p1, p2, p3, adoption });
                }
            }
        }
    }
    let worlds: Vec<SimWorld> = (0..iv.replicates)
        .into_par_iter()
        .map(|r| generate_world(&base.population, replicate_seeds(base.seed, r).0))
        .collect::<Result<_, _>>()?;
    let baselines: Vec<RunResult> = (0..iv.replicates)
        .into_par_iter()
        .map(|r| Ok(Simulation::new(&worlds[r], base, replicate_seeds(base.seed, r).1, &[])?.run()?))
        .collect::<Result<_, SimError>>()?;
    let jobs: Vec<(usize, usize)> = (0..cells.len()).flat_map(|c| (0..iv.replicates).map(move |r| (c, r))).collect();
    let results: Vec<RunResult> = jobs
        .par_iter()
        .map(|&(c, r)| {
            let cell = cells[c];
            let (_, run_seed, aseed) = replicate_seeds(base.seed, r);
            run_cell(&worlds[r], base, run_seed, aseed, (cell.p1, cell.p2, cell.p3), cell.adoption)
        })
        .collect::<Result<_, _>>()?;

    let base_attack: Vec<f64> = baselines.iter().map(|b| b.attack_rate).collect();
    let base_r: Vec<f64> = baselines.iter().map(|b| b.r_eff).collect();
    Ok(cells
        .iter()
        .enumerate()
        .map(|(c, cell)| {
            let runs = &results[c * iv.replicates..(c + 1) * iv.replicates];
            let attack: Vec<f64> = runs.iter().map(|x| x.attack_rate).collect();
            let delta: Vec<f64> = attack.iter().zip(&base_attack).map(|(a, b)| a - b).collect();
            let (mean, sd) = mean_sd(&attack);
            let (lo, hi) = ci95(&attack);
            let (dm, _) = mean_sd(&delta);
            let (dlo, dhi) = ci95(&delta);
            let avg = |f: &dyn Fn(&RunResult) -> f64| mean_sd(&runs.iter().map(f).collect::<Vec<_>>()).0;
            InterventionRow {
                p1: cell.p1,
                p2: cell.p2,
                p3: cell.p3,
                adoption: cell.adoption,
                replicates: iv.replicates,
                mean_attack_rate: mean,
                sd_attack_rate: sd,
                ci95_lo: lo,
                ci95_hi: hi,
                baseline_attack_rate: mean_sd(&base_attack).0,
                delta_mean: dm,
                delta_ci95_lo: dlo,
                delta_ci95_hi: dhi,
                mean_r_eff: avg(&|x| x.r_eff),
                baseline_r_eff: mean_sd(&base_r).0,
                mean_reports: avg(&|x| x.stats.reports as f64),
                mean_precautions: avg(&|x| x.stats.precautions as f64),
                mean_blocked: avg(&|x| x.stats.blocked as f64),
                identical_to_baseline: runs.iter().zip(&baselines).all(|(x, b)| x.trajectory == b.trajectory),
            }
        })
        .collect())
}
