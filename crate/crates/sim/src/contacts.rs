//! Daily interaction sampling.
//!
//! Household pairs meet every day, each occupation edge is active on a day
//! with the configured probability, and a Poisson number of random pairs
//! meet on top. Every draw is keyed by the day, so a day's contacts do not
//! depend on anything that happened earlier in the run.

use netdist_core::graph::Adjacency;
use rand::Rng;
use rand_distr::{Distribution, Poisson};

use crate::config::PopulationConfig;
use crate::rng::{stream, uniform, Tag};
use crate::world::{PersonId, SimWorld};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Context {
    Household,
    Occupation,
    Random,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DailyContact {
    /// `a < b`.
    pub a: PersonId,
    pub b: PersonId,
    pub context: Context,
    /// Lasted 15 minutes or more.
    pub long: bool,
    /// Distinguishes repeated meetings of one pair on one day; part of the
    /// random-number key of every decision about this contact.
    pub slot: u32,
}

impl DailyContact {
    fn new(x: PersonId, y: PersonId, context: Context, long: bool, slot: u32) -> Self {
        Self { a: x.min(y), b: x.max(y), context, long, slot }
    }

    /// Key identifying this meeting among all meetings of the day.
    pub fn key(&self) -> (u64, u64) {
        ((self.a as u64) << 32 | self.b as u64, (self.context as u64) << 32 | self.slot as u64)
    }
}

pub fn daily_contacts(world: &SimWorld, cfg: &PopulationConfig, seed: u64, day: u32) -> Vec<DailyContact> {
    let mut out = Vec::new();
    for h in &world.households {
        for (i, &x) in h.iter().enumerate() {
            for &y in &h[i + 1..] {
                out.push(DailyContact::new(x, y, Context::Household, true, 0));
            }
        }
    }
    let p = cfg.occupation.daily_activation;
    for (e, &(x, y)) in world.occupation_edges.iter().enumerate() {
        if uniform(seed, Tag::Occupation, e as u64, day as u64, 0) < p {
            out.push(DailyContact::new(x, y, Context::Occupation, true, 0));
        }
    }
    let n = world.size;
    let mean = cfg.random_contacts_per_day * n as f64 / 2.0;
    if mean > 0.0 && n > 1 {
        let mut rng = stream(seed, Tag::Random, day as u64);
        let count = Poisson::new(mean).expect("positive mean").sample(&mut rng) as u32;
        for slot in 0..count {
            let x = rng.random_range(0..n as PersonId);
            let mut y = rng.random_range(0..n as PersonId - 1);
            if y >= x {
                y += 1;
            }
            let long = rng.random_bool(cfg.random_long_fraction);
            out.push(DailyContact::new(x, y, Context::Random, long, slot));
        }
    }
    out
}

/// Person-level graph of pairs with at least one long contact on days
/// `first..first + days`.
pub fn long_contact_graph(world: &SimWorld, cfg: &PopulationConfig, seed: u64, first: u32, days: u32) -> Adjacency {
    let mut edges = Vec::new();
    for day in first..first + days {
        edges.extend(daily_contacts(world, cfg, seed, day).into_iter().filter(|c| c.long).map(|c| (c.a, c.b)));
        edges.sort_unstable();
        edges.dedup();
    }
    Adjacency::from_edges(world.size, edges)
}

/// Mean and median degree.
pub fn degree_stats(adj: &Adjacency) -> (f64, f64) {
    let n = adj.node_count();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mut d: Vec<usize> = (0..n as u32).map(|v| adj.degree(v)).collect();
    d.sort_unstable();
    let mean = d.iter().sum::<usize>() as f64 / n as f64;
    let median = if n % 2 == 1 { d[n / 2] as f64 } else { (d[n / 2 - 1] + d[n / 2]) as f64 / 2.0 };
    (mean, median)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::generate_world;
    use std::collections::HashMap;

    #[test]
    fn household_daily_and_occupation_half() {
        let cfg = PopulationConfig::default();
        let w = generate_world(&cfg, 1).unwrap();
        let days = 200;
        let mut occ: HashMap<(u32, u32), u32> = HashMap::new();
        let mut hh: HashMap<(u32, u32), u32> = HashMap::new();
        for day in 0..days {
            for c in daily_contacts(&w, &cfg, 7, day) {
                match c.context {
                    Context::Household => *hh.entry((c.a, c.b)).or_default() += 1,
                    Context::Occupation => *occ.entry((c.a, c.b)).or_default() += 1,
                    Context::Random => {}
                }
            }
        }
        let pairs: usize = w.households.iter().map(|h| h.len() * (h.len() - 1) / 2).sum();
        assert_eq!(hh.len(), pairs);
        assert!(hh.values().all(|&c| c == days));
        let total: u32 = occ.values().sum();
        let trials = (w.occupation_edges.len() as u32 * days) as f64;
        let rate = total as f64 / trials;
        // binomial standard error
        let se = (0.25 / trials).sqrt();
        assert!((rate - 0.5).abs() < 4.0 * se, "rate {rate}");
    }

    #[test]
    fn random_contact_rate() {
        let cfg = PopulationConfig::default();
        let w = generate_world(&cfg, 1).unwrap();
        let days = 100;
        let n: usize = (0..days)
            .map(|d| daily_contacts(&w, &cfg, 3, d).iter().filter(|c| c.context == Context::Random).count())
            .sum();
        let per_person = 2.0 * n as f64 / (days as f64 * w.size as f64);
        assert!((per_person - cfg.random_contacts_per_day).abs() < 0.05, "{per_person}");
    }

    #[test]
    fn days_are_independent_of_order() {
        let cfg = PopulationConfig::default();
        let w = generate_world(&cfg, 1).unwrap();
        let late = daily_contacts(&w, &cfg, 5, 9);
        let _ = daily_contacts(&w, &cfg, 5, 3);
        assert_eq!(late, daily_contacts(&w, &cfg, 5, 9));
    }

    #[test]
    fn campus_degree_near_thirty() {
        let cfg = PopulationConfig::campus();
        let w = generate_world(&cfg, 2).unwrap();
        let g = long_contact_graph(&w, &cfg, 2, 0, 14);
        let (mean, median) = degree_stats(&g);
        assert!((26.0..34.0).contains(&mean), "mean {mean}");
        assert!((24.0..34.0).contains(&median), "median {median}");
    }
}
