//! Synthetic populations: households, Watts-Strogatz occupation networks,
//! and per-person adoption.

use std::collections::HashSet;

use netdist_core::graph::Adjacency;
use rand::seq::SliceRandom;
use rand::Rng;
use rand::distr::weighted::WeightedIndex;
use rand_distr::Distribution;

use crate::config::{AdoptionConfig, PopulationConfig, SimConfigError};
use crate::rng::{stream, uniform, Tag};

pub type PersonId = u32;

/// One occupation network: members (by person id) and its edges in member
/// indices.
#[derive(Clone, Debug, PartialEq)]
pub struct OccupationNet {
    pub members: Vec<PersonId>,
    pub edges: Vec<(u32, u32)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimWorld {
    pub size: usize,
    pub households: Vec<Vec<PersonId>>,
    pub household_of: Vec<u32>,
    pub occupation_nets: Vec<OccupationNet>,
    /// Occupation edges in person ids, each listed once with `a < b`.
    pub occupation_edges: Vec<(PersonId, PersonId)>,
    pub rng_seed: u64,
}

/// Watts-Strogatz small-world graph on `n` nodes: a ring lattice joining
/// each node to its `k / 2` nearest neighbours on either side, with each
/// lattice edge's far end rewired with probability `beta` to a uniformly
/// chosen node that is neither the near end nor already adjacent to it.
pub fn watts_strogatz<R: Rng>(n: usize, k: usize, beta: f64, rng: &mut R) -> Vec<(u32, u32)> {
    assert!(k.is_multiple_of(2) && k < n, "need even k < n");
    let mut adj: Vec<HashSet<u32>> = vec![HashSet::new(); n];
    let mut edges: Vec<(u32, u32)> = Vec::with_capacity(n * k / 2);
    for j in 1..=k / 2 {
        for i in 0..n {
            let (a, b) = (i as u32, ((i + j) % n) as u32);
            adj[a as usize].insert(b);
            adj[b as usize].insert(a);
            edges.push((a, b));
        }
    }
    for e in edges.iter_mut() {
        if !rng.random_bool(beta) {
            continue;
        }
        let (a, b) = *e;
        if adj[a as usize].len() >= n - 1 {
            continue;
        }
        let c = loop {
            let c = rng.random_range(0..n as u32);
            if c != a && !adj[a as usize].contains(&c) {
                break c;
            }
        };
        adj[a as usize].remove(&b);
        adj[b as usize].remove(&a);
        adj[a as usize].insert(c);
        adj[c as usize].insert(a);
        *e = (a, c);
    }
    edges
}

/// Mean local clustering coefficient; nodes of degree < 2 count as 0.
pub fn clustering_coefficient(adj: &Adjacency) -> f64 {
    let n = adj.node_count();
    if n == 0 {
        return 0.0;
    }
    let mut total = 0.0;
    for v in 0..n as u32 {
        let nb = adj.neighbors(v);
        let k = nb.len();
        if k < 2 {
            continue;
        }
        let mut links = 0usize;
        for (i, &x) in nb.iter().enumerate() {
            for &y in &nb[i + 1..] {
                if adj.neighbors(x).binary_search(&y).is_ok() {
                    links += 1;
                }
            }
        }
        total += 2.0 * links as f64 / (k * (k - 1)) as f64;
    }
    total / n as f64
}

pub fn generate_world(cfg: &PopulationConfig, seed: u64) -> Result<SimWorld, SimConfigError> {
    cfg.validate()?;
    let mut rng = stream(seed, Tag::World, 0);
    let n = cfg.size;

    let sizes = WeightedIndex::new(&cfg.household_size_weights)
        .map_err(|e| SimConfigError::Infeasible(format!("household_size_weights: {e}")))?;
    let mut households = Vec::new();
    let mut household_of = vec![0u32; n];
    let mut next = 0usize;
    while next < n {
        let size = (sizes.sample(&mut rng) + 1).min(n - next);
        let members: Vec<PersonId> = (next..next + size).map(|p| p as PersonId).collect();
        for &p in &members {
            household_of[p as usize] = households.len() as u32;
        }
        households.push(members);
        next += size;
    }

    let o = &cfg.occupation;
    let mut occupation_nets = Vec::new();
    let mut occupation_edges = Vec::new();
    if o.coverage > 0.0 {
        let mut people: Vec<PersonId> = (0..n as PersonId).collect();
        people.shuffle(&mut rng);
        people.truncate((o.coverage * n as f64).round() as usize);
        let mut groups: Vec<Vec<PersonId>> = people.chunks(o.network_size).map(<[PersonId]>::to_vec).collect();
        // A short tail group that cannot host the lattice joins its neighbour.
        if groups.len() > 1 && groups.last().is_some_and(|g| g.len() <= o.k) {
            let tail = groups.pop().expect("non-empty");
            groups.last_mut().expect("non-empty").extend(tail);
        }
        for members in groups {
            if members.len() <= o.k {
                continue;
            }
            let edges = watts_strogatz(members.len(), o.k, o.rewire, &mut rng);
            for &(a, b) in &edges {
                let (pa, pb) = (members[a as usize], members[b as usize]);
                occupation_edges.push((pa.min(pb), pa.max(pb)));
            }
            occupation_nets.push(OccupationNet { members, edges });
        }
    }
    occupation_edges.sort_unstable();
    occupation_edges.dedup();

    Ok(SimWorld { size: n, households, household_of, occupation_nets, occupation_edges, rng_seed: seed })
}

impl SimWorld {
    /// Household and occupation neighbours of every person.
    pub fn recurring_neighbors(&self) -> Vec<Vec<PersonId>> {
        let mut nb: Vec<Vec<PersonId>> = vec![Vec::new(); self.size];
        for h in &self.households {
            for &a in h {
                nb[a as usize].extend(h.iter().copied().filter(|&b| b != a));
            }
        }
        for &(a, b) in &self.occupation_edges {
            nb[a as usize].push(b);
            nb[b as usize].push(a);
        }
        for v in &mut nb {
            v.sort_unstable();
            v.dedup();
        }
        nb
    }

    /// Per-person adoption draw in [0, 1); a person adopts at rate `q` iff
    /// their score is below `q`, so adopter sets are nested across rates.
    /// Correlation mixes in a score shared by the household.
    pub fn adoption_scores(&self, adoption_seed: u64, correlation: f64) -> Vec<f64> {
        (0..self.size)
            .map(|p| {
                let h = self.household_of[p] as u64;
                let use_household = uniform(adoption_seed, Tag::Adoption, p as u64, 1, 0) < correlation;
                if use_household {
                    uniform(adoption_seed, Tag::Adoption, h, 2, 0)
                } else {
                    uniform(adoption_seed, Tag::Adoption, p as u64, 3, 0)
                }
            })
            .collect()
    }

    pub fn adopters(&self, scores: &[f64], cfg: &AdoptionConfig) -> Vec<bool> {
        scores.iter().map(|&s| s < cfg.rate).collect()
    }
}
