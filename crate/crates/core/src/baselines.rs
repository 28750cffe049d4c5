//! Classical influence-maximization baselines: greedy hill climbing (lazy
//! CELF and plain), highest degree, and uniform random.
//!
//! Greedy scores candidates on a fixed bank of live-edge samples, rollout `i`
//! seeded by `derive_seed(seed, i)` exactly like
//! [`estimate_influence`](crate::diffusion::estimate_influence). Every
//! candidate in every iteration sees the same samples, so the estimated
//! objective is a coverage function: submodular, and lazy evaluation returns
//! the same picks as exhaustive re-evaluation.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diffusion::sample_open_edges;
use crate::error::{Error, Result};
use crate::graph::AttributedGraph;
use crate::rng::{derive_seed, SplitMix64};
use crate::selection::{check_budget, SeedSet, SelectionMethod};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GreedyStep {
    pub node: usize,
    /// Estimated marginal gain in expected influenced nodes.
    pub gain: f64,
    pub stderr: f64,
    /// Marginal-gain evaluations spent in this iteration.
    pub evaluations: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GreedyTrace {
    pub steps: Vec<GreedyStep>,
}

impl GreedyTrace {
    pub fn total_evaluations(&self) -> usize {
        self.steps.iter().map(|s| s.evaluations).sum()
    }

    /// Estimated expected influence of the chosen set (sum of gains).
    pub fn influence(&self) -> f64 {
        self.steps.iter().map(|s| s.gain).sum()
    }
}

fn find(parent: &mut [u32], mut x: u32) -> u32 {
    while parent[x as usize] != x {
        parent[x as usize] = parent[parent[x as usize] as usize];
        x = parent[x as usize];
    }
    x
}

/// Connected components of the live-edge graph of each rollout.
struct LiveEdgeBank {
    // per rollout: component id of each node, and component sizes
    component: Vec<Vec<u32>>,
    size: Vec<Vec<u32>>,
}

impl LiveEdgeBank {
    fn sample(g: &AttributedGraph, p: f64, rollouts: usize, seed: u64) -> Self {
        let n = g.n();
        let (component, size) = (0..rollouts as u64)
            .into_par_iter()
            .map(|i| {
                let mut rng = SplitMix64::new(derive_seed(seed, i));
                let open = sample_open_edges(g.edge_count(), p, &mut rng);
                let mut parent: Vec<u32> = (0..n as u32).collect();
                for (&(u, v), _) in g.edges().iter().zip(&open).filter(|(_, &o)| o) {
                    let (ru, rv) = (find(&mut parent, u as u32), find(&mut parent, v as u32));
                    if ru != rv {
                        parent[ru.max(rv) as usize] = ru.min(rv);
                    }
                }
                let mut label = vec![u32::MAX; n];
                let mut comp = vec![0u32; n];
                let mut sizes = Vec::new();
                for (u, slot) in comp.iter_mut().enumerate() {
                    let root = find(&mut parent, u as u32) as usize;
                    if label[root] == u32::MAX {
                        label[root] = sizes.len() as u32;
                        sizes.push(0);
                    }
                    *slot = label[root];
                    sizes[label[root] as usize] += 1;
                }
                (comp, sizes)
            })
            .unzip();
        Self { component, size }
    }

    fn rollouts(&self) -> usize {
        self.component.len()
    }
}

/// Which components are already reached, per rollout.
struct Coverage {
    covered: Vec<Vec<bool>>,
}

impl Coverage {
    fn new(bank: &LiveEdgeBank) -> Self {
        Self {
            covered: bank.size.iter().map(|s| vec![false; s.len()]).collect(),
        }
    }

    /// `(sum, sum of squares)` of per-rollout marginal gains of adding `u`.
    fn gain(&self, bank: &LiveEdgeBank, u: usize) -> (u64, u64) {
        let mut sum = 0u64;
        let mut sq = 0u64;
        for ((comp, size), covered) in bank.component.iter().zip(&bank.size).zip(&self.covered) {
            let c = comp[u] as usize;
            if !covered[c] {
                let x = size[c] as u64;
                sum += x;
                sq += x * x;
            }
        }
        (sum, sq)
    }

    fn add(&mut self, bank: &LiveEdgeBank, u: usize) {
        for (comp, covered) in bank.component.iter().zip(self.covered.iter_mut()) {
            covered[comp[u] as usize] = true;
        }
    }
}

fn step(node: usize, (sum, sq): (u64, u64), r: usize, evaluations: usize) -> GreedyStep {
    let rf = r as f64;
    let mean = sum as f64 / rf;
    let stderr = if r > 1 {
        let num = (r as u128 * sq as u128) as f64 - (sum as f64) * (sum as f64);
        (num.max(0.0) / (rf * (rf - 1.0)) / rf).sqrt()
    } else {
        0.0
    };
    GreedyStep {
        node,
        gain: mean,
        stderr,
        evaluations,
    }
}

fn check_greedy(g: &AttributedGraph, p: f64, budget: usize, rollouts: usize) -> Result<()> {
    check_budget(budget, g.n())?;
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidParam(format!(
            "activation probability must lie in [0,1], got {p}"
        )));
    }
    if rollouts == 0 {
        return Err(Error::InvalidParam("rollouts must be at least 1".into()));
    }
    Ok(())
}

/// Heap entry ordered by gain (largest first), then node id (smallest first).
#[derive(Debug, PartialEq, Eq)]
struct Candidate {
    sum: u64,
    sq: u64,
    node: usize,
    round: usize,
}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.sum, Reverse(self.node)).cmp(&(other.sum, Reverse(other.node)))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Lazy greedy (CELF). Ties in estimated gain go to the lowest node id.
pub fn greedy_celf(
    g: &AttributedGraph,
    p: f64,
    budget: usize,
    rollouts: usize,
    seed: u64,
) -> Result<(SeedSet, GreedyTrace)> {
    check_greedy(g, p, budget, rollouts)?;
    let bank = LiveEdgeBank::sample(g, p, rollouts, seed);
    let mut coverage = Coverage::new(&bank);
    let initial: Vec<(u64, u64)> = (0..g.n())
        .into_par_iter()
        .map(|u| coverage.gain(&bank, u))
        .collect();
    let mut heap: BinaryHeap<Candidate> = initial
        .into_iter()
        .enumerate()
        .map(|(node, (sum, sq))| Candidate {
            sum,
            sq,
            node,
            round: 0,
        })
        .collect();
    let mut trace = GreedyTrace::default();
    let mut nodes = Vec::with_capacity(budget);
    let mut evaluations = g.n();
    for round in 0..budget {
        loop {
            let top = heap.pop().expect("budget <= n");
            if top.round == round {
                coverage.add(&bank, top.node);
                nodes.push(top.node);
                trace.steps.push(step(
                    top.node,
                    (top.sum, top.sq),
                    bank.rollouts(),
                    evaluations,
                ));
                evaluations = 0;
                break;
            }
            let (sum, sq) = coverage.gain(&bank, top.node);
            evaluations += 1;
            heap.push(Candidate {
                sum,
                sq,
                node: top.node,
                round,
            });
        }
    }
    Ok((SeedSet::new(nodes, SelectionMethod::Greedy), trace))
}

/// Exhaustive greedy: every remaining candidate re-evaluated each iteration.
pub fn greedy_plain(
    g: &AttributedGraph,
    p: f64,
    budget: usize,
    rollouts: usize,
    seed: u64,
) -> Result<(SeedSet, GreedyTrace)> {
    check_greedy(g, p, budget, rollouts)?;
    let bank = LiveEdgeBank::sample(g, p, rollouts, seed);
    let mut coverage = Coverage::new(&bank);
    let mut chosen = vec![false; g.n()];
    let mut trace = GreedyTrace::default();
    let mut nodes = Vec::with_capacity(budget);
    for _ in 0..budget {
        let gains: Vec<(usize, (u64, u64))> = (0..g.n())
            .into_par_iter()
            .filter(|&u| !chosen[u])
            .map(|u| (u, coverage.gain(&bank, u)))
            .collect();
        let evaluations = gains.len();
        let (best, moments) = gains
            .into_iter()
            .max_by(|a, b| a.1 .0.cmp(&b.1 .0).then(b.0.cmp(&a.0)))
            .expect("budget <= n");
        chosen[best] = true;
        coverage.add(&bank, best);
        nodes.push(best);
        trace
            .steps
            .push(step(best, moments, bank.rollouts(), evaluations));
    }
    Ok((SeedSet::new(nodes, SelectionMethod::Greedy), trace))
}

/// Highest-degree nodes; ties to the lowest id.
pub fn degree_seeds(g: &AttributedGraph, budget: usize) -> Result<SeedSet> {
    check_budget(budget, g.n())?;
    let mut order: Vec<usize> = (0..g.n()).collect();
    order.sort_by(|&a, &b| g.degree(b).cmp(&g.degree(a)).then(a.cmp(&b)));
    order.truncate(budget);
    Ok(SeedSet::new(order, SelectionMethod::Degree))
}

/// Uniform sample without replacement (partial Fisher-Yates).
pub fn random_seeds(g: &AttributedGraph, budget: usize, seed: u64) -> Result<SeedSet> {
    check_budget(budget, g.n())?;
    let n = g.n();
    let mut rng = SplitMix64::new(seed);
    let mut pool: Vec<usize> = (0..n).collect();
    for i in 0..budget {
        let j = i + rng.below((n - i) as u64) as usize;
        pool.swap(i, j);
    }
    pool.truncate(budget);
    Ok(SeedSet::new(pool, SelectionMethod::Random))
}
