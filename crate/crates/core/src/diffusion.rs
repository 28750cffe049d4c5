//! Independent-cascade diffusion in its live-edge form.
//!
//! Each rollout flips one coin per edge (canonical edge order); the influenced
//! set is everything reachable from the seeds over open edges. Seeds always
//! count as influenced.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{AttributedGraph, Group};
use crate::rng::{derive_seed, SplitMix64};

/// Largest edge count `exact_influence` will enumerate (2^m live-edge states).
pub const MAX_EXACT_EDGES: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CascadeParams {
    /// Activation probability applied to every edge.
    pub p: f64,
    pub rollouts: usize,
    pub seed: u64,
}

impl CascadeParams {
    pub fn new(p: f64, rollouts: usize, seed: u64) -> Result<Self> {
        let params = Self { p, rollouts, seed };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        check_probability(self.p)?;
        if self.rollouts == 0 {
            return Err(Error::InvalidParam("rollouts must be at least 1".into()));
        }
        Ok(())
    }
}

fn check_probability(p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidParam(format!(
            "activation probability must lie in [0,1], got {p}"
        )));
    }
    Ok(())
}

/// Per-attribute influence breakdown.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupInfluence {
    pub attribute: String,
    pub size_a: usize,
    pub size_b: usize,
    pub count_a: f64,
    pub count_b: f64,
    /// `None` when the group is empty.
    pub fraction_a: Option<f64>,
    pub fraction_b: Option<f64>,
    pub stderr_a: Option<f64>,
    pub stderr_b: Option<f64>,
    pub disparity: Option<f64>,
    /// Standard error of the signed difference `fraction_a - fraction_b`.
    pub stderr_disparity: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfluenceReport {
    pub n: usize,
    pub seeds: Vec<usize>,
    pub p: f64,
    /// 0 for exact enumeration.
    pub rollouts: usize,
    pub seeds_counted_as_influenced: bool,
    /// Expected number of influenced nodes.
    pub count: f64,
    pub stderr_count: f64,
    pub total_fraction: f64,
    pub stderr_total: f64,
    pub groups: Vec<GroupInfluence>,
}

impl InfluenceReport {
    pub fn group(&self, attr: &str) -> Result<&GroupInfluence> {
        self.groups
            .iter()
            .find(|g| g.attribute == attr)
            .ok_or_else(|| Error::UnknownAttribute(attr.to_string()))
    }
}

/// `|fraction_A - fraction_B|` for `attr`.
pub fn disparity(report: &InfluenceReport, attr: &str) -> Result<f64> {
    let g = report.group(attr)?;
    match (g.fraction_a, g.fraction_b) {
        (Some(a), Some(b)) => Ok((a - b).abs()),
        (None, _) => Err(Error::EmptyGroup {
            attr: attr.to_string(),
            group: 'A',
        }),
        (_, None) => Err(Error::EmptyGroup {
            attr: attr.to_string(),
            group: 'B',
        }),
    }
}

/// Node adjacency annotated with canonical edge indices.
#[derive(Debug, Clone)]
pub struct Incidence {
    lists: Vec<Vec<(usize, usize)>>,
}

impl Incidence {
    pub fn new(g: &AttributedGraph) -> Self {
        let mut lists = vec![Vec::new(); g.n()];
        for (e, &(u, v)) in g.edges().iter().enumerate() {
            lists[u].push((v, e));
            lists[v].push((u, e));
        }
        Self { lists }
    }

    /// Nodes reachable from `seeds` over edges with `open[e]`, as a membership
    /// mask.
    pub fn reachable(&self, open: &[bool], seeds: &[usize]) -> Vec<bool> {
        let mut hit = vec![false; self.lists.len()];
        let mut stack = Vec::with_capacity(seeds.len());
        for &s in seeds {
            if !hit[s] {
                hit[s] = true;
                stack.push(s);
            }
        }
        while let Some(u) = stack.pop() {
            for &(v, e) in &self.lists[u] {
                if open[e] && !hit[v] {
                    hit[v] = true;
                    stack.push(v);
                }
            }
        }
        hit
    }
}

/// One coin per edge, in canonical edge order.
pub fn sample_open_edges(edge_count: usize, p: f64, rng: &mut SplitMix64) -> Vec<bool> {
    (0..edge_count).map(|_| rng.bernoulli(p)).collect()
}

fn check_seeds(g: &AttributedGraph, seeds: &[usize]) -> Result<()> {
    if seeds.is_empty() {
        return Err(Error::InvalidParam("seed set is empty".into()));
    }
    if let Some(&bad) = seeds.iter().find(|&&s| s >= g.n()) {
        return Err(Error::UnknownNode(format!(
            "{bad} (seed out of range, n = {})",
            g.n()
        )));
    }
    Ok(())
}

/// A single cascade; returns the influenced nodes in ascending order.
pub fn simulate_once(
    g: &AttributedGraph,
    seeds: &[usize],
    p: f64,
    rng: &mut SplitMix64,
) -> Result<Vec<usize>> {
    check_seeds(g, seeds)?;
    check_probability(p)?;
    let open = sample_open_edges(g.edge_count(), p, rng);
    let hit = Incidence::new(g).reachable(&open, seeds);
    Ok(hit
        .iter()
        .enumerate()
        .filter_map(|(u, &h)| h.then_some(u))
        .collect())
}

/// Integer moments for one quantity; exact and order-independent.
#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    sum: i128,
    sum_sq: i128,
}

impl Moments {
    fn push(&mut self, x: i64) {
        self.sum += x as i128;
        self.sum_sq += (x as i128) * (x as i128);
    }

    fn merge(mut self, other: Self) -> Self {
        self.sum += other.sum;
        self.sum_sq += other.sum_sq;
        self
    }

    fn mean(&self, r: usize) -> f64 {
        self.sum as f64 / r as f64
    }

    /// Standard error of the mean from the unbiased sample variance.
    fn stderr(&self, r: usize) -> f64 {
        if r < 2 {
            return 0.0;
        }
        let r_i = r as i128;
        // r * sum_sq - sum^2 = r (r-1) s^2, exact in integers
        let num = r_i * self.sum_sq - self.sum * self.sum;
        let var = num as f64 / (r as f64 * (r as f64 - 1.0));
        (var.max(0.0) / r as f64).sqrt()
    }
}

/// Per-rollout integer tallies: total, and per attribute (A count, B count,
/// scaled difference `c_A|B| - c_B|A|`).
#[derive(Debug, Clone)]
struct Tally {
    total: Moments,
    groups: Vec<[Moments; 3]>,
}

impl Tally {
    fn new(attrs: usize) -> Self {
        Self {
            total: Moments::default(),
            groups: vec![[Moments::default(); 3]; attrs],
        }
    }

    fn merge(mut self, other: Self) -> Self {
        self.total = self.total.merge(other.total);
        for (a, b) in self.groups.iter_mut().zip(other.groups) {
            for k in 0..3 {
                a[k] = a[k].merge(b[k]);
            }
        }
        self
    }
}

struct GroupLabels<'a> {
    name: &'a str,
    labels: &'a [Group],
    size_a: usize,
    size_b: usize,
}

fn collect_labels<'a>(g: &'a AttributedGraph, attrs: &'a [String]) -> Result<Vec<GroupLabels<'a>>> {
    attrs
        .iter()
        .map(|name| {
            let labels = g.labels(name)?;
            let (size_a, size_b) = g.group_sizes(name)?;
            Ok(GroupLabels {
                name,
                labels,
                size_a,
                size_b,
            })
        })
        .collect()
}

fn count_hits(hit: &[bool], groups: &[GroupLabels<'_>]) -> (i64, Vec<(i64, i64)>) {
    let total = hit.iter().filter(|&&h| h).count() as i64;
    let per = groups
        .iter()
        .map(|gl| {
            let a = hit
                .iter()
                .zip(gl.labels)
                .filter(|(&h, &l)| h && l == Group::A)
                .count() as i64;
            (a, total - a)
        })
        .collect();
    (total, per)
}

/// Monte Carlo influence estimate. Rollout `i` draws its coins from
/// `derive_seed(params.seed, i)`, so the result does not depend on evaluation
/// order and parallel evaluation matches sequential evaluation exactly.
pub fn estimate_influence(
    g: &AttributedGraph,
    seeds: &[usize],
    params: &CascadeParams,
    attrs: &[String],
) -> Result<InfluenceReport> {
    check_seeds(g, seeds)?;
    params.validate()?;
    let groups = collect_labels(g, attrs)?;
    let incidence = Incidence::new(g);
    let m = g.edge_count();
    let r = params.rollouts;

    let tally = (0..r as u64)
        .into_par_iter()
        .fold(
            || Tally::new(groups.len()),
            |mut t, i| {
                let mut rng = SplitMix64::new(derive_seed(params.seed, i));
                let open = sample_open_edges(m, params.p, &mut rng);
                let hit = incidence.reachable(&open, seeds);
                let (total, per) = count_hits(&hit, &groups);
                t.total.push(total);
                for ((ca, cb), (mom, gl)) in per.into_iter().zip(t.groups.iter_mut().zip(&groups)) {
                    mom[0].push(ca);
                    mom[1].push(cb);
                    mom[2].push(ca * gl.size_b as i64 - cb * gl.size_a as i64);
                }
                t
            },
        )
        .reduce(|| Tally::new(groups.len()), Tally::merge);

    let n = g.n() as f64;
    let count = tally.total.mean(r);
    let stderr_count = tally.total.stderr(r);
    let group_reports = groups
        .iter()
        .zip(&tally.groups)
        .map(|(gl, mom)| {
            let (sa, sb) = (gl.size_a as f64, gl.size_b as f64);
            let frac = |m: &Moments, size: f64| (size > 0.0).then(|| m.mean(r) / size);
            let se = |m: &Moments, size: f64| (size > 0.0).then(|| m.stderr(r) / size);
            let both = gl.size_a > 0 && gl.size_b > 0;
            let fa = frac(&mom[0], sa);
            let fb = frac(&mom[1], sb);
            GroupInfluence {
                attribute: gl.name.to_string(),
                size_a: gl.size_a,
                size_b: gl.size_b,
                count_a: mom[0].mean(r),
                count_b: mom[1].mean(r),
                fraction_a: fa,
                fraction_b: fb,
                stderr_a: se(&mom[0], sa),
                stderr_b: se(&mom[1], sb),
                disparity: fa.zip(fb).map(|(a, b)| (a - b).abs()),
                stderr_disparity: both.then(|| mom[2].stderr(r) / (sa * sb)),
            }
        })
        .collect();

    Ok(InfluenceReport {
        n: g.n(),
        seeds: seeds.to_vec(),
        p: params.p,
        rollouts: r,
        seeds_counted_as_influenced: true,
        count,
        stderr_count,
        total_fraction: if g.n() > 0 { count / n } else { 0.0 },
        stderr_total: if g.n() > 0 { stderr_count / n } else { 0.0 },
        groups: group_reports,
    })
}

/// Exact expected influence by summing over all `2^m` live-edge states,
/// each weighted by `p^open (1-p)^closed`.
pub fn exact_influence(
    g: &AttributedGraph,
    seeds: &[usize],
    p: f64,
    attrs: &[String],
) -> Result<InfluenceReport> {
    check_seeds(g, seeds)?;
    check_probability(p)?;
    let m = g.edge_count();
    if m > MAX_EXACT_EDGES {
        return Err(Error::TooManyEdges {
            edges: m,
            limit: MAX_EXACT_EDGES,
        });
    }
    let groups = collect_labels(g, attrs)?;
    let incidence = Incidence::new(g);
    let mut total = 0.0;
    let mut per = vec![(0.0, 0.0); groups.len()];
    let mut open = vec![false; m];
    for mask in 0u32..(1u32 << m) {
        let mut k = 0;
        for (e, slot) in open.iter_mut().enumerate() {
            *slot = mask >> e & 1 == 1;
            k += *slot as i32;
        }
        let w = p.powi(k) * (1.0 - p).powi(m as i32 - k);
        if w == 0.0 {
            continue;
        }
        let hit = incidence.reachable(&open, seeds);
        let (t, pg) = count_hits(&hit, &groups);
        total += w * t as f64;
        for (acc, (a, b)) in per.iter_mut().zip(pg) {
            acc.0 += w * a as f64;
            acc.1 += w * b as f64;
        }
    }
    let n = g.n() as f64;
    let group_reports = groups
        .iter()
        .zip(per)
        .map(|(gl, (ca, cb))| {
            let fa = (gl.size_a > 0).then(|| ca / gl.size_a as f64);
            let fb = (gl.size_b > 0).then(|| cb / gl.size_b as f64);
            GroupInfluence {
                attribute: gl.name.to_string(),
                size_a: gl.size_a,
                size_b: gl.size_b,
                count_a: ca,
                count_b: cb,
                fraction_a: fa,
                fraction_b: fb,
                stderr_a: fa.map(|_| 0.0),
                stderr_b: fb.map(|_| 0.0),
                disparity: fa.zip(fb).map(|(a, b)| (a - b).abs()),
                stderr_disparity: fa.zip(fb).map(|_| 0.0),
            }
        })
        .collect();
    Ok(InfluenceReport {
        n: g.n(),
        seeds: seeds.to_vec(),
        p,
        rollouts: 0,
        seeds_counted_as_influenced: true,
        count: total,
        stderr_count: 0.0,
        total_fraction: total / n,
        stderr_total: 0.0,
        groups: group_reports,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn path(n: usize) -> AttributedGraph {
        AttributedGraph::new(n, (1..n).map(|v| (v - 1, v))).unwrap()
    }

    fn triangle() -> AttributedGraph {
        AttributedGraph::new(3, [(0, 1), (0, 2), (1, 2)]).unwrap()
    }

    fn labeled(g: AttributedGraph, a_nodes: &[usize]) -> AttributedGraph {
        let labels = (0..g.n())
            .map(|u| {
                if a_nodes.contains(&u) {
                    Group::A
                } else {
                    Group::B
                }
            })
            .collect();
        g.with_labels("g", labels).unwrap()
    }

    #[test]
    fn p_zero_only_seeds() {
        let g = path(5);
        let mut rng = SplitMix64::new(1);
        assert_eq!(
            simulate_once(&g, &[1, 3], 0.0, &mut rng).unwrap(),
            vec![1, 3]
        );
    }

    #[test]
    fn p_one_components() {
        let g = AttributedGraph::new(6, [(0, 1), (1, 2), (3, 4)]).unwrap();
        let mut rng = SplitMix64::new(1);
        assert_eq!(
            simulate_once(&g, &[2], 1.0, &mut rng).unwrap(),
            vec![0, 1, 2]
        );
        assert_eq!(
            simulate_once(&g, &[0, 5], 1.0, &mut rng).unwrap(),
            vec![0, 1, 2, 5]
        );
    }

    #[test]
    fn forced_coin_realization() {
        let g = path(3);
        let inc = Incidence::new(&g);
        // edge 0 = (0,1) open, edge 1 = (1,2) closed
        let hit = inc.reachable(&[true, false], &[0]);
        assert_eq!(hit, vec![true, true, false]);
    }

    #[test]
    fn seed_errors() {
        let g = path(3);
        let mut rng = SplitMix64::new(1);
        assert!(matches!(
            simulate_once(&g, &[3], 0.5, &mut rng),
            Err(Error::UnknownNode(_))
        ));
        assert!(simulate_once(&g, &[], 0.5, &mut rng).is_err());
    }

    #[test]
    fn edgeless_zero_variance() {
        let g = labeled(AttributedGraph::new(5, []).unwrap(), &[0, 1]);
        let params = CascadeParams::new(0.7, 500, 9).unwrap();
        let rep = estimate_influence(&g, &[0, 3], &params, &["g".into()]).unwrap();
        assert_eq!(rep.count, 2.0);
        assert_eq!(rep.stderr_count, 0.0);
        let gi = rep.group("g").unwrap();
        assert_eq!(gi.fraction_a, Some(0.5));
        assert!((gi.fraction_b.unwrap() - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn single_edge_mc() {
        // E[count] = 1 + p; per-rollout sd 0.5, so stderr = 0.5/sqrt(R).
        let g = path(2);
        let params = CascadeParams::new(0.5, 100_000, 123).unwrap();
        let rep = estimate_influence(&g, &[0], &params, &[]).unwrap();
        assert!((rep.count - 1.5).abs() < 0.01, "count {}", rep.count);
        assert!((rep.stderr_count - 0.5 / (100_000f64).sqrt()).abs() < 1e-4);
    }

    #[test]
    fn triangle_exact_and_mc() {
        // P(reach 1) = 1/2 + 1/2 * 1/4 = 5/8, same for 2: 1 + 5/4.
        let g = triangle();
        let exact = exact_influence(&g, &[0], 0.5, &[]).unwrap();
        assert!((exact.count - 2.25).abs() < 1e-12);
        let mc = estimate_influence(&g, &[0], &CascadeParams::new(0.5, 100_000, 5).unwrap(), &[])
            .unwrap();
        assert!((mc.count - 2.25).abs() <= 4.0 * mc.stderr_count);
    }

    #[test]
    fn exact_single_edge_and_p_one() {
        let rep = exact_influence(&path(2), &[0], 0.5, &[]).unwrap();
        assert!((rep.count - 1.5).abs() < 1e-12);
        let g = AttributedGraph::new(7, [(0, 1), (1, 2), (3, 4), (4, 5)]).unwrap();
        assert_eq!(exact_influence(&g, &[0, 4], 1.0, &[]).unwrap().count, 6.0);
    }

    #[test]
    fn exact_refuses_large() {
        let g = path(22);
        assert!(matches!(
            exact_influence(&g, &[0], 0.5, &[]),
            Err(Error::TooManyEdges {
                edges: 21,
                limit: 20
            })
        ));
    }

    fn report_with(fa: Option<f64>, fb: Option<f64>) -> InfluenceReport {
        InfluenceReport {
            n: 10,
            seeds: vec![0],
            p: 0.1,
            rollouts: 1,
            seeds_counted_as_influenced: true,
            count: 1.0,
            stderr_count: 0.0,
            total_fraction: 0.1,
            stderr_total: 0.0,
            groups: vec![GroupInfluence {
                attribute: "g".into(),
                size_a: 5,
                size_b: 5,
                count_a: 0.0,
                count_b: 0.0,
                fraction_a: fa,
                fraction_b: fb,
                stderr_a: None,
                stderr_b: None,
                disparity: None,
                stderr_disparity: None,
            }],
        }
    }

    #[test]
    fn disparity_definitional() {
        assert_eq!(
            disparity(&report_with(Some(0.4), Some(0.4)), "g").unwrap(),
            0.0
        );
        assert!((disparity(&report_with(Some(0.6), Some(0.1)), "g").unwrap() - 0.5).abs() < 1e-12);
        assert!(matches!(
            disparity(&report_with(Some(0.6), None), "g"),
            Err(Error::EmptyGroup { group: 'B', .. })
        ));
    }

    #[test]
    fn mirrored_cliques_zero_disparity() {
        // Two triangles, A = first, B = second, one seed in each.
        let g = AttributedGraph::new(6, [(0, 1), (0, 2), (1, 2), (3, 4), (3, 5), (4, 5)]).unwrap();
        let g = labeled(g, &[0, 1, 2]);
        let rep = exact_influence(&g, &[0, 3], 0.5, &["g".into()]).unwrap();
        assert!(disparity(&rep, "g").unwrap().abs() < 1e-12);
        assert!((rep.count - 4.5).abs() < 1e-12);
    }

    #[test]
    fn rollout_order_independent() {
        let g = labeled(path(8), &[0, 1, 2]);
        let params = CascadeParams::new(0.4, 2000, 77).unwrap();
        let a = estimate_influence(&g, &[0, 5], &params, &["g".into()]).unwrap();
        // Sequential evaluation in reverse order.
        let inc = Incidence::new(&g);
        let mut sum = 0i64;
        for i in (0..2000u64).rev() {
            let mut rng = SplitMix64::new(derive_seed(77, i));
            let open = sample_open_edges(g.edge_count(), 0.4, &mut rng);
            sum += inc.reachable(&open, &[0, 5]).iter().filter(|&&h| h).count() as i64;
        }
        assert_eq!(a.count, sum as f64 / 2000.0);
        let b = estimate_influence(&g, &[0, 5], &params, &["g".into()]).unwrap();
        assert_eq!(a, b);
    }

    fn arb_graph() -> impl Strategy<Value = AttributedGraph> {
        (2usize..15).prop_flat_map(|n| {
            (
                proptest::collection::vec((0..n, 0..n), 0..30),
                proptest::collection::vec(any::<bool>(), n),
            )
                .prop_map(move |(pairs, a)| {
                    let g =
                        AttributedGraph::new(n, pairs.into_iter().filter(|(u, v)| u != v)).unwrap();
                    let labels = a
                        .into_iter()
                        .map(|b| if b { Group::A } else { Group::B })
                        .collect();
                    g.with_labels("g", labels).unwrap()
                })
        })
    }

    proptest! {
        #[test]
        fn live_edge_monotone(g in arb_graph(), seed in any::<u64>(), p in 0.0f64..1.0) {
            let inc = Incidence::new(&g);
            let mut rng = SplitMix64::new(seed);
            let open = sample_open_edges(g.edge_count(), p, &mut rng);
            let s1 = [0usize];
            let s2 = [0usize, g.n() - 1];
            let h1 = inc.reachable(&open, &s1);
            let h2 = inc.reachable(&open, &s2);
            for u in 0..g.n() {
                prop_assert!(!h1[u] || h2[u]);
            }
        }

        #[test]
        fn output_contains_seeds(g in arb_graph(), seed in any::<u64>(), p in 0.0f64..1.0) {
            let seeds = [g.n() / 2];
            let out = simulate_once(&g, &seeds, p, &mut SplitMix64::new(seed)).unwrap();
            prop_assert!(out.contains(&seeds[0]));
        }

        #[test]
        fn group_decomposition(g in arb_graph(), seed in any::<u64>(), p in 0.0f64..1.0) {
            let out = simulate_once(&g, &[0], p, &mut SplitMix64::new(seed)).unwrap();
            let labels = g.labels("g").unwrap();
            let a = out.iter().filter(|&&u| labels[u] == Group::A).count();
            let b = out.iter().filter(|&&u| labels[u] == Group::B).count();
            prop_assert_eq!(a + b, out.len());
            let rep = estimate_influence(&g, &[0], &CascadeParams::new(p, 50, seed).unwrap(), &["g".into()]).unwrap();
            let gi = rep.group("g").unwrap();
            prop_assert!((gi.count_a + gi.count_b - rep.count).abs() < 1e-9);
        }
    }
}
