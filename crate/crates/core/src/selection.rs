//! Seed selection in embedding space.
//!
//! *Normal selection* clusters the embeddings into `budget` clusters and takes
//! the node nearest each centroid. *Fair selection* clusters into `k`
//! clusters, reads a per-group quota off the `s` nodes nearest each centroid,
//! and then fills each quota by sub-clustering that group's members of the
//! cluster.

use std::fmt;
use std::str::FromStr;

use ndarray::{ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::clustering::{kmeans, knn, nearest_among, nearest_node};
use crate::error::{Error, Result};
use crate::graph::{AttributedGraph, Group};
use crate::rng::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMethod {
    Normal,
    Fair,
    Greedy,
    Degree,
    Random,
    /// Read from a seed file.
    External,
}

impl fmt::Display for SelectionMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SelectionMethod::Normal => "normal",
            SelectionMethod::Fair => "fair",
            SelectionMethod::Greedy => "greedy",
            SelectionMethod::Degree => "degree",
            SelectionMethod::Random => "random",
            SelectionMethod::External => "external",
        })
    }
}

impl FromStr for SelectionMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "normal" => SelectionMethod::Normal,
            "fair" => SelectionMethod::Fair,
            "greedy" => SelectionMethod::Greedy,
            "degree" => SelectionMethod::Degree,
            "random" => SelectionMethod::Random,
            "external" => SelectionMethod::External,
            other => return Err(Error::Config(format!("unknown selection method `{other}`"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupCount {
    pub attribute: String,
    pub a: usize,
    pub b: usize,
}

/// Quota bookkeeping for one top-level cluster of fair selection.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterQuota {
    pub population: usize,
    /// Seeds drawn from this cluster (`s`, after remainder handling).
    pub quota: usize,
    pub from_a: usize,
    pub from_b: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedSet {
    pub nodes: Vec<usize>,
    pub budget: usize,
    pub method: SelectionMethod,
    #[serde(default)]
    pub group_counts: Vec<GroupCount>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub clusters: Vec<ClusterQuota>,
}

impl SeedSet {
    pub fn new(nodes: Vec<usize>, method: SelectionMethod) -> Self {
        Self {
            budget: nodes.len(),
            nodes,
            method,
            group_counts: Vec::new(),
            clusters: Vec::new(),
        }
    }

    /// Records how many seeds fall in each group of every binarized attribute.
    pub fn tally(mut self, g: &AttributedGraph) -> Result<Self> {
        self.group_counts = g
            .attribute_names()
            .iter()
            .map(|name| {
                let labels = g.labels(name)?;
                let a = self
                    .nodes
                    .iter()
                    .filter(|&&u| labels[u] == Group::A)
                    .count();
                Ok(GroupCount {
                    attribute: name.clone(),
                    a,
                    b: self.nodes.len() - a,
                })
            })
            .collect::<Result<_>>()?;
        Ok(self)
    }

    /// First `budget` seeds, for prefix-consistent methods.
    pub fn prefix(&self, budget: usize) -> Self {
        let mut out = Self::new(
            self.nodes[..budget.min(self.nodes.len())].to_vec(),
            self.method,
        );
        out.budget = budget;
        out
    }
}

pub(crate) fn check_budget(budget: usize, n: usize) -> Result<()> {
    if budget == 0 {
        return Err(Error::InvalidParam("seed budget must be at least 1".into()));
    }
    if budget > n {
        return Err(Error::InvalidParam(format!(
            "seed budget {budget} exceeds node count {n}"
        )));
    }
    Ok(())
}

/// k-means with `k = budget`; each centroid maps to its nearest unused node.
pub fn normal_selection(z: ArrayView2<'_, f64>, budget: usize, seed: u64) -> Result<SeedSet> {
    let n = z.nrows();
    check_budget(budget, n)?;
    let clustering = kmeans(z, budget, seed)?;
    let mut excluded = vec![false; n];
    let mut nodes = Vec::with_capacity(budget);
    for centroid in clustering.centroids.outer_iter() {
        let u = nearest_node(centroid, z, &excluded)?;
        excluded[u] = true;
        nodes.push(u);
    }
    Ok(SeedSet::new(nodes, SelectionMethod::Normal))
}

/// Seeds per top-level cluster: `budget / k` each, remainder one apiece to the
/// most populous clusters, and any cluster too small for its share passes the
/// excess on (again most populous first).
fn cluster_quotas(populations: &[usize], budget: usize) -> Vec<usize> {
    let k = populations.len();
    let mut by_size: Vec<usize> = (0..k).collect();
    by_size.sort_by(|&a, &b| populations[b].cmp(&populations[a]).then(a.cmp(&b)));
    let mut quota = vec![budget / k; k];
    for &c in by_size.iter().take(budget % k) {
        quota[c] += 1;
    }
    let mut deficit = 0;
    for c in 0..k {
        if quota[c] > populations[c] {
            deficit += quota[c] - populations[c];
            quota[c] = populations[c];
        }
    }
    while deficit > 0 {
        for &c in &by_size {
            if deficit > 0 && quota[c] < populations[c] {
                quota[c] += 1;
                deficit -= 1;
            }
        }
    }
    quota
}

/// Fair selection of `budget` seeds using `k_clusters` top-level clusters and
/// the binary `labels` of one sensitive attribute.
pub fn fair_selection(
    z: ArrayView2<'_, f64>,
    labels: &[Group],
    k_clusters: usize,
    budget: usize,
    seed: u64,
) -> Result<SeedSet> {
    let n = z.nrows();
    if labels.len() != n {
        return Err(Error::Dimension {
            expected: n,
            got: labels.len(),
        });
    }
    check_budget(budget, n)?;
    if k_clusters == 0 || k_clusters > n {
        return Err(Error::InvalidParam(format!(
            "fair selection needs 1 <= k <= {n}, got {k_clusters}"
        )));
    }
    let clustering = kmeans(z, k_clusters, derive_seed(seed, 0))?;
    let members = clustering.members();
    let populations: Vec<usize> = members.iter().map(Vec::len).collect();
    let quotas = cluster_quotas(&populations, budget);

    let mut excluded = vec![false; n];
    let mut nodes = Vec::with_capacity(budget);
    let mut clusters = Vec::with_capacity(k_clusters);
    for (i, cluster) in members.iter().enumerate() {
        let s = quotas[i];
        let nearest = knn(
            s,
            clustering.centroids.row(i),
            z.select(Axis(0), cluster).view(),
        )?;
        let from_a = nearest
            .iter()
            .filter(|&&j| labels[cluster[j]] == Group::A)
            .count();
        let from_b = s - from_a;
        let (part_a, part_b): (Vec<usize>, Vec<usize>) =
            cluster.iter().partition(|&&u| labels[u] == Group::A);
        for (g, (part, count)) in [(part_a, from_a), (part_b, from_b)].into_iter().enumerate() {
            if count == 0 {
                continue;
            }
            let sub_seed = derive_seed(seed, 1 + 2 * i as u64 + g as u64);
            let sub = kmeans(z.select(Axis(0), &part).view(), count, sub_seed)?;
            for centroid in sub.centroids.outer_iter() {
                let u = nearest_among(centroid, z, part.iter().copied(), &excluded)?;
                excluded[u] = true;
                nodes.push(u);
            }
        }
        clusters.push(ClusterQuota {
            population: cluster.len(),
            quota: s,
            from_a,
            from_b,
        });
    }
    debug_assert_eq!(nodes.len(), budget);
    let mut set = SeedSet::new(nodes, SelectionMethod::Fair);
    set.clusters = clusters;
    Ok(set)
}
