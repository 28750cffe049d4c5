//! Lloyd's k-means with k-means++ seeding, plus the nearest-neighbour
//! queries seed selection is built from.
//!
//! Distances are Euclidean. Every tie is broken towards the lowest index so
//! results are fully determined by the input and the seed.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{derive_seed, SplitMix64};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KMeansParams {
    pub max_iters: usize,
    /// Stop once one iteration improves the objective by less than this.
    pub tolerance: f64,
    /// Independent k-means++ restarts; the lowest objective wins.
    pub restarts: usize,
}

impl Default for KMeansParams {
    fn default() -> Self {
        Self {
            max_iters: 300,
            tolerance: 1e-6,
            restarts: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Clustering {
    pub centroids: Array2<f64>,
    /// Cluster index of each input row.
    pub assignment: Vec<usize>,
    /// Sum of squared distances to assigned centroids.
    pub objective: f64,
    /// Objective after each assignment step of the winning restart.
    pub history: Vec<f64>,
}

impl Clustering {
    pub fn k(&self) -> usize {
        self.centroids.nrows()
    }

    /// Row indices of each cluster, ascending.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.k()];
        for (i, &c) in self.assignment.iter().enumerate() {
            out[c].push(i);
        }
        out
    }
}

#[inline]
pub fn squared_distance(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn kmeans(points: ArrayView2<'_, f64>, k: usize, seed: u64) -> Result<Clustering> {
    kmeans_with(points, k, seed, &KMeansParams::default())
}

pub fn kmeans_with(
    points: ArrayView2<'_, f64>,
    k: usize,
    seed: u64,
    params: &KMeansParams,
) -> Result<Clustering> {
    let n = points.nrows();
    if k == 0 {
        return Err(Error::InvalidParam("k-means needs k >= 1".into()));
    }
    if k > n {
        return Err(Error::InvalidParam(format!(
            "k-means with k = {k} on only {n} points"
        )));
    }
    if points.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParam(
            "k-means input has non-finite entries".into(),
        ));
    }
    let mut best: Option<Clustering> = None;
    for restart in 0..params.restarts.max(1) {
        let mut rng = SplitMix64::new(derive_seed(seed, restart as u64));
        let init = plus_plus(points, k, &mut rng);
        let run = lloyd(points, init, params);
        if best.as_ref().is_none_or(|b| run.objective < b.objective) {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one restart"))
}

/// k-means++ seeding: first centre uniform, the rest drawn proportional to
/// squared distance from the nearest chosen centre.
fn plus_plus(points: ArrayView2<'_, f64>, k: usize, rng: &mut SplitMix64) -> Array2<f64> {
    let n = points.nrows();
    let mut chosen = vec![rng.below(n as u64) as usize];
    let mut d2: Vec<f64> = (0..n)
        .map(|i| squared_distance(points.row(i), points.row(chosen[0])))
        .collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let target = rng.next_f64() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, &w) in d2.iter().enumerate() {
                acc += w;
                if w > 0.0 && acc > target {
                    pick = Some(i);
                    break;
                }
            }
            // rounding can leave `target` just past the final sum
            pick.unwrap_or_else(|| d2.iter().rposition(|&w| w > 0.0).unwrap())
        } else {
            // every point coincides with a centre already
            (0..n).find(|i| !chosen.contains(i)).unwrap_or(0)
        };
        chosen.push(next);
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(squared_distance(points.row(i), points.row(next)));
        }
    }
    points.select(Axis(0), &chosen)
}

fn nearest_centroid(x: ArrayView1<'_, f64>, centroids: &Array2<f64>) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, row) in centroids.outer_iter().enumerate() {
        let d = squared_distance(x, row);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn means(points: ArrayView2<'_, f64>, assignment: &[usize], old: &Array2<f64>) -> Array2<f64> {
    let mut sums = Array2::zeros(old.raw_dim());
    let mut counts = vec![0usize; old.nrows()];
    for (i, &c) in assignment.iter().enumerate() {
        let mut row = sums.row_mut(c);
        row += &points.row(i);
        counts[c] += 1;
    }
    for (c, &cnt) in counts.iter().enumerate() {
        if cnt > 0 {
            sums.row_mut(c).mapv_inplace(|v| v / cnt as f64);
        } else {
            sums.row_mut(c).assign(&old.row(c));
        }
    }
    sums
}

/// Moves the point farthest from its centroid (taken from a cluster with at
/// least two members) into each empty cluster.
fn repair_empty(
    points: ArrayView2<'_, f64>,
    centroids: &mut Array2<f64>,
    assignment: &mut [usize],
    dist: &mut [f64],
) {
    let k = centroids.nrows();
    let mut sizes = vec![0usize; k];
    for &c in assignment.iter() {
        sizes[c] += 1;
    }
    for j in 0..k {
        if sizes[j] > 0 {
            continue;
        }
        let mut donor: Option<usize> = None;
        for i in 0..assignment.len() {
            if sizes[assignment[i]] > 1 && donor.is_none_or(|d| dist[i] > dist[d]) {
                donor = Some(i);
            }
        }
        let i = donor.expect("k <= n guarantees a cluster with two members");
        sizes[assignment[i]] -= 1;
        sizes[j] = 1;
        assignment[i] = j;
        dist[i] = 0.0;
        centroids.row_mut(j).assign(&points.row(i));
    }
}

fn lloyd(
    points: ArrayView2<'_, f64>,
    mut centroids: Array2<f64>,
    params: &KMeansParams,
) -> Clustering {
    let n = points.nrows();
    let mut history = Vec::new();
    let mut previous: Option<Vec<usize>> = None;
    let mut assignment = vec![0; n];
    let mut dist = vec![0.0; n];
    for _ in 0..params.max_iters.max(1) {
        for i in 0..n {
            let (c, d) = nearest_centroid(points.row(i), &centroids);
            assignment[i] = c;
            dist[i] = d;
        }
        repair_empty(points, &mut centroids, &mut assignment, &mut dist);
        let objective: f64 = dist.iter().sum();
        let improvement = history.last().map(|&last: &f64| last - objective);
        history.push(objective);
        if previous.as_deref() == Some(&assignment[..]) {
            break;
        }
        centroids = means(points, &assignment, &centroids);
        if improvement.is_some_and(|imp| imp < params.tolerance) {
            break;
        }
        previous = Some(assignment.clone());
    }
    let centroids = means(points, &assignment, &centroids);
    let objective = (0..n)
        .map(|i| squared_distance(points.row(i), centroids.row(assignment[i])))
        .sum();
    history.push(objective);
    Clustering {
        centroids,
        assignment,
        objective,
        history,
    }
}

/// Indices of the `s` candidates closest to `query`, ordered by distance then
/// index.
pub fn knn(
    s: usize,
    query: ArrayView1<'_, f64>,
    candidates: ArrayView2<'_, f64>,
) -> Result<Vec<usize>> {
    if s > candidates.nrows() {
        return Err(Error::InvalidParam(format!(
            "asked for {s} neighbours among {} candidates",
            candidates.nrows()
        )));
    }
    let mut order: Vec<(f64, usize)> = candidates
        .outer_iter()
        .enumerate()
        .map(|(i, row)| (squared_distance(query, row), i))
        .collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    Ok(order.into_iter().take(s).map(|(_, i)| i).collect())
}

/// Node among `candidates` (rows of `z`) nearest to `centroid`, skipping
/// `excluded`; ties go to the lowest node id.
pub fn nearest_among(
    centroid: ArrayView1<'_, f64>,
    z: ArrayView2<'_, f64>,
    candidates: impl IntoIterator<Item = usize>,
    excluded: &[bool],
) -> Result<usize> {
    let mut best: Option<(f64, usize)> = None;
    for u in candidates {
        if excluded.get(u).copied().unwrap_or(false) {
            continue;
        }
        let d = squared_distance(centroid, z.row(u));
        let better = match best {
            None => true,
            Some((bd, bu)) => d < bd || (d == bd && u < bu),
        };
        if better {
            best = Some((d, u));
        }
    }
    best.map(|(_, u)| u)
        .ok_or_else(|| Error::InvalidParam("every candidate node is excluded".into()))
}

/// Non-excluded node whose embedding row is nearest to `centroid`.
pub fn nearest_node(
    centroid: ArrayView1<'_, f64>,
    z: ArrayView2<'_, f64>,
    excluded: &[bool],
) -> Result<usize> {
    nearest_among(centroid, z, 0..z.nrows(), excluded)
}

/// Mean of all rows.
pub fn global_centroid(z: ArrayView2<'_, f64>) -> Array1<f64> {
    z.mean_axis(Axis(0))
        .unwrap_or_else(|| Array1::zeros(z.ncols()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    /// Exhaustive optimum over all labelings with no empty cluster.
    fn brute_force_objective(points: ArrayView2<'_, f64>, k: usize) -> f64 {
        let n = points.nrows();
        let mut best = f64::INFINITY;
        let mut labels = vec![0usize; n];
        let total = k.pow(n as u32);
        for code in 0..total {
            let mut c = code;
            for l in labels.iter_mut() {
                *l = c % k;
                c /= k;
            }
            let mut counts = vec![0; k];
            for &l in &labels {
                counts[l] += 1;
            }
            if counts.contains(&0) {
                continue;
            }
            // each cluster contributes sum of squared deviations from its mean
            let mut obj = 0.0;
            for cl in 0..k {
                let rows: Vec<usize> = (0..n).filter(|&i| labels[i] == cl).collect();
                for dim in 0..points.ncols() {
                    let vals: Vec<f64> = rows.iter().map(|&i| points[[i, dim]]).collect();
                    let mean = vals.iter().sum::<f64>() / vals.len() as f64;
                    obj += vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>();
                }
            }
            best = best.min(obj);
        }
        best
    }

    #[test]
    fn two_pairs_brute_force() {
        let pts = array![[0.0, 0.0], [0.0, 1.0], [10.0, 0.0], [10.0, 1.0]];
        let oracle = brute_force_objective(pts.view(), 2);
        assert!((oracle - 1.0).abs() < 1e-12);
        let c = kmeans(pts.view(), 2, 7).unwrap();
        assert!((c.objective - oracle).abs() < 1e-12);
        let mut cents: Vec<(f64, f64)> = c.centroids.outer_iter().map(|r| (r[0], r[1])).collect();
        cents.sort_by(|a, b| a.0.total_cmp(&b.0));
        assert_eq!(cents, vec![(0.0, 0.5), (10.0, 0.5)]);
    }

    #[test]
    fn k_equals_n() {
        let pts = array![[0.0], [3.0], [7.0], [8.5]];
        let c = kmeans(pts.view(), 4, 1).unwrap();
        assert_eq!(c.objective, 0.0);
        let mut sorted = c.assignment.clone();
        sorted.sort();
        assert_eq!(sorted, vec![0, 1, 2, 3]);
    }

    #[test]
    fn identical_points_repaired() {
        let pts = array![[2.0, 2.0], [2.0, 2.0], [2.0, 2.0]];
        let c = kmeans(pts.view(), 2, 3).unwrap();
        assert_eq!(c.objective, 0.0);
        assert_eq!(c.k(), 2);
        assert!(c.members().iter().all(|m| !m.is_empty()));
        for row in c.centroids.outer_iter() {
            assert_eq!(row.to_vec(), vec![2.0, 2.0]);
        }
    }

    #[test]
    fn bad_k() {
        let pts = array![[0.0], [1.0]];
        assert!(kmeans(pts.view(), 0, 0).is_err());
        assert!(kmeans(pts.view(), 3, 0).is_err());
    }

    #[test]
    fn knn_cases() {
        let cands = array![[1.0, 0.0], [5.0, 0.0]];
        let q = array![0.0, 0.0];
        assert_eq!(knn(1, q.view(), cands.view()).unwrap(), vec![0]);
        assert_eq!(knn(2, q.view(), cands.view()).unwrap(), vec![0, 1]);
        assert!(knn(3, q.view(), cands.view()).is_err());
        let tie = array![[0.0, 1.0], [1.0, 0.0]];
        assert_eq!(knn(1, q.view(), tie.view()).unwrap(), vec![0]);
    }

    #[test]
    fn nearest_node_cases() {
        let z = array![[0.0, 0.0], [1.0, 1.0], [3.0, 0.0], [-1.0, -1.0]];
        let c = array![1.0, 1.0];
        let none = vec![false; 4];
        assert_eq!(nearest_node(c.view(), z.view(), &none).unwrap(), 1);
        let ex = vec![false, true, false, false];
        assert_eq!(nearest_node(c.view(), z.view(), &ex).unwrap(), 0);
        // with row 0 excluded, rows 1 and 3 are equidistant from the origin
        let origin = array![0.0, 0.0];
        let ex0 = vec![true, false, false, false];
        assert_eq!(nearest_node(origin.view(), z.view(), &ex0).unwrap(), 1);
        assert!(nearest_node(c.view(), z.view(), &[true; 4]).is_err());
    }

    #[test]
    fn deterministic() {
        let mut rng = SplitMix64::new(5);
        let pts = Array2::from_shape_fn((40, 3), |_| rng.uniform(-1.0, 1.0));
        assert_eq!(
            kmeans(pts.view(), 5, 11).unwrap(),
            kmeans(pts.view(), 5, 11).unwrap()
        );
    }

    fn arb_points() -> impl Strategy<Value = (Array2<f64>, usize)> {
        (2usize..=8, 1usize..=3, 1usize..=3).prop_flat_map(|(n, d, k)| {
            proptest::collection::vec(-5.0f64..5.0, n * d)
                .prop_map(move |v| (Array2::from_shape_vec((n, d), v).unwrap(), k.min(n)))
        })
    }

    proptest! {
        #[test]
        fn partition_and_monotone((pts, k) in arb_points(), seed in any::<u64>()) {
            let c = kmeans(pts.view(), k, seed).unwrap();
            prop_assert_eq!(c.assignment.len(), pts.nrows());
            prop_assert!(c.assignment.iter().all(|&a| a < k));
            prop_assert!(c.members().iter().all(|m| !m.is_empty()));
            for w in c.history.windows(2) {
                prop_assert!(w[1] <= w[0] + 1e-12 * w[0].abs().max(1.0));
            }
        }

        #[test]
        // The 1.10x quality bound is statistical, not universal; only the
        // lower bound holds for every input.
        fn never_beats_optimum((pts, k) in arb_points(), seed in any::<u64>()) {
            let c = kmeans(pts.view(), k, seed).unwrap();
            let opt = brute_force_objective(pts.view(), k);
            prop_assert!(c.objective >= opt - 1e-9, "{} vs {}", c.objective, opt);
        }
    }
}
