//! Held-out logistic probe measuring how much group information embeddings keep.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::mlp::sigmoid;
use crate::error::{Error, Result};
use crate::graph::Group;
use crate::rng::SplitMix64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeParams {
    /// Share of each group used for fitting; the rest is held out.
    pub train_fraction: f64,
    pub iterations: usize,
    pub learning_rate: f64,
    pub l2: f64,
    pub seed: u64,
}

impl Default for ProbeParams {
    fn default() -> Self {
        Self {
            train_fraction: 0.5,
            iterations: 2000,
            learning_rate: 0.5,
            l2: 1e-3,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeResult {
    /// Mean of the per-group recall on the held-out rows; 0.5 is chance.
    pub balanced_accuracy: f64,
    pub accuracy: f64,
    pub train_size: usize,
    pub test_size: usize,
}

/// Fits class-balanced logistic regression on standardized features of a
/// stratified split of `z` and scores it on the remaining rows.
pub fn probe_accuracy(
    z: ArrayView2<'_, f64>,
    labels: &[Group],
    params: &ProbeParams,
) -> Result<ProbeResult> {
    if labels.len() != z.nrows() {
        return Err(Error::Dimension {
            expected: z.nrows(),
            got: labels.len(),
        });
    }
    if !(params.train_fraction > 0.0 && params.train_fraction < 1.0) {
        return Err(Error::InvalidParam(
            "probe train_fraction must lie in (0, 1)".into(),
        ));
    }
    let mut rng = SplitMix64::new(params.seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for group in [Group::A, Group::B] {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == group).collect();
        if idx.len() < 2 {
            return Err(Error::EmptyGroup {
                attr: "probe".into(),
                group: group.as_char(),
            });
        }
        rng.shuffle(&mut idx);
        let cut =
            ((idx.len() as f64 * params.train_fraction).round() as usize).clamp(1, idx.len() - 1);
        train.extend_from_slice(&idx[..cut]);
        test.extend_from_slice(&idx[cut..]);
    }
    train.sort_unstable();
    test.sort_unstable();

    let xtr = z.select(Axis(0), &train);
    let mean = xtr.mean_axis(Axis(0)).expect("non-empty");
    let std = xtr
        .std_axis(Axis(0), 0.0)
        .mapv(|s| if s > 1e-12 { s } else { 1.0 });
    let standardize = |m: Array2<f64>| (m - &mean) / &std;
    let xtr = standardize(xtr);
    let xte = standardize(z.select(Axis(0), &test));
    let target = |idx: &[usize]| -> Array1<f64> {
        idx.iter()
            .map(|&i| if labels[i] == Group::A { 1.0 } else { 0.0 })
            .collect()
    };
    let ytr = target(&train);
    let yte = target(&test);

    let pos = ytr.sum();
    let neg = ytr.len() as f64 - pos;
    let weights = ytr.mapv(|y| if y == 1.0 { 0.5 / pos } else { 0.5 / neg });
    let mut w = Array1::<f64>::zeros(z.ncols());
    let mut b = 0.0;
    for _ in 0..params.iterations {
        let p = (xtr.dot(&w) + b).mapv(sigmoid);
        let r = (&p - &ytr) * &weights;
        let gw = xtr.t().dot(&r) + &w * params.l2;
        let gb = r.sum();
        w.scaled_add(-params.learning_rate, &gw);
        b -= params.learning_rate * gb;
    }

    let pred = (xte.dot(&w) + b).mapv(|s| if s >= 0.0 { 1.0 } else { 0.0 });
    let mut hits = [0usize; 2];
    let mut totals = [0usize; 2];
    for (p, y) in pred.iter().zip(yte.iter()) {
        let c = *y as usize;
        totals[c] += 1;
        if p == y {
            hits[c] += 1;
        }
    }
    Ok(ProbeResult {
        balanced_accuracy: 0.5
            * (hits[0] as f64 / totals[0] as f64 + hits[1] as f64 / totals[1] as f64),
        accuracy: (hits[0] + hits[1]) as f64 / test.len() as f64,
        train_size: train.len(),
        test_size: test.len(),
    })
}
