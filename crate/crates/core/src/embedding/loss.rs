//! Reconstruction and critic losses with their gradients.

use ndarray::{Array1, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use super::mlp::{ForwardCache, GradientOf};
use crate::error::{Error, Result};
use crate::graph::Group;

/// Probabilities are clamped to `[PROB_CLAMP, 1 - PROB_CLAMP]` before taking logs.
pub const PROB_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReconstructionLoss {
    /// Mean binary cross-entropy against the sigmoid decoder output.
    #[default]
    CrossEntropy,
    /// Mean squared error against the decoder output.
    SquaredError,
}

impl ReconstructionLoss {
    /// Loss over a decoder forward pass plus the gradient handed to the decoder's
    /// backward pass. Cross-entropy uses the fused sigmoid gradient `(p - t) / count`
    /// at the logits, so it expects a sigmoid output layer.
    pub fn evaluate(
        self,
        decoder: &ForwardCache,
        target: ArrayView2<'_, f64>,
    ) -> Result<(f64, Array2<f64>, GradientOf)> {
        let out = decoder.output();
        if out.dim() != target.dim() {
            return Err(Error::Dimension {
                expected: target.len(),
                got: out.len(),
            });
        }
        let count = out.len() as f64;
        match self {
            ReconstructionLoss::CrossEntropy => {
                let loss = bce_from_logits(decoder.output_pre_activation().view(), target);
                let grad = (out - &target) / count;
                Ok((loss, grad, GradientOf::OutputPreActivation))
            }
            ReconstructionLoss::SquaredError => {
                let diff = out - &target;
                let loss = diff.iter().map(|d| d * d).sum::<f64>() / count;
                Ok((loss, diff * (2.0 / count), GradientOf::Output))
            }
        }
    }
}

/// Mean binary cross-entropy of probabilities `output` against binary `target`.
pub fn reconstruction_loss(output: ArrayView2<'_, f64>, target: ArrayView2<'_, f64>) -> f64 {
    let total: f64 = output
        .iter()
        .zip(target.iter())
        .map(|(&p, &t)| {
            let p = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
            -(t * p.ln() + (1.0 - t) * (1.0 - p).ln())
        })
        .sum();
    total / output.len() as f64
}

/// Mean binary cross-entropy computed from logits without forming probabilities.
pub fn bce_from_logits(logits: ArrayView2<'_, f64>, target: ArrayView2<'_, f64>) -> f64 {
    let total: f64 = logits
        .iter()
        .zip(target.iter())
        .map(|(&s, &t)| s.max(0.0) - s * t + (-s.abs()).exp().ln_1p())
        .sum();
    total / logits.len() as f64
}

/// Mean critic score over group-A rows minus mean over group-B rows.
pub fn critic_loss(scores_a: &[f64], scores_b: &[f64]) -> Result<f64> {
    if scores_a.is_empty() || scores_b.is_empty() {
        return Err(Error::EmptyGroup {
            attr: String::new(),
            group: if scores_a.is_empty() { 'A' } else { 'B' },
        });
    }
    let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    Ok(mean(scores_a) - mean(scores_b))
}

/// Gap of a `(batch, 1)` score column split by `labels`, plus its gradient
/// with respect to each score (`1/|A|` on A rows, `-1/|B|` on B rows).
pub fn critic_gap(scores: ArrayView2<'_, f64>, labels: &[Group]) -> Result<(f64, Array2<f64>)> {
    let col = scores.column(0);
    let (na, nb) = labels.iter().fold((0usize, 0usize), |(a, b), g| match g {
        Group::A => (a + 1, b),
        Group::B => (a, b + 1),
    });
    let a: Vec<f64> = col
        .iter()
        .zip(labels)
        .filter(|(_, g)| **g == Group::A)
        .map(|(s, _)| *s)
        .collect();
    let b: Vec<f64> = col
        .iter()
        .zip(labels)
        .filter(|(_, g)| **g == Group::B)
        .map(|(s, _)| *s)
        .collect();
    let gap = critic_loss(&a, &b)?;
    let grad: Array1<f64> = labels
        .iter()
        .map(|g| match g {
            Group::A => 1.0 / na as f64,
            Group::B => -1.0 / nb as f64,
        })
        .collect();
    Ok((gap, grad.insert_axis(ndarray::Axis(1))))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn half_everywhere_is_ln2() {
        let out = Array2::from_elem((3, 4), 0.5);
        let t = array![
            [1.0, 0.0, 0.0, 1.0],
            [0.0, 0.0, 0.0, 0.0],
            [1.0, 1.0, 1.0, 1.0]
        ];
        assert!((reconstruction_loss(out.view(), t.view()) - 2f64.ln()).abs() < 1e-15);
        let logits = Array2::zeros((3, 4));
        assert!((bce_from_logits(logits.view(), t.view()) - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn single_entry_closed_form() {
        let l = reconstruction_loss(array![[0.9]].view(), array![[1.0]].view());
        assert!((l + 0.9f64.ln()).abs() < 1e-15);
        assert!((l - 0.1054).abs() < 1e-4);
    }

    #[test]
    fn perfect_output_near_zero_and_finite() {
        let t = array![[1.0, 0.0]];
        let l = reconstruction_loss(t.view(), t.view());
        assert!(l.is_finite() && l < 1e-10);
        let l = bce_from_logits(array![[800.0, -800.0]].view(), t.view());
        assert!(l.is_finite() && l < 1e-10);
    }

    #[test]
    fn logits_and_probability_forms_agree() {
        let logits = array![[-2.0, 0.3, 4.0]];
        let t = array![[0.0, 1.0, 1.0]];
        let p = logits.mapv(super::super::mlp::sigmoid);
        let a = reconstruction_loss(p.view(), t.view());
        let b = bce_from_logits(logits.view(), t.view());
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn critic_loss_examples() {
        assert_eq!(critic_loss(&[2.0], &[1.0, 3.0]).unwrap(), 0.0);
        assert_eq!(critic_loss(&[0.7, 0.7], &[0.7]).unwrap(), 0.0);
        assert_eq!(critic_loss(&[1.0, 5.0], &[5.0, 1.0]).unwrap(), 0.0);
        assert!(critic_loss(&[], &[1.0]).is_err());
    }

    #[test]
    fn gap_gradient_weights() {
        let (gap, grad) = critic_gap(
            array![[2.0], [1.0], [3.0]].view(),
            &[Group::A, Group::B, Group::B],
        )
        .unwrap();
        assert_eq!(gap, 0.0);
        assert_eq!(grad, array![[1.0], [-0.5], [-0.5]]);
    }
}
