//! Adversarially trained graph embeddings.
//!
//! An autoencoder maps adjacency rows to `d`-dimensional vectors. One critic
//! per sensitive attribute scores embeddings; its gap (mean score of group A
//! minus mean score of group B) estimates how far apart the two groups sit.
//! Critics are trained to widen their gap, the encoder to reconstruct its
//! input while narrowing every gap in proportion to that attribute's β.

mod adam;
mod checkpoint;
mod loss;
mod mlp;
mod probe;
mod train;

use std::collections::BTreeMap;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

pub use adam::{Adam, AdamParams};
pub use checkpoint::{load_checkpoint, save_checkpoint, write_loss_log, Checkpoint};
pub use loss::{
    bce_from_logits, critic_gap, critic_loss, reconstruction_loss, ReconstructionLoss, PROB_CLAMP,
};
pub use mlp::{
    sigmoid, Activation, Dense, ForwardCache, GradientOf, Gradients, LayerGrad, Mlp, MlpSpec,
};
pub use probe::{probe_accuracy, ProbeParams, ProbeResult};
pub use train::{
    adversarial_stage, adversarial_train, composite_gradients, continue_autoencoder,
    critic_gradients, objective, pretrain_autoencoder, pretrain_critics, train_fair_embedding,
    train_plain_embedding, BatchLoss, GroupLabels, StratifiedBatcher,
};

use crate::error::{Error, Result};
use crate::graph::FeatureMatrix;
use crate::rng::SplitMix64;

/// Hyperparameters for every training phase. Missing JSON fields take defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub embedding_dim: usize,
    pub encoder_hidden: Vec<usize>,
    pub critic_hidden: Vec<usize>,
    pub critic_activation: Activation,
    pub reconstruction: ReconstructionLoss,
    pub batch_size: usize,
    pub embedder_lr: f64,
    pub critic_lr: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub pretrain_epochs: usize,
    pub critic_pretrain_epochs: usize,
    pub adversarial_epochs: usize,
    /// Critic updates after each embedder update.
    pub critic_steps: usize,
    pub clip: f64,
    /// β for attributes absent from `betas`.
    pub beta: f64,
    pub betas: BTreeMap<String, f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            embedding_dim: 8,
            encoder_hidden: vec![128, 64],
            critic_hidden: vec![16],
            critic_activation: Activation::LeakyRelu,
            reconstruction: ReconstructionLoss::CrossEntropy,
            batch_size: 32,
            embedder_lr: 1e-3,
            critic_lr: 5e-4,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            pretrain_epochs: 100,
            critic_pretrain_epochs: 20,
            adversarial_epochs: 200,
            critic_steps: 5,
            clip: 0.05,
            beta: 1.0,
            betas: BTreeMap::new(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.embedding_dim == 0 {
            return bad("embedding_dim must be positive".into());
        }
        if self.encoder_hidden.contains(&0) || self.critic_hidden.contains(&0) {
            return bad("hidden layer widths must be positive".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        for (name, v) in [
            ("embedder_lr", self.embedder_lr),
            ("critic_lr", self.critic_lr),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("{name} must be a positive number, got {v}"));
            }
        }
        for (name, v) in [
            ("adam_beta1", self.adam_beta1),
            ("adam_beta2", self.adam_beta2),
        ] {
            if !(0.0..1.0).contains(&v) {
                return bad(format!("{name} must lie in [0, 1), got {v}"));
            }
        }
        if !(self.adam_eps.is_finite() && self.adam_eps > 0.0) {
            return bad(format!("adam_eps must be positive, got {}", self.adam_eps));
        }
        if !(self.clip.is_finite() && self.clip > 0.0) {
            return bad(format!("clip must be positive, got {}", self.clip));
        }
        for (name, b) in std::iter::once(("beta", &self.beta))
            .chain(self.betas.iter().map(|(k, v)| (k.as_str(), v)))
        {
            if !(b.is_finite() && *b >= 0.0) {
                return bad(format!(
                    "β for {name} must be finite and non-negative, got {b}"
                ));
            }
        }
        Ok(())
    }

    pub fn beta_for(&self, attribute: &str) -> f64 {
        self.betas.get(attribute).copied().unwrap_or(self.beta)
    }

    pub fn embedder_adam(&self) -> AdamParams {
        AdamParams {
            lr: self.embedder_lr,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            eps: self.adam_eps,
        }
    }

    pub fn critic_adam(&self) -> AdamParams {
        AdamParams {
            lr: self.critic_lr,
            ..self.embedder_adam()
        }
    }

    fn encoder_spec(&self, n: usize) -> MlpSpec {
        let mut sizes = vec![n];
        sizes.extend(&self.encoder_hidden);
        sizes.push(self.embedding_dim);
        MlpSpec::new(sizes, Activation::Relu, Activation::Identity)
    }

    fn decoder_spec(&self, n: usize) -> MlpSpec {
        let mut sizes = vec![self.embedding_dim];
        sizes.extend(self.encoder_hidden.iter().rev());
        sizes.push(n);
        MlpSpec::new(sizes, Activation::Relu, Activation::Sigmoid)
    }

    fn critic_spec(&self) -> MlpSpec {
        let mut sizes = vec![self.embedding_dim];
        sizes.extend(&self.critic_hidden);
        sizes.push(1);
        MlpSpec::new(sizes, self.critic_activation, Activation::Identity)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Critic {
    pub attribute: String,
    pub beta: f64,
    pub network: Mlp,
}

/// Per-epoch training record. Gaps are blank outside adversarial training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub recon: f64,
    pub gaps: Vec<Option<f64>>,
    pub embedder_total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingModel {
    pub encoder: Mlp,
    pub decoder: Mlp,
    pub critics: Vec<Critic>,
    pub reconstruction: ReconstructionLoss,
    pub clip: f64,
    pub training_log: Vec<EpochLog>,
    /// Embedder epochs completed across all phases.
    pub epoch: usize,
    /// State of the batching stream after the last completed phase.
    pub rng_state: u64,
}

impl EmbeddingModel {
    /// Fresh weights for an `n`-node graph with one critic per attribute.
    pub fn init(
        n: usize,
        attributes: &[String],
        config: &TrainConfig,
        rng: &mut SplitMix64,
    ) -> Result<Self> {
        config.validate()?;
        if n == 0 {
            return Err(Error::InvalidParam("cannot embed an empty graph".into()));
        }
        let encoder = Mlp::init(config.encoder_spec(n), rng)?;
        let decoder = Mlp::init(config.decoder_spec(n), rng)?;
        let mut critics = Vec::with_capacity(attributes.len());
        for attribute in attributes {
            let mut network = Mlp::init(config.critic_spec(), rng)?;
            network.clip(config.clip);
            critics.push(Critic {
                attribute: attribute.clone(),
                beta: config.beta_for(attribute),
                network,
            });
        }
        Ok(Self {
            encoder,
            decoder,
            critics,
            reconstruction: config.reconstruction,
            clip: config.clip,
            training_log: Vec::new(),
            epoch: 0,
            rng_state: rng.state(),
        })
    }

    pub fn n(&self) -> usize {
        self.encoder.input_dim()
    }

    pub fn dim(&self) -> usize {
        self.encoder.output_dim()
    }

    pub fn critic(&self, attribute: &str) -> Option<&Critic> {
        self.critics.iter().find(|c| c.attribute == attribute)
    }

    /// Checks the dimension invariants tying the networks together.
    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        let n = self.n();
        let check = |expected: usize, got: usize| {
            if expected == got {
                Ok(())
            } else {
                Err(Error::Dimension { expected, got })
            }
        };
        check(d, self.decoder.input_dim())?;
        check(n, self.decoder.output_dim())?;
        for c in &self.critics {
            check(d, c.network.input_dim())?;
            check(1, c.network.output_dim())?;
            if c.network.max_abs_param() > self.clip {
                return Err(Error::InvalidParam(format!(
                    "critic for {} exceeds the clip bound {}",
                    c.attribute, self.clip
                )));
            }
        }
        Ok(())
    }
}

/// Per-node embedding vectors, one row per node id.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix(Array2<f64>);

impl EmbeddingMatrix {
    pub fn new(z: Array2<f64>) -> Result<Self> {
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::Diverged {
                phase: "embed",
                epoch: 0,
            });
        }
        Ok(Self(z))
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.0.view()
    }

    pub fn as_array(&self) -> &Array2<f64> {
        &self.0
    }

    pub fn n(&self) -> usize {
        self.0.nrows()
    }

    pub fn dim(&self) -> usize {
        self.0.ncols()
    }

    /// Writes `node_id,z_0,...,z_{d-1}`; values use shortest round-trip formatting.
    pub fn write_csv(
        &self,
        path: &std::path::Path,
        ids: Option<&crate::graph::IdMap>,
    ) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["node_id".to_string()];
        header.extend((0..self.dim()).map(|j| format!("z_{j}")));
        w.write_record(&header)?;
        for (u, row) in self.0.rows().into_iter().enumerate() {
            let id = match ids.and_then(|m| m.original(u)) {
                Some(s) => s.to_string(),
                None => u.to_string(),
            };
            let mut rec = vec![id];
            rec.extend(row.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Reads a file written by [`EmbeddingMatrix::write_csv`] with dense ids `0..n`.
    pub fn read_csv(path: &std::path::Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let header = r.headers()?.clone();
        if header.get(0) != Some("node_id") || header.len() < 2 {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: 1,
                msg: "expected header node_id,z_0,...".into(),
            });
        }
        let d = header.len() - 1;
        let mut rows: Vec<(usize, Vec<f64>)> = Vec::new();
        for (i, rec) in r.records().enumerate() {
            let rec = rec?;
            let line = i + 2;
            let parse_err = |msg: String| Error::Parse {
                path: path.to_path_buf(),
                line,
                msg,
            };
            let id: usize =
                rec.get(0).unwrap_or("").trim().parse().map_err(|_| {
                    parse_err(format!("bad node id {:?}", rec.get(0).unwrap_or("")))
                })?;
            let vals = rec
                .iter()
                .skip(1)
                .map(|s| {
                    s.trim()
                        .parse::<f64>()
                        .map_err(|_| parse_err(format!("bad value {s:?}")))
                })
                .collect::<Result<Vec<_>>>()?;
            rows.push((id, vals));
        }
        rows.sort_by_key(|(id, _)| *id);
        let n = rows.len();
        let mut z = Array2::zeros((n, d));
        for (expected, (id, vals)) in rows.into_iter().enumerate() {
            if id != expected {
                return Err(Error::MissingNode(format!(
                    "embedding row for node {expected}"
                )));
            }
            for (j, v) in vals.into_iter().enumerate() {
                z[[id, j]] = v;
            }
        }
        Self::new(z)
    }
}

/// Encoder image of every adjacency row.
pub fn embed(model: &EmbeddingModel, x: &FeatureMatrix) -> Result<EmbeddingMatrix> {
    let z = model.encoder.predict(x.as_array().view())?;
    EmbeddingMatrix::new(z)
}
