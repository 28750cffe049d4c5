//! Training loops: autoencoder pretraining, critic pretraining and the
//! adversarial co-training of embedder and critics.

use std::collections::BTreeMap;

use ndarray::{ArrayView2, Axis};

use super::adam::Adam;
use super::loss::critic_gap;
use super::mlp::{GradientOf, Gradients, Mlp};
use super::{embed, EmbeddingMatrix, EmbeddingModel, EpochLog, TrainConfig};
use crate::error::{Error, Result};
use crate::graph::{feature_matrix, AttributedGraph, FeatureMatrix, Group};
use crate::rng::{derive_seed, SplitMix64};

const INIT_STREAM: u64 = 0;
const BATCH_STREAM: u64 = 1;
const CRITIC_STREAM: u64 = 2;

/// Binary labels of every node for one sensitive attribute.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupLabels {
    pub attribute: String,
    pub labels: Vec<Group>,
}

impl GroupLabels {
    pub fn from_graph(g: &AttributedGraph, attributes: &[String]) -> Result<Vec<Self>> {
        attributes
            .iter()
            .map(|a| {
                Ok(Self {
                    attribute: a.clone(),
                    labels: g.labels(a)?.to_vec(),
                })
            })
            .collect()
    }

    fn require_both(&self) -> Result<()> {
        for group in [Group::A, Group::B] {
            if !self.labels.contains(&group) {
                return Err(Error::EmptyGroup {
                    attr: self.attribute.clone(),
                    group: group.as_char(),
                });
            }
        }
        Ok(())
    }
}

/// Mini-batches stratified on the joint labels of all attributes.
///
/// Each stratum is shuffled and dealt round-robin across `ceil(n / batch_size)`
/// batches, so every batch holds roughly proportional shares. A batch still
/// missing a group that exists gets one random member of that group appended.
#[derive(Debug, Clone)]
pub struct StratifiedBatcher {
    strata: Vec<Vec<usize>>,
    members: Vec<[Vec<usize>; 2]>,
    labels: Vec<Vec<Group>>,
    batches: usize,
}

impl StratifiedBatcher {
    pub fn new(n: usize, groups: &[GroupLabels], batch_size: usize) -> Result<Self> {
        if batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        for gl in groups {
            if gl.labels.len() != n {
                return Err(Error::Dimension {
                    expected: n,
                    got: gl.labels.len(),
                });
            }
        }
        let mut strata: BTreeMap<Vec<Group>, Vec<usize>> = BTreeMap::new();
        for u in 0..n {
            strata
                .entry(groups.iter().map(|gl| gl.labels[u]).collect())
                .or_default()
                .push(u);
        }
        let members = groups
            .iter()
            .map(|gl| {
                let pick = |want| (0..n).filter(|&u| gl.labels[u] == want).collect();
                [pick(Group::A), pick(Group::B)]
            })
            .collect();
        Ok(Self {
            strata: strata.into_values().collect(),
            members,
            labels: groups.iter().map(|gl| gl.labels.clone()).collect(),
            batches: n.div_ceil(batch_size).max(1),
        })
    }

    pub fn epoch(&self, rng: &mut SplitMix64) -> Vec<Vec<usize>> {
        let mut batches = vec![Vec::new(); self.batches];
        let mut slot = 0;
        for stratum in &self.strata {
            let mut s = stratum.clone();
            rng.shuffle(&mut s);
            for u in s {
                batches[slot % self.batches].push(u);
                slot += 1;
            }
        }
        for batch in &mut batches {
            for (k, labels) in self.labels.iter().enumerate() {
                for (gi, group) in [Group::A, Group::B].into_iter().enumerate() {
                    let pool = &self.members[k][gi];
                    if !pool.is_empty() && !batch.iter().any(|&u| labels[u] == group) {
                        batch.push(pool[rng.below(pool.len() as u64) as usize]);
                    }
                }
            }
        }
        rng.shuffle(&mut batches);
        batches
    }

    /// Labels of attribute `k` restricted to `batch`.
    pub fn batch_labels(&self, k: usize, batch: &[usize]) -> Vec<Group> {
        batch.iter().map(|&u| self.labels[k][u]).collect()
    }
}

/// Loss components of one embedder evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchLoss {
    pub recon: f64,
    pub gaps: Vec<Option<f64>>,
    /// `recon + Σ β_k · gap_k` when adversarial, otherwise `recon`.
    pub total: f64,
}

/// Embedder objective on one batch and its gradients for encoder and decoder.
///
/// `critic_labels[k]` gives the batch labels seen by critic `k`. With
/// `adversarial` unset the critics are ignored and the objective is the
/// reconstruction loss alone.
pub fn composite_gradients(
    model: &EmbeddingModel,
    x: ArrayView2<'_, f64>,
    critic_labels: &[Vec<Group>],
    adversarial: bool,
) -> Result<(BatchLoss, Gradients, Gradients)> {
    let enc = model.encoder.forward(x)?;
    let z = enc.output();
    let dec = model.decoder.forward(z.view())?;
    let (recon, upstream, of) = model.reconstruction.evaluate(&dec, x)?;
    let dec_grads = model.decoder.backward(&dec, upstream.view(), of)?;
    let mut dz = dec_grads.input.clone();
    let mut total = recon;
    let mut gaps = vec![None; model.critics.len()];
    if adversarial {
        if critic_labels.len() != model.critics.len() {
            return Err(Error::Dimension {
                expected: model.critics.len(),
                got: critic_labels.len(),
            });
        }
        for (k, critic) in model.critics.iter().enumerate() {
            let cache = critic.network.forward(z.view())?;
            let (gap, dgap) = critic_gap(cache.output().view(), &critic_labels[k])?;
            gaps[k] = Some(gap);
            // a zero weight must leave the embedder untouched bit for bit
            if critic.beta != 0.0 {
                total += critic.beta * gap;
                let g = critic.network.backward(
                    &cache,
                    (dgap * critic.beta).view(),
                    GradientOf::Output,
                )?;
                dz += &g.input;
            }
        }
    }
    let enc_grads = model
        .encoder
        .backward(&enc, dz.view(), GradientOf::Output)?;
    Ok((BatchLoss { recon, gaps, total }, enc_grads, dec_grads))
}

/// Embedder objective on `x` without gradients.
pub fn objective(
    model: &EmbeddingModel,
    x: ArrayView2<'_, f64>,
    critic_labels: &[Vec<Group>],
    adversarial: bool,
) -> Result<BatchLoss> {
    let z = model.encoder.predict(x)?;
    let dec = model.decoder.forward(z.view())?;
    let (recon, _, _) = model.reconstruction.evaluate(&dec, x)?;
    let mut total = recon;
    let mut gaps = vec![None; model.critics.len()];
    if adversarial {
        for (k, critic) in model.critics.iter().enumerate() {
            let scores = critic.network.predict(z.view())?;
            let labels = critic_labels.get(k).ok_or(Error::Dimension {
                expected: model.critics.len(),
                got: critic_labels.len(),
            })?;
            let (gap, _) = critic_gap(scores.view(), labels)?;
            gaps[k] = Some(gap);
            if critic.beta != 0.0 {
                total += critic.beta * gap;
            }
        }
    }
    Ok(BatchLoss { recon, gaps, total })
}

/// Critic gap on `z` and its gradient with respect to the critic's parameters.
pub fn critic_gradients(
    critic: &Mlp,
    z: ArrayView2<'_, f64>,
    labels: &[Group],
) -> Result<(f64, Gradients)> {
    let cache = critic.forward(z)?;
    let (gap, dgap) = critic_gap(cache.output().view(), labels)?;
    let grads = critic.backward(&cache, dgap.view(), GradientOf::Output)?;
    Ok((gap, grads))
}

fn negate(mut g: Gradients) -> Gradients {
    for l in &mut g.layers {
        l.weights.mapv_inplace(|v| -v);
        l.bias.mapv_inplace(|v| -v);
    }
    g
}

/// One ascent step on the critic's gap followed by clipping.
fn critic_ascent(
    critic: &mut Mlp,
    adam: &mut Adam,
    z: ArrayView2<'_, f64>,
    labels: &[Group],
    clip: f64,
) -> Result<f64> {
    let (gap, grads) = critic_gradients(critic, z, labels)?;
    adam.step(critic, &negate(grads));
    critic.clip(clip);
    Ok(gap)
}

fn check_inputs(model: &EmbeddingModel, x: &FeatureMatrix, groups: &[GroupLabels]) -> Result<()> {
    if x.as_array().ncols() != model.n() || x.n() != model.n() {
        return Err(Error::Dimension {
            expected: model.n(),
            got: x.as_array().ncols(),
        });
    }
    for gl in groups {
        if gl.labels.len() != model.n() {
            return Err(Error::Dimension {
                expected: model.n(),
                got: gl.labels.len(),
            });
        }
    }
    Ok(())
}

/// Index of each critic's attribute within `groups`.
fn critic_slots(model: &EmbeddingModel, groups: &[GroupLabels]) -> Result<Vec<usize>> {
    model
        .critics
        .iter()
        .map(|c| {
            groups
                .iter()
                .position(|gl| gl.attribute == c.attribute)
                .ok_or_else(|| Error::UnknownAttribute(c.attribute.clone()))
        })
        .collect()
}

fn run_epochs(
    model: &mut EmbeddingModel,
    x: &FeatureMatrix,
    groups: &[GroupLabels],
    config: &TrainConfig,
    epochs: usize,
    rng: &mut SplitMix64,
    adversarial: bool,
) -> Result<()> {
    check_inputs(model, x, groups)?;
    let phase = if adversarial {
        "adversarial"
    } else {
        "pretrain"
    };
    let batcher = StratifiedBatcher::new(model.n(), groups, config.batch_size)?;
    let slots = if adversarial {
        critic_slots(model, groups)?
    } else {
        Vec::new()
    };
    let mut enc_adam = Adam::new(&model.encoder, config.embedder_adam());
    let mut dec_adam = Adam::new(&model.decoder, config.embedder_adam());
    let mut critic_adams: Vec<Adam> = if adversarial {
        model
            .critics
            .iter()
            .map(|c| Adam::new(&c.network, config.critic_adam()))
            .collect()
    } else {
        Vec::new()
    };
    let xs = x.as_array();
    let all_labels: Vec<Vec<Group>> = slots.iter().map(|&k| groups[k].labels.clone()).collect();
    for _ in 0..epochs {
        for batch in batcher.epoch(rng) {
            let xb = xs.select(Axis(0), &batch);
            let labels: Vec<Vec<Group>> = slots
                .iter()
                .map(|&k| batcher.batch_labels(k, &batch))
                .collect();
            let (_, enc_grads, dec_grads) =
                composite_gradients(model, xb.view(), &labels, adversarial)?;
            enc_adam.step(&mut model.encoder, &enc_grads);
            dec_adam.step(&mut model.decoder, &dec_grads);
            if adversarial {
                let z = model.encoder.predict(xb.view())?;
                for (k, critic) in model.critics.iter_mut().enumerate() {
                    for _ in 0..config.critic_steps {
                        critic_ascent(
                            &mut critic.network,
                            &mut critic_adams[k],
                            z.view(),
                            &labels[k],
                            model.clip,
                        )?;
                    }
                }
            }
        }
        model.epoch += 1;
        let loss = objective(model, xs.view(), &all_labels, adversarial)?;
        if !(loss.recon.is_finite() && loss.total.is_finite()) {
            return Err(Error::Diverged {
                phase,
                epoch: model.epoch,
            });
        }
        model.training_log.push(EpochLog {
            epoch: model.epoch,
            recon: loss.recon,
            gaps: loss.gaps,
            embedder_total: loss.total,
        });
    }
    model.rng_state = rng.state();
    Ok(())
}

/// Initializes a model (one untrained critic per entry of `groups`) and trains
/// the autoencoder for `config.pretrain_epochs` epochs.
pub fn pretrain_autoencoder(
    x: &FeatureMatrix,
    groups: &[GroupLabels],
    config: &TrainConfig,
    seed: u64,
) -> Result<EmbeddingModel> {
    let attributes: Vec<String> = groups.iter().map(|g| g.attribute.clone()).collect();
    let mut init_rng = SplitMix64::new(derive_seed(seed, INIT_STREAM));
    let model = EmbeddingModel::init(x.n(), &attributes, config, &mut init_rng)?;
    continue_autoencoder(model, x, groups, config, config.pretrain_epochs, seed)
}

/// Plain reconstruction training of an existing model for `epochs` more epochs.
pub fn continue_autoencoder(
    mut model: EmbeddingModel,
    x: &FeatureMatrix,
    groups: &[GroupLabels],
    config: &TrainConfig,
    epochs: usize,
    seed: u64,
) -> Result<EmbeddingModel> {
    config.validate()?;
    let mut rng = SplitMix64::new(derive_seed(seed, BATCH_STREAM));
    run_epochs(&mut model, x, groups, config, epochs, &mut rng, false)?;
    Ok(model)
}

/// Trains every critic to widen its gap on fixed embeddings `z`.
pub fn pretrain_critics(
    mut model: EmbeddingModel,
    z: &EmbeddingMatrix,
    groups: &[GroupLabels],
    config: &TrainConfig,
    seed: u64,
) -> Result<EmbeddingModel> {
    config.validate()?;
    if z.dim() != model.dim() {
        return Err(Error::Dimension {
            expected: model.dim(),
            got: z.dim(),
        });
    }
    let slots = critic_slots(&model, groups)?;
    for &k in &slots {
        groups[k].require_both()?;
    }
    let batcher = StratifiedBatcher::new(z.n(), groups, config.batch_size)?;
    let mut rng = SplitMix64::new(derive_seed(seed, CRITIC_STREAM));
    let mut adams: Vec<Adam> = model
        .critics
        .iter()
        .map(|c| Adam::new(&c.network, config.critic_adam()))
        .collect();
    let clip = model.clip;
    for _ in 0..config.critic_pretrain_epochs {
        for batch in batcher.epoch(&mut rng) {
            let zb = z.view().select(Axis(0), &batch);
            for (i, critic) in model.critics.iter_mut().enumerate() {
                let labels = batcher.batch_labels(slots[i], &batch);
                critic_ascent(&mut critic.network, &mut adams[i], zb.view(), &labels, clip)?;
            }
        }
    }
    Ok(model)
}

/// Adversarial co-training for `config.adversarial_epochs` epochs. Each batch
/// takes one embedder step on `recon + Σ β_k gap_k`, then `critic_steps`
/// ascent steps per critic on the updated embeddings.
pub fn adversarial_train(
    mut model: EmbeddingModel,
    x: &FeatureMatrix,
    groups: &[GroupLabels],
    config: &TrainConfig,
    seed: u64,
) -> Result<EmbeddingModel> {
    config.validate()?;
    let slots = critic_slots(&model, groups)?;
    for &k in &slots {
        groups[k].require_both()?;
    }
    for critic in &mut model.critics {
        critic.beta = config.beta_for(&critic.attribute);
    }
    model.clip = config.clip;
    let mut rng = SplitMix64::new(derive_seed(seed, BATCH_STREAM));
    run_epochs(
        &mut model,
        x,
        groups,
        config,
        config.adversarial_epochs,
        &mut rng,
        true,
    )?;
    Ok(model)
}

/// Full adversarial pipeline on `g`: pretrain, then [`adversarial_stage`].
pub fn train_fair_embedding(
    g: &AttributedGraph,
    attributes: &[String],
    config: &TrainConfig,
    seed: u64,
) -> Result<EmbeddingModel> {
    check_fair_inputs(g, attributes)?;
    let model = train_plain_embedding(g, attributes, config, seed)?;
    adversarial_stage(model, g, attributes, config, seed)
}

fn check_fair_inputs(g: &AttributedGraph, attributes: &[String]) -> Result<Vec<GroupLabels>> {
    if attributes.is_empty() {
        return Err(Error::Config(
            "adversarial training needs at least one attribute".into(),
        ));
    }
    let groups = GroupLabels::from_graph(g, attributes)?;
    for gl in &groups {
        gl.require_both()?;
    }
    Ok(groups)
}

/// Embeds with the pretrained encoder, pretrains the critics on those
/// embeddings, then co-trains. `model` should come from
/// [`train_plain_embedding`] with the same `seed`.
pub fn adversarial_stage(
    model: EmbeddingModel,
    g: &AttributedGraph,
    attributes: &[String],
    config: &TrainConfig,
    seed: u64,
) -> Result<EmbeddingModel> {
    let groups = check_fair_inputs(g, attributes)?;
    let x = feature_matrix(g);
    let z = embed(&model, &x)?;
    let model = pretrain_critics(model, &z, &groups, config, derive_seed(seed, 1))?;
    adversarial_train(model, &x, &groups, config, derive_seed(seed, 2))
}

/// Plain autoencoder with the same architecture, initialization and batches
/// as [`train_fair_embedding`], trained for the pretraining epochs only.
pub fn train_plain_embedding(
    g: &AttributedGraph,
    attributes: &[String],
    config: &TrainConfig,
    seed: u64,
) -> Result<EmbeddingModel> {
    let x = feature_matrix(g);
    let groups = GroupLabels::from_graph(g, attributes)?;
    pretrain_autoencoder(&x, &groups, config, derive_seed(seed, 0))
}
