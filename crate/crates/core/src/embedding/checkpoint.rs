//! JSON checkpoints and per-epoch loss logs.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::mlp::{Activation, Dense, Mlp};
use super::{Critic, EmbeddingModel, EpochLog, ReconstructionLoss};
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "fairim-embedding/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct LayerRecord {
    inputs: usize,
    outputs: usize,
    activation: Activation,
    /// `inputs × outputs`, row-major.
    weights: Vec<f64>,
    bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct NetworkRecord {
    layer_sizes: Vec<usize>,
    layers: Vec<LayerRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CriticRecord {
    attribute: String,
    beta: f64,
    network: NetworkRecord,
}

/// Serialized form of an [`EmbeddingModel`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    format: String,
    reconstruction: ReconstructionLoss,
    clip: f64,
    epoch: usize,
    rng_state: u64,
    encoder: NetworkRecord,
    decoder: NetworkRecord,
    critics: Vec<CriticRecord>,
    training_log: Vec<EpochLog>,
}

fn network_record(mlp: &Mlp) -> NetworkRecord {
    NetworkRecord {
        layer_sizes: mlp.spec().layer_sizes.clone(),
        layers: mlp
            .layers()
            .iter()
            .map(|l| LayerRecord {
                inputs: l.weights.nrows(),
                outputs: l.weights.ncols(),
                activation: l.activation,
                weights: l.weights.iter().copied().collect(),
                bias: l.bias.to_vec(),
            })
            .collect(),
    }
}

fn network_from(record: &NetworkRecord) -> Result<Mlp> {
    let layers = record
        .layers
        .iter()
        .map(|l| {
            let weights = Array2::from_shape_vec((l.inputs, l.outputs), l.weights.clone())
                .map_err(|_| Error::Dimension {
                    expected: l.inputs * l.outputs,
                    got: l.weights.len(),
                })?;
            Ok(Dense {
                weights,
                bias: Array1::from(l.bias.clone()),
                activation: l.activation,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mlp = Mlp::from_layers(layers)?;
    if mlp.spec().layer_sizes != record.layer_sizes {
        return Err(Error::Config(format!(
            "checkpoint layer sizes {:?} disagree with weight shapes {:?}",
            record.layer_sizes,
            mlp.spec().layer_sizes
        )));
    }
    Ok(mlp)
}

impl Checkpoint {
    pub fn from_model(model: &EmbeddingModel) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.into(),
            reconstruction: model.reconstruction,
            clip: model.clip,
            epoch: model.epoch,
            rng_state: model.rng_state,
            encoder: network_record(&model.encoder),
            decoder: network_record(&model.decoder),
            critics: model
                .critics
                .iter()
                .map(|c| CriticRecord {
                    attribute: c.attribute.clone(),
                    beta: c.beta,
                    network: network_record(&c.network),
                })
                .collect(),
            training_log: model.training_log.clone(),
        }
    }

    pub fn into_model(self) -> Result<EmbeddingModel> {
        if self.format != CHECKPOINT_FORMAT {
            return Err(Error::Config(format!(
                "unsupported checkpoint format {:?}, expected {CHECKPOINT_FORMAT:?}",
                self.format
            )));
        }
        let model = EmbeddingModel {
            encoder: network_from(&self.encoder)?,
            decoder: network_from(&self.decoder)?,
            critics: self
                .critics
                .iter()
                .map(|c| {
                    Ok(Critic {
                        attribute: c.attribute.clone(),
                        beta: c.beta,
                        network: network_from(&c.network)?,
                    })
                })
                .collect::<Result<Vec<_>>>()?,
            reconstruction: self.reconstruction,
            clip: self.clip,
            training_log: self.training_log,
            epoch: self.epoch,
            rng_state: self.rng_state,
        };
        model.validate()?;
        Ok(model)
    }
}

pub fn save_checkpoint(model: &EmbeddingModel, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, &Checkpoint::from_model(model))?;
    w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<EmbeddingModel> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let checkpoint: Checkpoint = serde_json::from_reader(BufReader::new(file))?;
    checkpoint.into_model()
}

/// Columns: `epoch,recon,gap_<attribute>...,embedder_total`; gaps are blank
/// for epochs without adversarial training.
pub fn write_loss_log(model: &EmbeddingModel, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["epoch".to_string(), "recon".to_string()];
    header.extend(model.critics.iter().map(|c| format!("gap_{}", c.attribute)));
    header.push("embedder_total".into());
    w.write_record(&header)?;
    for entry in &model.training_log {
        let mut rec = vec![entry.epoch.to_string(), entry.recon.to_string()];
        rec.extend(
            entry
                .gaps
                .iter()
                .map(|g| g.map(|v| v.to_string()).unwrap_or_default()),
        );
        rec.push(entry.embedder_total.to_string());
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::TrainConfig;
    use crate::rng::SplitMix64;

    fn model() -> EmbeddingModel {
        let cfg = TrainConfig {
            embedding_dim: 2,
            encoder_hidden: vec![3],
            critic_hidden: vec![2],
            ..TrainConfig::default()
        };
        let mut m =
            EmbeddingModel::init(4, &["s".into(), "t".into()], &cfg, &mut SplitMix64::new(8))
                .unwrap();
        m.training_log.push(EpochLog {
            epoch: 1,
            recon: 0.25,
            gaps: vec![None, Some(-0.125)],
            embedder_total: 0.1,
        });
        m
    }

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        let m = model();
        save_checkpoint(&m, &path).unwrap();
        let back = load_checkpoint(&path).unwrap();
        assert_eq!(back, m);
        let bytes = std::fs::read(&path).unwrap();
        save_checkpoint(&back, &path).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), bytes);
    }

    #[test]
    fn weights_are_row_major() {
        let m = model();
        let c = Checkpoint::from_model(&m);
        let w = &m.encoder.layers()[0].weights;
        assert_eq!(c.encoder.layers[0].weights[1], w[[0, 1]]);
        assert_eq!(c.encoder.layers[0].weights[3], w[[1, 0]]);
    }

    #[test]
    fn rejects_inconsistent_shapes() {
        let mut c = Checkpoint::from_model(&model());
        c.encoder.layers[0].weights.pop();
        assert!(c.clone().into_model().is_err());
        let mut c = Checkpoint::from_model(&model());
        c.encoder.layer_sizes[1] = 9;
        assert!(c.into_model().is_err());
    }

    #[test]
    fn loss_log_columns() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("loss.csv");
        write_loss_log(&model(), &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(
            text,
            "epoch,recon,gap_s,gap_t,embedder_total\n1,0.25,,-0.125,0.1\n"
        );
    }
}
