//! Fair influence maximization with adversarially trained graph embeddings.
//!
//! The pipeline: learn node embeddings whose distribution matches across the
//! groups of each sensitive attribute ([`embedding`]), pick seeds by clustering
//! those embeddings ([`selection`]), then measure total and per-group reach
//! under independent-cascade diffusion ([`diffusion`]) against classical
//! baselines ([`baselines`]).

pub mod baselines;
pub mod clustering;
pub mod datasets;
pub mod diffusion;
pub mod embedding;
pub mod error;
pub mod experiments;
pub mod graph;
pub mod rng;
pub mod selection;

pub use embedding::{EmbeddingMatrix, EmbeddingModel, TrainConfig};
pub use error::{Error, ErrorKind, Result};
pub use graph::{AttributedGraph, FeatureMatrix, Group, Predicate};
