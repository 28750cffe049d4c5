use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::datasets::SbmParams;
use crate::embedding::TrainConfig;
use crate::error::{Error, Result};
use crate::graph::Predicate;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    FairEmbedding,
    NormalEmbedding,
    Greedy,
    Degree,
    Random,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::FairEmbedding,
        Method::NormalEmbedding,
        Method::Greedy,
        Method::Degree,
        Method::Random,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::FairEmbedding => "fair_embedding",
            Method::NormalEmbedding => "normal_embedding",
            Method::Greedy => "greedy",
            Method::Degree => "degree",
            Method::Random => "random",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown method `{s}`")))
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Filter {
    /// Keep ages up to 20; 18-19 form group A of `age`.
    Rice,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSpec {
    /// Generated per trial. A fixed `seed` reuses one graph for every trial.
    Sbm {
        #[serde(default = "SbmParams::synthetic_default")]
        params: SbmParams,
        #[serde(default)]
        seed: Option<u64>,
    },
    /// Edge list plus optional attribute CSV. Relative paths resolve against
    /// the directory of the config file.
    Files {
        edges: PathBuf,
        #[serde(default)]
        attributes: Option<PathBuf>,
        /// Treat node ids as arbitrary labels and renumber them densely.
        #[serde(default)]
        remap_ids: bool,
        #[serde(default)]
        filter: Option<Filter>,
    },
}

/// A sensitive attribute. Without a predicate the attribute must already be
/// binary (the SBM group, or an attribute labelled by a filter).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttributeSpec {
    pub name: String,
    #[serde(default)]
    pub predicate: Option<Predicate>,
}

fn default_budgets() -> Vec<usize> {
    (1..=8).map(|i| 5 * i).collect()
}

fn default_p() -> f64 {
    0.03
}

fn default_rollouts() -> usize {
    1000
}

fn default_trials() -> usize {
    5
}

fn default_k() -> usize {
    4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetSpec,
    /// Sensitive attributes; the first drives Fair Selection and the report
    /// columns. Empty means every binary attribute the dataset provides.
    #[serde(default)]
    pub attributes: Vec<AttributeSpec>,
    #[serde(default)]
    pub embedding: TrainConfig,
    pub methods: Vec<Method>,
    #[serde(default = "default_budgets")]
    pub budgets: Vec<usize>,
    /// Activation probability on every edge.
    #[serde(default = "default_p")]
    pub p: f64,
    #[serde(default = "default_rollouts")]
    pub rollouts: usize,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub master_seed: u64,
    /// Explicit per-trial seeds, overriding derivation from `master_seed`.
    #[serde(default)]
    pub trial_seeds: Option<Vec<u64>>,
    /// Top-level cluster count of Fair Selection.
    #[serde(default = "default_k")]
    pub k_clusters: usize,
    /// Fill `runtime_s` and write `timings.csv`. Off by default so that
    /// report files are byte-reproducible.
    #[serde(default)]
    pub record_runtime: bool,
}

impl ExperimentConfig {
    /// Parses and validates a config file, resolving relative dataset paths
    /// against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut config: Self = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        if let Some(base) = path.parent() {
            config.resolve_paths(base);
        }
        config.validate()?;
        Ok(config)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let config: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        if let DatasetSpec::Files {
            edges, attributes, ..
        } = &mut self.dataset
        {
            if edges.is_relative() {
                *edges = base.join(&*edges);
            }
            if let Some(a) = attributes {
                if a.is_relative() {
                    *a = base.join(&*a);
                }
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.methods.is_empty() {
            return bad("`methods` must list at least one of fair_embedding, normal_embedding, greedy, degree, random".into());
        }
        let mut seen = self.methods.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.methods.len() {
            return bad("`methods` lists a method twice".into());
        }
        if self.budgets.is_empty() {
            return bad("`budgets` must not be empty".into());
        }
        if self.budgets[0] == 0 || self.budgets.windows(2).any(|w| w[0] >= w[1]) {
            return bad(format!(
                "`budgets` must be positive and strictly ascending, got {:?}",
                self.budgets
            ));
        }
        if !(0.0..=1.0).contains(&self.p) {
            return bad(format!("`p` must lie in [0, 1], got {}", self.p));
        }
        if self.rollouts == 0 {
            return bad("`rollouts` must be at least 1".into());
        }
        if self.trials == 0 {
            return bad("`trials` must be at least 1".into());
        }
        if let Some(seeds) = &self.trial_seeds {
            if seeds.len() != self.trials {
                return bad(format!(
                    "`trial_seeds` has {} entries but `trials` is {}",
                    seeds.len(),
                    self.trials
                ));
            }
        }
        if self.k_clusters == 0 {
            return bad("`k_clusters` must be at least 1".into());
        }
        if let DatasetSpec::Sbm { params, .. } = &self.dataset {
            params
                .validate()
                .map_err(|e| Error::Config(format!("dataset: {e}")))?;
            if let Some(max) = self.budgets.last() {
                if *max > params.n {
                    return bad(format!(
                        "largest budget {max} exceeds the {} generated nodes",
                        params.n
                    ));
                }
            }
        }
        let mut names: Vec<&str> = self.attributes.iter().map(|a| a.name.as_str()).collect();
        names.sort();
        names.dedup();
        if names.len() != self.attributes.len() {
            return bad("`attributes` lists an attribute twice".into());
        }
        self.embedding.validate()
    }

    /// Hex SHA-256 of the canonical JSON form of the config.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    pub fn trial_seed(&self, trial: usize) -> u64 {
        match &self.trial_seeds {
            Some(seeds) => seeds[trial],
            None => crate::rng::derive_seed(self.master_seed, trial as u64),
        }
    }

    pub fn uses_embeddings(&self) -> bool {
        self.methods
            .iter()
            .any(|m| matches!(m, Method::FairEmbedding | Method::NormalEmbedding))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{"dataset": {"kind": "sbm"}, "methods": ["greedy"]}"#;

    #[test]
    fn defaults() {
        let c = ExperimentConfig::from_json(MINIMAL).unwrap();
        assert_eq!(c.budgets, vec![5, 10, 15, 20, 25, 30, 35, 40]);
        assert_eq!(c.trials, 5);
        assert_eq!(c.rollouts, 1000);
        assert_eq!(c.k_clusters, 4);
        assert_eq!(c.p, 0.03);
        assert_eq!(
            c.dataset,
            DatasetSpec::Sbm {
                params: SbmParams::synthetic_default(),
                seed: None
            }
        );
    }

    #[test]
    fn rejects_bad_configs() {
        for text in [
            r#"{"dataset": {"kind": "sbm"}, "methods": []}"#,
            r#"{"dataset": {"kind": "sbm"}, "methods": ["greedy"], "budgets": [10, 5]}"#,
            r#"{"dataset": {"kind": "sbm"}, "methods": ["greedy"], "budgets": [0]}"#,
            r#"{"dataset": {"kind": "sbm"}, "methods": ["greedy"], "p": 1.5}"#,
            r#"{"dataset": {"kind": "sbm"}, "methods": ["greedy"], "trials": 2, "trial_seeds": [1]}"#,
            r#"{"dataset": {"kind": "sbm"}, "methods": ["greedy", "greedy"]}"#,
            r#"{"dataset": {"kind": "sbm"}, "methods": ["magic"]}"#,
            r#"{"dataset": {"kind": "sbm"}, "methods": ["greedy"], "budgets": [600]}"#,
            r#"{"dataset": {"kind": "sbm"}, "methods": ["greedy"], "unknown": 1}"#,
            r#"{"dataset": {"kind": "sbm"}, "methods": ["greedy"], "embedding": {"beta": -1}}"#,
        ] {
            let err = ExperimentConfig::from_json(text).unwrap_err();
            assert_eq!(err.kind(), crate::ErrorKind::Config, "{text}");
        }
    }

    #[test]
    fn hash_tracks_content() {
        let a = ExperimentConfig::from_json(MINIMAL).unwrap();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.master_seed = 1;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn relative_paths_resolve_against_config_dir() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("exp.json");
        std::fs::write(
            &path,
            r#"{"dataset": {"kind": "files", "edges": "g.txt", "attributes": "a.csv"}, "methods": ["degree"], "budgets": [1]}"#,
        )
        .unwrap();
        let c = ExperimentConfig::load(&path).unwrap();
        match c.dataset {
            DatasetSpec::Files {
                edges, attributes, ..
            } => {
                assert_eq!(edges, dir.path().join("g.txt"));
                assert_eq!(attributes, Some(dir.path().join("a.csv")));
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn explicit_trial_seeds_win() {
        let c = ExperimentConfig::from_json(
            r#"{"dataset": {"kind": "sbm"}, "methods": ["greedy"], "trials": 2, "trial_seeds": [7, 7]}"#,
        )
        .unwrap();
        assert_eq!(c.trial_seed(0), 7);
        assert_eq!(c.trial_seed(1), 7);
    }
}
