use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{AttributeSpec, DatasetSpec, ExperimentConfig, Filter, Method};
use crate::baselines::{degree_seeds, greedy_celf, random_seeds};
use crate::datasets::{generate_sbm, rice_filter};
use crate::diffusion::{estimate_influence, CascadeParams};
use crate::embedding::{adversarial_stage, embed, train_plain_embedding, EmbeddingMatrix};
use crate::error::{Error, ErrorKind, Result};
use crate::graph::{
    binarize_attribute, feature_matrix, load_attributes, load_edge_list, load_edge_list_remapped,
    AttributedGraph, Predicate,
};
use crate::rng::derive_seed;
use crate::selection::{fair_selection, normal_selection, SeedSet};

// Sub-streams of a trial seed.
const DATASET_STREAM: u64 = 0;
const TRAIN_STREAM: u64 = 1;
const SELECT_STREAM: u64 = 2;
const GREEDY_STREAM: u64 = 3;
const RANDOM_STREAM: u64 = 4;
const EVAL_STREAM: u64 = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub method: Method,
    pub budget: usize,
    pub trial: usize,
    pub total_fraction: f64,
    pub frac_a: Option<f64>,
    pub frac_b: Option<f64>,
    pub disparity: Option<f64>,
    pub stderr_total: f64,
    /// Seconds to select this seed set (one-off training or greedy cost split
    /// evenly across budgets) and evaluate it. Only recorded on request.
    pub runtime_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub method: Method,
    pub budget: usize,
    pub trials: usize,
    pub mean_total_fraction: f64,
    pub se_total_fraction: Option<f64>,
    pub mean_frac_a: Option<f64>,
    pub se_frac_a: Option<f64>,
    pub mean_frac_b: Option<f64>,
    pub se_frac_b: Option<f64>,
    pub mean_disparity: Option<f64>,
    pub se_disparity: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialError {
    pub trial: usize,
    pub seed: u64,
    pub stage: String,
    pub kind: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub trial: usize,
    pub stage: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub code_version: String,
    pub master_seed: u64,
    pub trial_seeds: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub provenance: Provenance,
    /// Attribute whose groups fill the `frac_A`/`frac_B` columns.
    pub attribute: Option<String>,
    /// Sorted by method name, budget, trial.
    pub rows: Vec<ReportRow>,
    pub aggregates: Vec<AggregateRow>,
    pub errors: Vec<TrialError>,
    pub timings: Vec<StageTiming>,
    pub wall_time_s: f64,
}

impl ExperimentReport {
    /// Process-level classification of the first failed trial, if any.
    pub fn first_error_kind(&self) -> Option<ErrorKind> {
        self.errors.first().map(|e| match e.kind.as_str() {
            "config" => ErrorKind::Config,
            "numerical" => ErrorKind::Numerical,
            _ => ErrorKind::Data,
        })
    }
}

fn kind_name(kind: ErrorKind) -> &'static str {
    match kind {
        ErrorKind::Config => "config",
        ErrorKind::Data => "data",
        ErrorKind::Numerical => "numerical",
    }
}

/// Builds a graph and returns it with the sensitive attribute names. A
/// generated dataset without its own seed draws from `seed`.
pub fn build_dataset(
    dataset: &DatasetSpec,
    attributes: &[AttributeSpec],
    seed: u64,
) -> Result<(AttributedGraph, Vec<String>)> {
    let mut g = match dataset {
        DatasetSpec::Sbm {
            params,
            seed: fixed,
        } => generate_sbm(params, fixed.unwrap_or(seed))?,
        DatasetSpec::Files {
            edges,
            attributes,
            remap_ids,
            filter,
        } => {
            let (mut g, ids) = if *remap_ids {
                let (g, ids) = load_edge_list_remapped(edges)?;
                (g, Some(ids))
            } else {
                (load_edge_list(edges)?, None)
            };
            if let Some(path) = attributes {
                g = load_attributes(path, g, ids.as_ref())?;
            }
            match filter {
                Some(Filter::Rice) => rice_filter(&g)?.0,
                None => g,
            }
        }
    };
    for spec in attributes {
        match &spec.predicate {
            Some(predicate) => g = binarize_attribute(g, &spec.name, predicate)?,
            // Without a predicate the column must already be binary (`A`/`B`).
            None if g.labels(&spec.name).is_ok() => {}
            None => {
                if let Some(v) = g
                    .raw_attribute(&spec.name)?
                    .iter()
                    .find(|v| !matches!(v.trim(), "A" | "B"))
                {
                    return Err(Error::Config(format!(
                        "attribute `{}` has value `{v}`; give a predicate such as `{}=le:19`",
                        spec.name, spec.name
                    )));
                }
                g = binarize_attribute(g, &spec.name, &Predicate::Equals("A".into()))?;
            }
        }
    }
    let names = if attributes.is_empty() {
        g.attribute_names().to_vec()
    } else {
        attributes.iter().map(|a| a.name.clone()).collect()
    };
    Ok((g, names))
}

struct TrialOutput {
    attribute: Option<String>,
    rows: Vec<ReportRow>,
    timings: Vec<StageTiming>,
}

struct Stage<'a> {
    trial: usize,
    seed: u64,
    timings: &'a mut Vec<StageTiming>,
}

impl Stage<'_> {
    fn run<T>(
        &mut self,
        name: &str,
        f: impl FnOnce() -> Result<T>,
    ) -> std::result::Result<(T, f64), TrialError> {
        let start = Instant::now();
        let out = f().map_err(|e| TrialError {
            trial: self.trial,
            seed: self.seed,
            stage: name.to_string(),
            kind: kind_name(e.kind()).into(),
            message: e.to_string(),
        })?;
        let seconds = start.elapsed().as_secs_f64();
        self.timings.push(StageTiming {
            trial: self.trial,
            stage: name.to_string(),
            seconds,
        });
        Ok((out, seconds))
    }
}

fn run_trial(
    config: &ExperimentConfig,
    trial: usize,
) -> std::result::Result<TrialOutput, TrialError> {
    let seed = config.trial_seed(trial);
    let mut timings = Vec::new();
    let mut stage = Stage {
        trial,
        seed,
        timings: &mut timings,
    };
    let ((g, attributes), _) = stage.run("dataset", || {
        let (g, attributes) = build_dataset(
            &config.dataset,
            &config.attributes,
            derive_seed(seed, DATASET_STREAM),
        )?;
        let max = *config.budgets.last().expect("validated non-empty");
        if max > g.n() {
            return Err(Error::InvalidParam(format!(
                "largest budget {max} exceeds the {} nodes of the dataset",
                g.n()
            )));
        }
        if attributes.is_empty() && config.uses_embeddings() {
            return Err(Error::Config(
                "embedding methods need a sensitive attribute".into(),
            ));
        }
        Ok((g, attributes))
    })?;
    let primary = attributes.first().cloned();
    let max_budget = *config.budgets.last().expect("validated non-empty");
    let eval = CascadeParams {
        p: config.p,
        rollouts: config.rollouts,
        seed: derive_seed(seed, EVAL_STREAM),
    };
    let train_seed = derive_seed(seed, TRAIN_STREAM);
    let select_seed = derive_seed(seed, SELECT_STREAM);
    let x = feature_matrix(&g);

    // Shared by both embedding methods.
    let mut plain: Option<(crate::embedding::EmbeddingModel, f64)> = None;
    let mut plain_model = |stage: &mut Stage<'_>| -> std::result::Result<
        (crate::embedding::EmbeddingModel, f64),
        TrialError,
    > {
        if plain.is_none() {
            plain = Some(stage.run("train_plain", || {
                train_plain_embedding(&g, &attributes, &config.embedding, train_seed)
            })?);
        }
        Ok(plain.clone().expect("just set"))
    };

    let mut methods = config.methods.clone();
    methods.sort_by_key(|m| m.as_str());
    let mut rows = Vec::new();
    for method in methods {
        // seed sets per budget and their one-off preparation cost
        let (sets, one_off): (Vec<(SeedSet, f64)>, f64) = match method {
            Method::NormalEmbedding | Method::FairEmbedding => {
                let (model, mut cost) = plain_model(&mut stage)?;
                let model = if method == Method::FairEmbedding {
                    let (m, t) = stage.run("train_adversarial", || {
                        adversarial_stage(model, &g, &attributes, &config.embedding, train_seed)
                    })?;
                    cost += t;
                    m
                } else {
                    model
                };
                let z: EmbeddingMatrix = stage
                    .run(&format!("embed:{method}"), || embed(&model, &x))?
                    .0;
                let labels = g
                    .labels(primary.as_deref().expect("checked above"))
                    .expect("resolved")
                    .to_vec();
                let mut sets = Vec::new();
                for &b in &config.budgets {
                    let (set, t) = stage.run(&format!("select:{method}:{b}"), || match method {
                        Method::FairEmbedding => {
                            fair_selection(z.view(), &labels, config.k_clusters, b, select_seed)
                        }
                        _ => normal_selection(z.view(), b, select_seed),
                    })?;
                    sets.push((set, t));
                }
                (sets, cost)
            }
            Method::Greedy | Method::Degree | Method::Random => {
                let (full, cost) = stage.run(&format!("select:{method}"), || match method {
                    Method::Greedy => Ok(greedy_celf(
                        &g,
                        config.p,
                        max_budget,
                        config.rollouts,
                        derive_seed(seed, GREEDY_STREAM),
                    )?
                    .0),
                    Method::Degree => degree_seeds(&g, max_budget),
                    _ => random_seeds(&g, max_budget, derive_seed(seed, RANDOM_STREAM)),
                })?;
                (
                    config
                        .budgets
                        .iter()
                        .map(|&b| (full.prefix(b), 0.0))
                        .collect(),
                    cost,
                )
            }
        };
        let share = one_off / config.budgets.len() as f64;
        for (set, select_time) in sets {
            let budget = set.nodes.len();
            let (report, eval_time) = stage.run(&format!("evaluate:{method}:{budget}"), || {
                estimate_influence(&g, &set.nodes, &eval, &attributes)
            })?;
            let group = primary
                .as_deref()
                .map(|a| report.group(a).expect("evaluated attribute"));
            rows.push(ReportRow {
                method,
                budget,
                trial,
                total_fraction: report.total_fraction,
                frac_a: group.and_then(|gi| gi.fraction_a),
                frac_b: group.and_then(|gi| gi.fraction_b),
                disparity: group.and_then(|gi| gi.disparity),
                stderr_total: report.stderr_total,
                runtime_s: config
                    .record_runtime
                    .then_some(share + select_time + eval_time),
            });
        }
    }
    Ok(TrialOutput {
        attribute: primary,
        rows,
        timings,
    })
}

/// Runs every trial (in parallel) and assembles the report. Trials that fail
/// leave an error record; the others still contribute rows.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    let start = Instant::now();
    let outputs: Vec<_> = (0..config.trials)
        .into_par_iter()
        .map(|t| run_trial(config, t))
        .collect();
    let wall_time_s = start.elapsed().as_secs_f64();

    let mut rows = Vec::new();
    let mut errors = Vec::new();
    let mut timings = Vec::new();
    let mut attribute = None;
    for out in outputs {
        match out {
            Ok(o) => {
                attribute = attribute.or(o.attribute);
                rows.extend(o.rows);
                timings.extend(o.timings);
            }
            Err(e) => errors.push(e),
        }
    }
    rows.sort_by(|a, b| {
        (a.method.as_str(), a.budget, a.trial).cmp(&(b.method.as_str(), b.budget, b.trial))
    });
    Ok(ExperimentReport {
        provenance: Provenance {
            config_hash: config.hash(),
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            master_seed: config.master_seed,
            trial_seeds: (0..config.trials).map(|t| config.trial_seed(t)).collect(),
        },
        attribute,
        aggregates: aggregate(&rows),
        rows,
        errors,
        timings: if config.record_runtime {
            timings
        } else {
            Vec::new()
        },
        wall_time_s,
        config: config.clone(),
    })
}

fn mean_se(values: &[f64]) -> (Option<f64>, Option<f64>) {
    if values.is_empty() {
        return (None, None);
    }
    let k = values.len() as f64;
    let mean = values.iter().sum::<f64>() / k;
    if values.len() < 2 {
        return (Some(mean), None);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0);
    (Some(mean), Some((var / k).sqrt()))
}

/// Means and standard errors over trials for every (method, budget).
/// Expects rows sorted as in [`ExperimentReport::rows`].
pub fn aggregate(rows: &[ReportRow]) -> Vec<AggregateRow> {
    let mut out = Vec::new();
    for chunk in rows.chunk_by(|a, b| a.method == b.method && a.budget == b.budget) {
        let pick =
            |f: fn(&ReportRow) -> Option<f64>| -> Vec<f64> { chunk.iter().filter_map(f).collect() };
        let (mean_total, se_total) = mean_se(&pick(|r| Some(r.total_fraction)));
        let (mean_a, se_a) = mean_se(&pick(|r| r.frac_a));
        let (mean_b, se_b) = mean_se(&pick(|r| r.frac_b));
        let (mean_d, se_d) = mean_se(&pick(|r| r.disparity));
        out.push(AggregateRow {
            method: chunk[0].method,
            budget: chunk[0].budget,
            trials: chunk.len(),
            mean_total_fraction: mean_total.expect("chunk non-empty"),
            se_total_fraction: se_total,
            mean_frac_a: mean_a,
            se_frac_a: se_a,
            mean_frac_b: mean_b,
            se_frac_b: se_b,
            mean_disparity: mean_d,
            se_disparity: se_d,
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::{emit_report, recompute_aggregates, ROWS_FILE};

    fn tiny_sbm(methods: &str, extra: &str) -> ExperimentConfig {
        ExperimentConfig::from_json(&format!(
            r#"{{
                "dataset": {{"kind": "sbm", "params": {{"n": 40, "r": 0.3, "p_intra_a": 0.2, "p_intra_b": 0.15, "p_inter": 0.02}}}},
                "methods": {methods},
                "budgets": [2, 4],
                "p": 0.1,
                "rollouts": 200,
                "trials": 2,
                "master_seed": 17,
                "k_clusters": 2,
                "embedding": {{"embedding_dim": 3, "encoder_hidden": [8], "critic_hidden": [4],
                               "pretrain_epochs": 3, "critic_pretrain_epochs": 2, "adversarial_epochs": 3}}
                {extra}
            }}"#
        ))
        .unwrap()
    }

    fn edgeless_files(dir: &std::path::Path) -> ExperimentConfig {
        std::fs::write(dir.join("g.txt"), "#n 5\n").unwrap();
        std::fs::write(
            dir.join("a.csv"),
            "node_id,color\n0,red\n1,blue\n2,blue\n3,red\n4,blue\n",
        )
        .unwrap();
        let mut c = ExperimentConfig::from_json(
            r#"{"dataset": {"kind": "files", "edges": "g.txt", "attributes": "a.csv"},
                "attributes": [{"name": "color", "predicate": "eq:red"}],
                "methods": ["degree"], "budgets": [1], "trials": 1, "rollouts": 50}"#,
        )
        .unwrap();
        c.resolve_paths(dir);
        c
    }

    #[test]
    fn edgeless_degree_closed_form() {
        let dir = tempfile::tempdir().unwrap();
        let report = run_experiment(&edgeless_files(dir.path())).unwrap();
        assert!(report.errors.is_empty(), "{:?}", report.errors);
        assert_eq!(report.rows.len(), 1);
        let row = &report.rows[0];
        assert_eq!(row.total_fraction, 0.2);
        // node 0 (red, group A of 2) is the only seed
        assert_eq!(row.frac_a, Some(0.5));
        assert_eq!(row.frac_b, Some(0.0));
        assert_eq!(row.disparity, Some(0.5));
        assert_eq!(row.stderr_total, 0.0);
        assert_eq!(report.attribute.as_deref(), Some("color"));
    }

    #[test]
    fn forced_identical_trials_give_identical_rows() {
        let c = tiny_sbm(
            r#"["greedy", "random", "normal_embedding"]"#,
            r#", "trial_seeds": [5, 5]"#,
        );
        let report = run_experiment(&c).unwrap();
        let strip = |t: usize| {
            report
                .rows
                .iter()
                .filter(|r| r.trial == t)
                .map(|r| ReportRow {
                    trial: 0,
                    ..r.clone()
                })
                .collect::<Vec<_>>()
        };
        assert_eq!(strip(0), strip(1));
        assert_eq!(strip(0).len(), 6);
    }

    #[test]
    fn rows_decompose_into_groups_and_are_sorted() {
        let c = tiny_sbm(
            r#"["random", "fair_embedding", "degree", "greedy", "normal_embedding"]"#,
            "",
        );
        let report = run_experiment(&c).unwrap();
        assert!(report.errors.is_empty(), "{:?}", report.errors);
        assert_eq!(report.rows.len(), 5 * 2 * 2);
        let (na, nb) = (12.0, 28.0);
        for r in &report.rows {
            let lhs = r.frac_a.unwrap() * na + r.frac_b.unwrap() * nb;
            assert!((lhs - r.total_fraction * 40.0).abs() < 1e-9);
            assert!(r.runtime_s.is_none());
        }
        let keys: Vec<_> = report
            .rows
            .iter()
            .map(|r| (r.method.as_str(), r.budget, r.trial))
            .collect();
        let mut sorted = keys.clone();
        sorted.sort();
        assert_eq!(keys, sorted);
        assert_eq!(report.aggregates.len(), 10);
    }

    #[test]
    fn report_bytes_are_reproducible() {
        let c = tiny_sbm(r#"["fair_embedding", "greedy", "degree"]"#, "");
        let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
        for d in &dirs {
            emit_report(&run_experiment(&c).unwrap(), d.path()).unwrap();
        }
        for f in ["rows.csv", "aggregate.csv", "manifest.json"] {
            assert_eq!(
                std::fs::read(dirs[0].path().join(f)).unwrap(),
                std::fs::read(dirs[1].path().join(f)).unwrap(),
                "{f}"
            );
        }
        assert!(!dirs[0].path().join("timings.csv").exists());
    }

    #[test]
    fn single_row_report_and_reemit() {
        let dir = tempfile::tempdir().unwrap();
        let report = run_experiment(&edgeless_files(dir.path())).unwrap();
        let out = dir.path().join("out");
        emit_report(&report, &out).unwrap();
        let rows = std::fs::read_to_string(out.join(ROWS_FILE)).unwrap();
        assert_eq!(rows.lines().count(), 2);
        assert_eq!(
            rows.lines().next().unwrap(),
            "method,budget,trial,total_fraction,frac_A,frac_B,disparity,stderr_total,runtime_s"
        );
        let before: Vec<_> = ["rows.csv", "aggregate.csv", "manifest.json"]
            .iter()
            .map(|f| std::fs::read(out.join(f)).unwrap())
            .collect();
        emit_report(&report, &out).unwrap();
        for (f, b) in ["rows.csv", "aggregate.csv", "manifest.json"]
            .iter()
            .zip(before)
        {
            assert_eq!(std::fs::read(out.join(f)).unwrap(), b);
        }
    }

    #[test]
    fn aggregates_recompute_from_rows() {
        let dir = tempfile::tempdir().unwrap();
        let c = tiny_sbm(r#"["random", "degree"]"#, "");
        let report = run_experiment(&c).unwrap();
        emit_report(&report, dir.path()).unwrap();
        let before = std::fs::read(dir.path().join("aggregate.csv")).unwrap();
        let agg = recompute_aggregates(dir.path()).unwrap();
        assert_eq!(agg, report.aggregates);
        assert_eq!(
            std::fs::read(dir.path().join("aggregate.csv")).unwrap(),
            before
        );
        let r = &report.aggregates[0];
        let vals: Vec<f64> = report
            .rows
            .iter()
            .filter(|x| x.method == r.method && x.budget == r.budget)
            .map(|x| x.total_fraction)
            .collect();
        assert_eq!(r.mean_total_fraction, (vals[0] + vals[1]) / 2.0);
        assert_eq!(r.se_total_fraction, Some((vals[0] - vals[1]).abs() / 2.0));
    }

    #[test]
    fn timings_cover_wall_clock() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = tiny_sbm(
            r#"["greedy", "normal_embedding"]"#,
            r#", "record_runtime": true"#,
        );
        c.trials = 1;
        let report = run_experiment(&c).unwrap();
        assert!(report.rows.iter().all(|r| r.runtime_s.is_some()));
        let staged: f64 = report.timings.iter().map(|t| t.seconds).sum();
        assert!(staged <= report.wall_time_s * 1.0001);
        emit_report(&report, dir.path()).unwrap();
        assert!(dir.path().join("timings.csv").exists());
    }

    #[test]
    fn failing_trial_leaves_error_record() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = edgeless_files(dir.path());
        c.budgets = vec![6];
        let report = run_experiment(&c).unwrap();
        assert!(report.rows.is_empty());
        assert_eq!(report.errors.len(), 1);
        assert_eq!(report.errors[0].stage, "dataset");
        assert_eq!(report.first_error_kind(), Some(ErrorKind::Config));
    }

    #[test]
    fn missing_file_is_data_error() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = edgeless_files(dir.path());
        c.dataset = DatasetSpec::Files {
            edges: dir.path().join("nope.txt"),
            attributes: None,
            remap_ids: false,
            filter: None,
        };
        c.attributes.clear();
        let report = run_experiment(&c).unwrap();
        assert_eq!(report.first_error_kind(), Some(ErrorKind::Data));
    }
}
