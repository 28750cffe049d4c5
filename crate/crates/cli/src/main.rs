//! Command-line front end.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical failure.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use fairim::baselines::{degree_seeds, greedy_celf, random_seeds};
use fairim::datasets::{generate_sbm, SbmParams};
use fairim::diffusion::{estimate_influence, exact_influence, CascadeParams};
use fairim::embedding::{
    embed, load_checkpoint, save_checkpoint, train_fair_embedding, train_plain_embedding,
    write_loss_log, EmbeddingMatrix,
};
use fairim::experiments::{
    build_dataset, emit_report, recompute_aggregates, run_experiment, AttributeSpec, DatasetSpec,
    ExperimentConfig, Filter,
};
use fairim::graph::{feature_matrix, write_attributes, write_edge_list, IdMap};
use fairim::selection::{fair_selection, normal_selection, SeedSet};
use fairim::{AttributedGraph, Error, ErrorKind, Result, TrainConfig};

#[derive(Parser)]
#[command(
    name = "fairim",
    version,
    about = "Fair influence maximization with adversarial graph embeddings"
)]
struct Cli {
    /// Seed for every random choice the command makes.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// JSON configuration file (meaning depends on the command).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a two-group stochastic block model graph (config: SBM parameters).
    Generate(GenerateArgs),
    /// Train an embedding model (config: training hyperparameters).
    Train(TrainArgs),
    /// Embed every node with a trained model.
    Embed(EmbedArgs),
    /// Select seeds by clustering embeddings.
    Select(SelectArgs),
    /// Estimate influence of a seed set under independent cascade.
    Simulate(SimulateArgs),
    /// Select seeds with greedy, degree or random baselines.
    Baseline(BaselineArgs),
    /// Run a full experiment (config: experiment description, required).
    Experiment,
    /// Recompute aggregate.csv from rows.csv in the output directory.
    Report,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    n: Option<usize>,
    /// Fraction of nodes in group A.
    #[arg(long)]
    r: Option<f64>,
    #[arg(long)]
    p_intra_a: Option<f64>,
    #[arg(long)]
    p_intra_b: Option<f64>,
    #[arg(long)]
    p_inter: Option<f64>,
}

#[derive(Args, Clone)]
struct GraphArgs {
    /// Edge list, one `u v` pair per line.
    #[arg(long)]
    edges: PathBuf,
    /// Attribute CSV with a `node_id` column.
    #[arg(long)]
    attributes: Option<PathBuf>,
    /// Sensitive attribute as `name` (already binary) or `name=predicate`,
    /// e.g. `age=le:19`. Repeatable; the first drives fair selection.
    #[arg(long = "attribute", value_parser = parse_attribute)]
    attribute: Vec<AttributeSpec>,
    /// Treat node ids as labels and renumber densely.
    #[arg(long)]
    remap_ids: bool,
    #[arg(long, value_enum)]
    filter: Option<FilterArg>,
}

#[derive(Clone, Copy, ValueEnum)]
enum FilterArg {
    Rice,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    graph: GraphArgs,
    /// Train the plain autoencoder only.
    #[arg(long)]
    plain: bool,
}

#[derive(Args)]
struct EmbedArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[command(flatten)]
    graph: GraphArgs,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SelectMethod {
    Normal,
    Fair,
}

#[derive(Args)]
struct SelectArgs {
    #[command(flatten)]
    graph: GraphArgs,
    /// Embedding CSV written by `embed`.
    #[arg(
        long,
        conflicts_with = "checkpoint",
        required_unless_present = "checkpoint"
    )]
    embedding: Option<PathBuf>,
    /// Model checkpoint; embeddings are computed on the fly.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long, value_enum)]
    method: SelectMethod,
    #[arg(long)]
    budget: usize,
    /// Top-level clusters for fair selection.
    #[arg(long, default_value_t = 4)]
    k: usize,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    graph: GraphArgs,
    /// Seed file, one node id per line.
    #[arg(long)]
    seeds: PathBuf,
    #[arg(long, default_value_t = 0.03)]
    p: f64,
    #[arg(long, default_value_t = 1000)]
    rollouts: usize,
    /// Exact live-edge enumeration instead of Monte Carlo (small graphs only).
    #[arg(long)]
    exact: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum BaselineMethod {
    Greedy,
    Degree,
    Random,
}

#[derive(Args)]
struct BaselineArgs {
    #[command(flatten)]
    graph: GraphArgs,
    #[arg(long, value_enum)]
    method: BaselineMethod,
    #[arg(long)]
    budget: usize,
    #[arg(long, default_value_t = 0.03)]
    p: f64,
    #[arg(long, default_value_t = 1000)]
    rollouts: usize,
}

fn parse_attribute(s: &str) -> std::result::Result<AttributeSpec, String> {
    match s.split_once('=') {
        None => Ok(AttributeSpec {
            name: s.to_string(),
            predicate: None,
        }),
        Some((name, pred)) => Ok(AttributeSpec {
            name: name.to_string(),
            predicate: Some(pred.parse().map_err(|e: Error| e.to_string())?),
        }),
    }
}

struct LoadedGraph {
    g: AttributedGraph,
    attributes: Vec<String>,
    ids: Option<IdMap>,
}

impl LoadedGraph {
    fn label(&self, u: usize) -> String {
        match self.ids.as_ref().and_then(|m| m.original(u)) {
            Some(s) => s.to_string(),
            None => u.to_string(),
        }
    }

    fn dense(&self, token: &str, path: &Path, line: usize) -> Result<usize> {
        let parsed = match &self.ids {
            Some(m) => m.dense(token),
            None => token.parse().ok(),
        };
        parsed.ok_or_else(|| Error::Parse {
            path: path.to_path_buf(),
            line,
            msg: format!("unknown node id `{token}`"),
        })
    }
}

fn load_graph(args: &GraphArgs, seed: u64) -> Result<LoadedGraph> {
    if args.remap_ids && args.filter.is_some() {
        return Err(Error::Config(
            "--remap-ids cannot be combined with --filter".into(),
        ));
    }
    let spec = DatasetSpec::Files {
        edges: args.edges.clone(),
        attributes: args.attributes.clone(),
        remap_ids: args.remap_ids,
        filter: args.filter.map(|FilterArg::Rice| Filter::Rice),
    };
    let (g, attributes) = build_dataset(&spec, &args.attribute, seed)?;
    let ids = if args.remap_ids {
        Some(fairim::graph::load_edge_list_remapped(&args.edges)?.1)
    } else {
        None
    };
    Ok(LoadedGraph { g, attributes, ids })
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_seeds(loaded: &LoadedGraph, set: &SeedSet, path: &Path) -> Result<()> {
    let mut text = String::new();
    for &u in &set.nodes {
        text.push_str(&loaded.label(u));
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_seeds(loaded: &LoadedGraph, path: &Path) -> Result<Vec<usize>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut seeds = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        seeds.push(loaded.dense(line, path, i + 1)?);
    }
    Ok(seeds)
}

fn no_config(cli: &Cli, command: &str) -> Result<()> {
    match &cli.config {
        Some(_) => Err(Error::Config(format!("`{command}` does not take --config"))),
        None => Ok(()),
    }
}

fn create_out(out: &Path) -> Result<()> {
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))
}

/// Returns the process exit code; errors map through [`exit_code`].
fn run(cli: &Cli) -> Result<u8> {
    let seed = cli.seed.unwrap_or(0);
    match &cli.command {
        Command::Generate(args) => {
            let mut params = match &cli.config {
                Some(path) => read_json::<SbmParams>(path)?,
                None => SbmParams::synthetic_default(),
            };
            if let Some(n) = args.n {
                params.n = n;
            }
            if let Some(r) = args.r {
                params.r = r;
            }
            if let Some(p) = args.p_intra_a {
                params.p_intra_a = p;
            }
            if let Some(p) = args.p_intra_b {
                params.p_intra_b = p;
            }
            if let Some(p) = args.p_inter {
                params.p_inter = p;
            }
            params
                .validate()
                .map_err(|e| Error::Config(e.to_string()))?;
            let g = generate_sbm(&params, seed)?;
            create_out(&cli.out)?;
            write_edge_list(&g, &cli.out.join("edges.txt"))?;
            write_attributes(&g, &cli.out.join("attributes.csv"))?;
            let (a, b) = (params.size_a(), params.size_b());
            println!(
                "generated {} nodes ({a} A, {b} B), {} edges",
                g.n(),
                g.edge_count()
            );
        }
        Command::Train(args) => {
            let config = match &cli.config {
                Some(path) => read_json::<TrainConfig>(path)?,
                None => TrainConfig::default(),
            };
            config.validate()?;
            let loaded = load_graph(&args.graph, seed)?;
            let model = if args.plain {
                train_plain_embedding(&loaded.g, &loaded.attributes, &config, seed)?
            } else {
                train_fair_embedding(&loaded.g, &loaded.attributes, &config, seed)?
            };
            create_out(&cli.out)?;
            save_checkpoint(&model, &cli.out.join("checkpoint.json"))?;
            write_loss_log(&model, &cli.out.join("loss.csv"))?;
            if let Some(last) = model.training_log.last() {
                println!(
                    "trained {} epochs, final reconstruction loss {}",
                    model.epoch, last.recon
                );
            }
        }
        Command::Embed(args) => {
            no_config(cli, "embed")?;
            let model = load_checkpoint(&args.checkpoint)?;
            let loaded = load_graph(&args.graph, seed)?;
            let z = embed(&model, &feature_matrix(&loaded.g))?;
            create_out(&cli.out)?;
            z.write_csv(&cli.out.join("embedding.csv"), loaded.ids.as_ref())?;
        }
        Command::Select(args) => {
            no_config(cli, "select")?;
            let loaded = load_graph(&args.graph, seed)?;
            let z = match (&args.embedding, &args.checkpoint) {
                (Some(path), _) => {
                    if loaded.ids.is_some() {
                        return Err(Error::Config(
                            "--remap-ids needs --checkpoint; embedding CSVs use dense ids".into(),
                        ));
                    }
                    EmbeddingMatrix::read_csv(path)?
                }
                (None, Some(path)) => embed(&load_checkpoint(path)?, &feature_matrix(&loaded.g))?,
                (None, None) => unreachable!("clap requires one source"),
            };
            if z.n() != loaded.g.n() {
                return Err(Error::Dimension {
                    expected: loaded.g.n(),
                    got: z.n(),
                });
            }
            let set = match args.method {
                SelectMethod::Normal => normal_selection(z.view(), args.budget, seed)?,
                SelectMethod::Fair => {
                    let attr = loaded.attributes.first().ok_or_else(|| {
                        Error::Config("fair selection needs a sensitive attribute".into())
                    })?;
                    fair_selection(z.view(), loaded.g.labels(attr)?, args.k, args.budget, seed)?
                }
            };
            let set = set.tally(&loaded.g)?;
            create_out(&cli.out)?;
            write_seeds(&loaded, &set, &cli.out.join("seeds.txt"))?;
            write_json(&set, &cli.out.join("selection.json"))?;
        }
        Command::Simulate(args) => {
            no_config(cli, "simulate")?;
            let loaded = load_graph(&args.graph, seed)?;
            let seeds = read_seeds(&loaded, &args.seeds)?;
            let report = if args.exact {
                exact_influence(&loaded.g, &seeds, args.p, &loaded.attributes)?
            } else {
                let params = CascadeParams::new(args.p, args.rollouts, seed)?;
                estimate_influence(&loaded.g, &seeds, &params, &loaded.attributes)?
            };
            create_out(&cli.out)?;
            write_json(&report, &cli.out.join("influence.json"))?;
            println!(
                "expected influenced {} of {} (fraction {} ± {})",
                report.count, report.n, report.total_fraction, report.stderr_total
            );
            for g in &report.groups {
                if let Some(d) = g.disparity {
                    println!(
                        "  {}: A {:?} B {:?} disparity {d}",
                        g.attribute, g.fraction_a, g.fraction_b
                    );
                }
            }
        }
        Command::Baseline(args) => {
            no_config(cli, "baseline")?;
            let loaded = load_graph(&args.graph, seed)?;
            let set = match args.method {
                BaselineMethod::Greedy => {
                    greedy_celf(&loaded.g, args.p, args.budget, args.rollouts, seed)?.0
                }
                BaselineMethod::Degree => degree_seeds(&loaded.g, args.budget)?,
                BaselineMethod::Random => random_seeds(&loaded.g, args.budget, seed)?,
            };
            let set = set.tally(&loaded.g)?;
            create_out(&cli.out)?;
            write_seeds(&loaded, &set, &cli.out.join("seeds.txt"))?;
            write_json(&set, &cli.out.join("selection.json"))?;
        }
        Command::Experiment => {
            let path = cli
                .config
                .as_ref()
                .ok_or_else(|| Error::Config("`experiment` requires --config".into()))?;
            let mut config = ExperimentConfig::load(path)?;
            if let Some(s) = cli.seed {
                config.master_seed = s;
            }
            let report = run_experiment(&config)?;
            emit_report(&report, &cli.out)?;
            println!(
                "{} rows, {} failed trials, written to {}",
                report.rows.len(),
                report.errors.len(),
                cli.out.display()
            );
            for e in &report.errors {
                eprintln!("trial {} failed at {}: {}", e.trial, e.stage, e.message);
            }
            if let Some(kind) = report.first_error_kind() {
                return Ok(exit_code(kind));
            }
        }
        Command::Report => {
            no_config(cli, "report")?;
            let agg = recompute_aggregates(&cli.out)?;
            println!("method,budget,trials,mean_total_fraction,mean_disparity");
            for a in agg {
                println!(
                    "{},{},{},{},{}",
                    a.method,
                    a.budget,
                    a.trials,
                    a.mean_total_fraction,
                    a.mean_disparity.map(|d| d.to_string()).unwrap_or_default()
                );
            }
        }
    }
    Ok(0)
}

fn exit_code(kind: ErrorKind) -> u8 {
    match kind {
        ErrorKind::Config => 2,
        ErrorKind::Data => 3,
        ErrorKind::Numerical => 4,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(e.kind()))
        }
    }
}
