//! Subcommands of the `netwalk` binary. Each `cmd_*` function runs one
//! subcommand and writes its outputs, plus a `manifest.json`, into the
//! requested directory.

pub mod manifest;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use netwalk::assembler::{assemble_graph, scores_for_pairs, symmetrize, ScoreMatrix};
use netwalk::evaluator::{adamic_adar, evaluate_link_prediction, results_csv, Holdout, ResultRow};
use netwalk::latent::{bin_properties, heatmap_csv, trajectory, BinContext, LatentGrid};
use netwalk::model::Checkpoint;
use netwalk::stats::{comparison_csv, compute_stats, CommunityAssignment, StatsReport};
use netwalk::synthetic::{configuration_model, sample_dcsbm, DcSbmSpec};
use netwalk::trainer::{generate_counts, train_with, StopMode, TrainConfig};
use netwalk::{largest_connected_component, load_edge_list, split_edges, EdgeSplit, Graph};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use manifest::ManifestBuilder;

pub const CHECKPOINT: &str = "checkpoint.bin";
pub const GRAPH: &str = "graph.txt";
pub const NODES: &str = "nodes.tsv";
pub const SPLIT: &str = "split.json";
pub const LOG: &str = "log.jsonl";
pub const SCORES: &str = "scores.txt";
pub const CONFIG: &str = "config.json";

/// A bad invocation or unreadable input; exits with code 2.
#[derive(Debug)]
pub struct InputError(pub String);

impl std::fmt::Display for InputError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for InputError {}

/// 2 for input errors, 1 for everything else.
pub fn exit_code(e: &anyhow::Error) -> u8 {
    if e.chain().any(|c| c.is::<InputError>()) {
        2
    } else {
        1
    }
}

fn input_error(message: impl Into<String>) -> anyhow::Error {
    InputError(message.into()).into()
}

#[derive(Debug, Parser)]
#[command(name = "netwalk", version, about = "Learn a graph's random walks and generate graphs from them")]
pub struct Cli {
    /// Cap on worker threads (falls back to NETWALK_THREADS).
    #[arg(long, global = true, env = "NETWALK_THREADS")]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a generator on an edge list.
    Train(TrainArgs),
    /// Sample walks from a trained run and assemble a graph.
    Generate(GenerateArgs),
    /// Compute graph statistics and compare graphs.
    Stats(StatsArgs),
    /// Score held-out edges of a trained run.
    Linkpred(LinkpredArgs),
    /// Evaluate a two-dimensional latent grid bin by bin.
    Interpolate(InterpolateArgs),
    /// Sample synthetic graphs.
    Synth(SynthArgs),
}

pub fn run(cli: Cli) -> Result<()> {
    if let Some(threads) = cli.threads {
        if threads == 0 {
            return Err(input_error("--threads must be at least 1"));
        }
        // fails only if a pool already exists, as in repeated calls from tests
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    }
    match cli.command {
        Command::Train(a) => cmd_train(&a),
        Command::Generate(a) => cmd_generate(&a),
        Command::Stats(a) => cmd_stats(&a),
        Command::Linkpred(a) => cmd_linkpred(&a),
        Command::Interpolate(a) => cmd_interpolate(&a),
        Command::Synth(a) => cmd_synth(&a),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
pub enum StopArg {
    Val,
    Eo,
}

#[derive(Clone, Debug, Args, Serialize)]
pub struct TrainArgs {
    /// Edge list, two node ids per line.
    #[arg(long, short)]
    pub input: PathBuf,
    /// Output directory.
    #[arg(long, short)]
    pub out: PathBuf,
    /// JSON training configuration; flags override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub stop: Option<StopArg>,
    #[arg(long)]
    pub target_eo: Option<f64>,
    /// Share of edges held out for validation.
    #[arg(long, default_value_t = 0.10)]
    pub val_frac: f64,
    /// Share of edges held out for testing.
    #[arg(long, default_value_t = 0.05)]
    pub test_frac: f64,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub max_iters: Option<u64>,
    #[arg(long)]
    pub eval_every: Option<u64>,
    #[arg(long)]
    pub eval_transitions: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub window: Option<u64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub walk_len: Option<usize>,
    #[arg(long)]
    pub latent_dim: Option<usize>,
    #[arg(long)]
    pub p: Option<f64>,
    #[arg(long)]
    pub q: Option<f64>,
    /// Wall-clock budget in seconds.
    #[arg(long)]
    pub time_budget: Option<f64>,
    /// Do not echo log records to stderr.
    #[arg(long)]
    pub quiet: bool,
}

impl TrainArgs {
    /// Minimal arguments; everything else at its default.
    pub fn new(input: impl Into<PathBuf>, out: impl Into<PathBuf>) -> Self {
        TrainArgs {
            input: input.into(),
            out: out.into(),
            config: None,
            stop: None,
            target_eo: None,
            val_frac: 0.10,
            test_frac: 0.05,
            seed: None,
            lr: None,
            max_iters: None,
            eval_every: None,
            eval_transitions: None,
            patience: None,
            window: None,
            batch_size: None,
            walk_len: None,
            latent_dim: None,
            p: None,
            q: None,
            time_budget: None,
            quiet: false,
        }
    }

    /// The configuration file (or the defaults) with the flags applied.
    pub fn effective_config(&self) -> Result<TrainConfig> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = read_input(path)?;
                serde_json::from_str(&text)
                    .map_err(|e| input_error(format!("{}: invalid configuration: {e}", path.display())))?
            }
            None => TrainConfig::default(),
        };
        if let Some(stop) = self.stop {
            cfg.stop_mode = match stop {
                StopArg::Val => StopMode::Val,
                StopArg::Eo => StopMode::Eo,
            };
        }
        macro_rules! apply {
            ($($field:ident => $target:ident),* $(,)?) => {
                $(if let Some(v) = self.$field { cfg.$target = v; })*
            };
        }
        apply!(
            target_eo => target_eo,
            seed => seed,
            lr => lr,
            max_iters => max_iters,
            eval_every => eval_every,
            eval_transitions => eval_transitions,
            patience => patience,
            window => window,
            batch_size => batch_size,
            walk_len => walk_len,
            latent_dim => latent_dim,
            p => p,
            q => q,
        );
        if self.time_budget.is_some() {
            cfg.time_budget_secs = self.time_budget;
        }
        cfg.validate().map_err(|e| input_error(e.to_string()))?;
        Ok(cfg)
    }
}

fn read_input(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| input_error(format!("{}: {e}", path.display())))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

/// Reads an edge list, reporting any problem as an input error.
fn read_graph(path: &Path) -> Result<netwalk::LoadedGraph> {
    if !path.is_file() {
        return Err(input_error(format!("{}: no such file", path.display())));
    }
    load_edge_list(path).map_err(|e| input_error(format!("{}: {e}", path.display())))
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>, manifest: &mut ManifestBuilder) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))?;
    manifest.output(path);
    Ok(())
}

fn edge_list_text(g: &Graph, ids: &[u64]) -> String {
    let mut out = String::new();
    for (u, v) in g.edges() {
        writeln!(out, "{}\t{}", ids[u], ids[v]).expect("writing to a String");
    }
    out
}

fn nodes_text(ids: &[u64]) -> String {
    let mut out = String::from("# index\tid\n");
    for (i, id) in ids.iter().enumerate() {
        writeln!(out, "{i}\t{id}").expect("writing to a String");
    }
    out
}

fn parse_nodes(text: &str) -> Result<Vec<u64>> {
    let mut ids = Vec::new();
    for line in text.lines().filter(|l| !l.starts_with('#') && !l.trim().is_empty()) {
        let mut fields = line.split('\t');
        let (Some(index), Some(id)) = (fields.next(), fields.next()) else {
            bail!("malformed node mapping line {line:?}");
        };
        if index.parse::<usize>()? != ids.len() {
            bail!("node mapping is not in index order");
        }
        ids.push(id.parse()?);
    }
    Ok(ids)
}

/// Seeds drawn in a fixed order from the run's root seed.
fn derive_seeds<const K: usize>(root: u64) -> [u64; K] {
    let mut rng = ChaCha8Rng::seed_from_u64(root);
    std::array::from_fn(|_| rng.random())
}

/// Output of [`cmd_train`].
///
/// Run directory layout: `checkpoint.bin`, `graph.txt` (the training input's
/// largest component, original ids), `nodes.tsv` (internal index to original
/// id), `split.json`, `log.jsonl`, `scores.txt` (window transition counts at
/// the checkpoint), `config.json` and `manifest.json`.
pub fn cmd_train(args: &TrainArgs) -> Result<()> {
    let cfg = args.effective_config()?;
    if cfg.stop_mode == StopMode::Val && args.val_frac <= 0.0 {
        return Err(input_error("validation stopping needs --val-frac above 0"));
    }
    let loaded = read_graph(&args.input)?;
    create_dir(&args.out)?;
    let mut manifest = ManifestBuilder::new("train", args)?;
    manifest.input(&args.input)?;
    if let Some(c) = &args.config {
        manifest.input(c)?;
    }

    let lcc = largest_connected_component(&loaded.graph)?;
    let ids: Vec<u64> = lcc.new_to_old.iter().map(|&u| loaded.ids[u]).collect();
    let [split_seed, train_seed] = derive_seeds(cfg.seed);
    manifest.seed("root", cfg.seed);
    manifest.seed("split", split_seed);
    manifest.seed("train", train_seed);
    let split = split_edges(&lcc.graph, args.val_frac, args.test_frac, split_seed)?;

    write_file(&args.out.join(GRAPH), edge_list_text(&lcc.graph, &ids), &mut manifest)?;
    write_file(&args.out.join(NODES), nodes_text(&ids), &mut manifest)?;
    write_file(&args.out.join(SPLIT), split.to_json()? + "\n", &mut manifest)?;
    write_file(&args.out.join(CONFIG), serde_json::to_string_pretty(&cfg)? + "\n", &mut manifest)?;

    let log_path = args.out.join(LOG);
    let mut log = String::new();
    let run_cfg = TrainConfig { seed: train_seed, ..cfg.clone() };
    let outcome = train_with(&split, &run_cfg, |r, _| {
        let line = serde_json::to_string(r).expect("log records serialize");
        if !args.quiet {
            eprintln!("{line}");
        }
        log.push_str(&line);
        log.push('\n');
    })?;
    for w in &outcome.warnings {
        eprintln!("warning: {w}");
    }
    write_file(&log_path, log, &mut manifest)?;
    let ckpt = args.out.join(CHECKPOINT);
    outcome.checkpoint.save(&ckpt)?;
    manifest.output(&ckpt);
    let scores = args.out.join(SCORES);
    outcome.scores.write_text(&scores)?;
    manifest.output(&scores);
    manifest.finish(&args.out)?;
    Ok(())
}

/// Everything [`cmd_train`] leaves in its output directory.
pub struct TrainedRun {
    pub checkpoint: Checkpoint,
    pub graph: Graph,
    pub ids: Vec<u64>,
    pub split: EdgeSplit,
    pub files: Vec<PathBuf>,
}

impl TrainedRun {
    pub fn open(dir: &Path) -> Result<Self> {
        if !dir.is_dir() {
            return Err(input_error(format!("{}: not a run directory", dir.display())));
        }
        let path = |name: &str| dir.join(name);
        let loaded = read_graph(&path(GRAPH))?;
        let ids = parse_nodes(&read_input(&path(NODES))?)
            .map_err(|e| input_error(format!("{}: {e}", path(NODES).display())))?;
        if ids != loaded.ids {
            return Err(input_error(format!("{} does not match {}", path(NODES).display(), path(GRAPH).display())));
        }
        let split = EdgeSplit::from_json(&read_input(&path(SPLIT))?, &loaded.graph)
            .map_err(|e| input_error(format!("{}: {e}", path(SPLIT).display())))?;
        if !path(CHECKPOINT).is_file() {
            return Err(input_error(format!("{}: no such file", path(CHECKPOINT).display())));
        }
        let checkpoint = Checkpoint::load(path(CHECKPOINT))
            .map_err(|e| input_error(format!("{}: {e}", path(CHECKPOINT).display())))?;
        if checkpoint.generator.dims.n != loaded.graph.n() {
            return Err(input_error(format!(
                "checkpoint has {} nodes but the graph has {}",
                checkpoint.generator.dims.n,
                loaded.graph.n()
            )));
        }
        Ok(TrainedRun {
            checkpoint,
            graph: loaded.graph,
            ids,
            split,
            files: vec![path(GRAPH), path(NODES), path(SPLIT), path(CHECKPOINT)],
        })
    }

    fn record_inputs(&self, manifest: &mut ManifestBuilder) -> Result<()> {
        self.files.iter().try_for_each(|f| manifest.input(f))
    }

    /// Symmetrized transition counts of `walks` fresh walks.
    fn sample_scores(&self, walks: usize, seed: u64) -> Result<ScoreMatrix> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let counts = generate_counts(&self.checkpoint.generator, walks, self.checkpoint.walk_len, 1024, &mut rng)?;
        Ok(symmetrize(&counts))
    }
}

#[derive(Clone, Debug, Args, Serialize)]
pub struct GenerateArgs {
    /// Directory written by `train`.
    #[arg(long)]
    pub run: PathBuf,
    #[arg(long, short)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 500_000)]
    pub walks: usize,
    /// Edge count of the generated graph; defaults to the training input's.
    #[arg(long)]
    pub edges: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

/// Writes `edges.txt` (original ids) and `scores.txt` (symmetrized counts,
/// internal indices).
pub fn cmd_generate(args: &GenerateArgs) -> Result<()> {
    let run = TrainedRun::open(&args.run)?;
    if args.walks == 0 {
        return Err(input_error("--walks must be positive"));
    }
    create_dir(&args.out)?;
    let mut manifest = ManifestBuilder::new("generate", args)?;
    run.record_inputs(&mut manifest)?;
    let [walk_seed, assemble_seed] = derive_seeds(args.seed);
    manifest.seed("root", args.seed);
    manifest.seed("walks", walk_seed);
    manifest.seed("assemble", assemble_seed);

    let scores = run.sample_scores(args.walks, walk_seed)?;
    let m = args.edges.unwrap_or(run.graph.m());
    let g = assemble_graph(&scores, m, assemble_seed)?;
    write_file(&args.out.join("edges.txt"), edge_list_text(&g, &run.ids), &mut manifest)?;
    let path = args.out.join(SCORES);
    scores.write_text(&path)?;
    manifest.output(&path);
    manifest.finish(&args.out)?;
    Ok(())
}

#[derive(Clone, Debug, Args, Serialize)]
pub struct StatsArgs {
    /// Graph the others are compared against.
    #[arg(long)]
    pub reference: PathBuf,
    /// Graphs to compare; repeat the flag for several.
    #[arg(long = "candidate")]
    pub candidates: Vec<PathBuf>,
    /// `node_id community_id` lines.
    #[arg(long)]
    pub communities: Option<PathBuf>,
    #[arg(long, short)]
    pub out: PathBuf,
}

/// Writes `stats.json` and, with candidates, `comparison.csv`.
pub fn cmd_stats(args: &StatsArgs) -> Result<()> {
    let paths: Vec<&PathBuf> = std::iter::once(&args.reference).chain(&args.candidates).collect();
    let mut reports: Vec<(String, StatsReport)> = Vec::new();
    for path in &paths {
        let loaded = read_graph(path)?;
        let communities = match &args.communities {
            Some(c) => Some(
                CommunityAssignment::load(c, &loaded.ids)
                    .map_err(|e| input_error(format!("{}: {e}", c.display())))?,
            ),
            None => None,
        };
        reports.push((path.display().to_string(), compute_stats(&loaded.graph, communities.as_ref())?));
    }
    create_dir(&args.out)?;
    let mut manifest = ManifestBuilder::new("stats", args)?;
    for path in &paths {
        manifest.input(path)?;
    }
    if let Some(c) = &args.communities {
        manifest.input(c)?;
    }
    let json: Vec<serde_json::Value> = reports
        .iter()
        .map(|(name, r)| serde_json::json!({ "graph": name, "stats": r }))
        .collect();
    write_file(&args.out.join("stats.json"), serde_json::to_string_pretty(&json)? + "\n", &mut manifest)?;
    if reports.len() > 1 {
        let candidates: Vec<(&str, &StatsReport)> = reports[1..].iter().map(|(n, r)| (n.as_str(), r)).collect();
        let csv = comparison_csv((&reports[0].0, &reports[0].1), &candidates)?;
        write_file(&args.out.join("comparison.csv"), csv, &mut manifest)?;
    }
    manifest.finish(&args.out)?;
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Generator,
    AdamicAdar,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
pub enum HoldoutArg {
    Val,
    Test,
}

#[derive(Clone, Debug, Args, Serialize)]
pub struct LinkpredArgs {
    #[arg(long)]
    pub run: PathBuf,
    #[arg(long, value_enum, default_value_t = Method::Generator)]
    pub method: Method,
    #[arg(long, value_enum, default_value_t = HoldoutArg::Test)]
    pub holdout: HoldoutArg,
    /// Fresh walks scored by the generator; 0 uses the training window counts.
    #[arg(long, default_value_t = 500_000)]
    pub walks: usize,
    /// Dataset label in the results row; defaults to the run directory name.
    #[arg(long)]
    pub dataset: Option<String>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, short)]
    pub out: PathBuf,
}

/// Writes `linkpred.json` (one results row) and `linkpred.csv`.
pub fn cmd_linkpred(args: &LinkpredArgs) -> Result<()> {
    let run = TrainedRun::open(&args.run)?;
    create_dir(&args.out)?;
    let mut manifest = ManifestBuilder::new("linkpred", args)?;
    run.record_inputs(&mut manifest)?;
    manifest.seed("root", args.seed);
    let which = match args.holdout {
        HoldoutArg::Val => Holdout::Val,
        HoldoutArg::Test => Holdout::Test,
    };
    let (method, result) = match args.method {
        Method::AdamicAdar => (
            "Adamic/Adar",
            evaluate_link_prediction(|p| adamic_adar(&run.split.train, p), &run.split, which)?,
        ),
        Method::Generator => {
            let scores = if args.walks == 0 {
                let path = args.run.join(SCORES);
                manifest.input(&path)?;
                let counts = ScoreMatrix::read_text(&path, run.graph.n())
                    .map_err(|e| input_error(format!("{}: {e}", path.display())))?;
                symmetrize(&counts)
            } else {
                let [walk_seed] = derive_seeds(args.seed);
                manifest.seed("walks", walk_seed);
                run.sample_scores(args.walks, walk_seed)?
            };
            ("generator", evaluate_link_prediction(|p| scores_for_pairs(&scores, p), &run.split, which)?)
        }
    };
    let dataset = args.dataset.clone().unwrap_or_else(|| {
        args.run
            .file_name()
            .map_or_else(|| "graph".to_string(), |n| n.to_string_lossy().into_owned())
    });
    let row = ResultRow {
        method: method.to_string(),
        dataset,
        auc: result.auc,
        ap: result.ap,
    };
    let json = serde_json::json!({ "holdout": which, "walks": args.walks, "result": row });
    write_file(&args.out.join("linkpred.json"), serde_json::to_string_pretty(&json)? + "\n", &mut manifest)?;
    write_file(&args.out.join("linkpred.csv"), results_csv(std::slice::from_ref(&row)), &mut manifest)?;
    manifest.finish(&args.out)?;
    Ok(())
}

#[derive(Clone, Debug, Args, Serialize)]
pub struct InterpolateArgs {
    /// Run trained with a two-dimensional latent space.
    #[arg(long)]
    pub run: PathBuf,
    #[arg(long, default_value_t = 20)]
    pub bins: usize,
    #[arg(long, default_value_t = 5_000)]
    pub walks_per_bin: usize,
    #[arg(long)]
    pub communities: Option<PathBuf>,
    /// Also report the bins along this axis...
    #[arg(long, requires = "fixed")]
    pub axis: Option<usize>,
    /// ...with the other coordinate fixed to this bin.
    #[arg(long)]
    pub fixed: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, short)]
    pub out: PathBuf,
}

/// Writes `bins.json`, one `heatmap_<metric>.csv` per metric and, with
/// `--axis`, `trajectory.json`.
pub fn cmd_interpolate(args: &InterpolateArgs) -> Result<()> {
    let run = TrainedRun::open(&args.run)?;
    let grid = LatentGrid::new(2, args.bins).map_err(|e| input_error(e.to_string()))?;
    if run.checkpoint.generator.dims.latent_dim != 2 {
        return Err(input_error(format!(
            "the latent grid needs a two-dimensional latent space, the run has {}",
            run.checkpoint.generator.dims.latent_dim
        )));
    }
    let communities = match &args.communities {
        Some(c) => Some(
            CommunityAssignment::load(c, &run.ids).map_err(|e| input_error(format!("{}: {e}", c.display())))?,
        ),
        None => None,
    };
    let path_bins = match (args.axis, args.fixed) {
        (Some(axis), Some(fixed)) => {
            Some(trajectory(&grid, axis, &[fixed]).map_err(|e| input_error(e.to_string()))?)
        }
        _ => None,
    };
    create_dir(&args.out)?;
    let mut manifest = ManifestBuilder::new("interpolate", args)?;
    run.record_inputs(&mut manifest)?;
    if let Some(c) = &args.communities {
        manifest.input(c)?;
    }
    manifest.seed("root", args.seed);

    let ctx = BinContext {
        graph: &run.split.train,
        communities: communities.as_ref(),
        split: Some(&run.split),
    };
    let reports = bin_properties(
        &run.checkpoint.generator,
        run.checkpoint.walk_len,
        &grid,
        args.walks_per_bin,
        args.seed,
        &ctx,
    )?;
    write_file(&args.out.join("bins.json"), serde_json::to_string_pretty(&reports)? + "\n", &mut manifest)?;
    if let Some(first) = reports.first() {
        for metric in first.metrics.keys() {
            write_file(&args.out.join(format!("heatmap_{metric}.csv")), heatmap_csv(&reports, metric), &mut manifest)?;
        }
    }
    if let Some(bins) = path_bins {
        let along: Vec<_> = bins
            .iter()
            .map(|b| reports.iter().find(|r| &r.bin == b).expect("grid covers every bin"))
            .collect();
        write_file(&args.out.join("trajectory.json"), serde_json::to_string_pretty(&along)? + "\n", &mut manifest)?;
    }
    manifest.finish(&args.out)?;
    Ok(())
}

#[derive(Clone, Debug, Args, Serialize)]
pub struct SynthArgs {
    #[command(subcommand)]
    pub model: SynthModel,
}

#[derive(Clone, Debug, Subcommand, Serialize)]
pub enum SynthModel {
    /// Degree-corrected stochastic blockmodel with equal planted blocks.
    Dcsbm(DcsbmArgs),
    /// Configuration model keeping a share of the input's edges.
    Config(ConfigModelArgs),
}

#[derive(Clone, Debug, Args, Serialize)]
pub struct DcsbmArgs {
    #[arg(long, default_value_t = 300)]
    pub n: usize,
    #[arg(long, default_value_t = 3)]
    pub k: usize,
    /// Affinity within a block.
    #[arg(long, default_value_t = DESK_OMEGA_IN)]
    pub omega_in: f64,
    /// Affinity between blocks.
    #[arg(long, default_value_t = DESK_OMEGA_OUT)]
    pub omega_out: f64,
    /// Degree propensities fall off as `(rank + offset)^(-exponent)`.
    #[arg(long, default_value_t = DESK_EXPONENT)]
    pub exponent: f64,
    #[arg(long, default_value_t = DESK_OFFSET)]
    pub offset: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, short)]
    pub out: PathBuf,
}

pub const DESK_OMEGA_IN: f64 = 1500.0;
pub const DESK_OMEGA_OUT: f64 = 150.0;
pub const DESK_EXPONENT: f64 = 1.2;
pub const DESK_OFFSET: f64 = 2.0;

impl DcsbmArgs {
    pub fn new(out: impl Into<PathBuf>) -> Self {
        DcsbmArgs {
            n: 300,
            k: 3,
            omega_in: DESK_OMEGA_IN,
            omega_out: DESK_OMEGA_OUT,
            exponent: DESK_EXPONENT,
            offset: DESK_OFFSET,
            seed: 0,
            out: out.into(),
        }
    }

    pub fn spec(&self) -> Result<DcSbmSpec> {
        if self.k == 0 || !self.n.is_multiple_of(self.k) {
            return Err(input_error(format!("--n {} is not a multiple of --k {}", self.n, self.k)));
        }
        DcSbmSpec::planted(self.k, self.n / self.k, self.omega_in, self.omega_out, self.exponent, self.offset)
            .map_err(|e| input_error(e.to_string()))
    }
}

#[derive(Clone, Debug, Args, Serialize)]
pub struct ConfigModelArgs {
    #[arg(long, short)]
    pub input: PathBuf,
    /// Share of the input's edges kept in place.
    #[arg(long, default_value_t = 0.0)]
    pub keep: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, short)]
    pub out: PathBuf,
}

/// `dcsbm` writes `graph.txt`, `communities.tsv`, `probabilities.tsv` (every
/// pair with positive probability) and `spec.json`; `config` writes
/// `graph.txt`. Node ids are internal indices, so isolated nodes of a DC-SBM
/// sample are absent from `graph.txt` but present in `communities.tsv`.
pub fn cmd_synth(args: &SynthArgs) -> Result<()> {
    match &args.model {
        SynthModel::Dcsbm(a) => {
            let spec = a.spec()?;
            create_dir(&a.out)?;
            let mut manifest = ManifestBuilder::new("synth dcsbm", a)?;
            manifest.seed("root", a.seed);
            let sample = sample_dcsbm(&spec, a.seed)?;
            let ids: Vec<u64> = (0..spec.n() as u64).collect();
            write_file(&a.out.join(GRAPH), edge_list_text(&sample.graph, &ids), &mut manifest)?;
            let mut comm = String::new();
            for (u, b) in spec.blocks.iter().enumerate() {
                writeln!(comm, "{u}\t{b}").expect("writing to a String");
            }
            write_file(&a.out.join("communities.tsv"), comm, &mut manifest)?;
            let mut probs = String::new();
            for u in 0..spec.n() {
                for v in u + 1..spec.n() {
                    let p = sample.probabilities[[u, v]];
                    if p > 0.0 {
                        writeln!(probs, "{u}\t{v}\t{p}").expect("writing to a String");
                    }
                }
            }
            write_file(&a.out.join("probabilities.tsv"), probs, &mut manifest)?;
            write_file(&a.out.join("spec.json"), serde_json::to_string_pretty(&spec)? + "\n", &mut manifest)?;
            manifest.finish(&a.out)?;
        }
        SynthModel::Config(a) => {
            let loaded = read_graph(&a.input)?;
            if !(0.0..=1.0).contains(&a.keep) {
                return Err(input_error("--keep must lie in [0, 1]"));
            }
            create_dir(&a.out)?;
            let mut manifest = ManifestBuilder::new("synth config", a)?;
            manifest.input(&a.input)?;
            manifest.seed("root", a.seed);
            let g = configuration_model(&loaded.graph, a.keep, a.seed)?;
            write_file(&a.out.join(GRAPH), edge_list_text(&g, &loaded.ids), &mut manifest)?;
            manifest.finish(&a.out)?;
        }
    }
    Ok(())
}
