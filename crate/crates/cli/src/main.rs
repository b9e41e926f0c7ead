use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use embench::data::{
    load_task_dataset, load_training_pairs, write_training_pairs, LoadOptions, PrefixKind, TaskDataset, TaskKind,
};
use embench::embed::{
    dot, init_params, read_checkpoint, write_checkpoint, Embedder, Pooling, PrecomputedEmbedder, RemoteConfig,
    RemoteEmbedder, ToyEmbedder, DEFAULT_DIM, DEFAULT_VOCAB,
};
use embench::eval::{load_suite, run_benchmark, ProtocolConfig};
use embench::filter::{co2_estimate, dedup_exact, filter_by_length, filter_by_similarity, DEFAULT_PUE, MAX_TOKENS};
use embench::json::to_canonical_string;
use embench::merge::{slerp_merge, WeightFile, MERGE_FACTOR, POST_TRAIN_FACTOR};
use embench::mine::{mine_hard_negatives, write_mined, MiningConfig, MiningQuery};
use embench::report::AggregationMode;
use embench::synth::{cluster_training_pairs, write_synthetic_suite, ClusterCorpus, ClusterSpec};
use embench::train::{train, write_train_log, LossVariant, TrainConfig};
use embench::{Error, Result};

const EXIT_INVALID: u8 = 2;
const EXIT_TRANSPORT: u8 = 3;

#[derive(Parser)]
#[command(
    name = "embench",
    version,
    about = "Embedding benchmark and contrastive fine-tuning toolkit"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate an embedder on a suite manifest.
    Eval(EvalArgs),
    /// Fine-tune the toy encoder on training pairs.
    Train(TrainArgs),
    /// Mine hard negatives for a retrieval dataset.
    Mine(MineArgs),
    /// Spherically interpolate two weight files.
    Merge(MergeArgs),
    /// Length, duplicate and similarity filtering of training pairs.
    Filter(FilterArgs),
    /// Estimate training emissions in kg of CO2.
    Co2(Co2Args),
    /// Write the synthetic suite and cluster corpus.
    Synth(SynthArgs),
    /// Print every default configuration.
    Defaults,
    /// Serve a deterministic embedding endpoint for testing.
    StubServer(StubArgs),
}

#[derive(Args)]
struct EvalArgs {
    /// Suite manifest (JSON list of tasks).
    #[arg(long)]
    manifest: PathBuf,
    /// `toy:<checkpoint>`, `toy:seed=<n>`, `precomputed:<dir>` or `remote:<url>`.
    #[arg(long)]
    embedder: String,
    /// Directory for report.json and report.md.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    samples_per_label: Option<usize>,
    #[arg(long, value_enum, default_value_t = Aggregation::Category)]
    aggregation: Aggregation,
    #[arg(long, value_enum)]
    pooling: Option<PoolingArg>,
    #[arg(long)]
    no_prefixes: bool,
    /// Run bootstrap iterations in parallel. Reports are identical either way.
    #[arg(long)]
    parallel: bool,
}

#[derive(Args)]
struct TrainArgs {
    /// Training pairs (JSONL).
    #[arg(long)]
    pairs: PathBuf,
    /// Output checkpoint.
    #[arg(long)]
    out: PathBuf,
    /// Starting checkpoint; defaults to a seeded initialization.
    #[arg(long)]
    init: Option<PathBuf>,
    /// Seed of the default initialization.
    #[arg(long, default_value_t = 0)]
    init_seed: u64,
    /// Per-step JSONL log.
    #[arg(long)]
    log: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    temperature: Option<f64>,
    #[arg(long)]
    margin: Option<f64>,
    #[arg(long)]
    doc_penalty: Option<f64>,
    #[arg(long)]
    n_hard: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    warmup: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    weight_decay: Option<f64>,
    #[arg(long, value_enum)]
    pooling: Option<PoolingArg>,
    #[arg(long)]
    no_prefixes: bool,
    /// Sample batches from all datasets pooled together.
    #[arg(long)]
    pooled: bool,
}

#[derive(Args)]
struct MineArgs {
    /// Retrieval dataset directory (corpus.jsonl, queries.jsonl, qrels.tsv).
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    embedder: String,
    /// Output JSONL.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    rank_lo: Option<usize>,
    #[arg(long)]
    rank_hi: Option<usize>,
    #[arg(long)]
    n_neg: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    pooling: Option<PoolingArg>,
    #[arg(long)]
    no_prefixes: bool,
}

#[derive(Args)]
struct MergeArgs {
    /// First endpoint, returned at t = 0.
    #[arg(long)]
    model: PathBuf,
    /// Second endpoint, returned at t = 1.
    #[arg(long)]
    base: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Interpolation factor in [0, 1].
    #[arg(long, conflicts_with = "preset")]
    t: Option<f64>,
    #[arg(long, value_enum)]
    preset: Option<MergePreset>,
}

#[derive(Args)]
struct FilterArgs {
    #[arg(long)]
    pairs: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = MAX_TOKENS)]
    max_tokens: usize,
    /// Skip exact (query, positive) deduplication.
    #[arg(long)]
    no_dedup: bool,
    /// Drop pairs whose query-positive cosine is below this value.
    #[arg(long, requires = "embedder")]
    min_similarity: Option<f64>,
    #[arg(long)]
    embedder: Option<String>,
    #[arg(long, value_enum)]
    pooling: Option<PoolingArg>,
}

#[derive(Args)]
struct Co2Args {
    #[arg(long, default_value_t = DEFAULT_PUE)]
    pue: f64,
    #[arg(long)]
    kwh: f64,
    /// Grid carbon intensity in g/kWh.
    #[arg(long)]
    intensity: f64,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Training pairs generated for the cluster corpus.
    #[arg(long, default_value_t = 512)]
    pairs: usize,
}

#[derive(Args)]
struct StubArgs {
    #[arg(long, default_value = "127.0.0.1:8089")]
    addr: String,
    #[arg(long, default_value_t = 16)]
    dim: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum Aggregation {
    Category,
    Task,
}

impl From<Aggregation> for AggregationMode {
    fn from(a: Aggregation) -> Self {
        match a {
            Aggregation::Category => AggregationMode::CategoryMean,
            Aggregation::Task => AggregationMode::TaskMean,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum PoolingArg {
    Cls,
    Mean,
}

impl From<PoolingArg> for Pooling {
    fn from(p: PoolingArg) -> Self {
        match p {
            PoolingArg::Cls => Pooling::Cls,
            PoolingArg::Mean => Pooling::Mean,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum MergePreset {
    /// Merge with the original model after fine-tuning stages.
    Merge,
    /// Pull the final model back toward its base.
    PostTrain,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_transport() { EXIT_TRANSPORT } else { EXIT_INVALID })
        }
    }
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Eval(a) => cmd_eval(a),
        Command::Train(a) => cmd_train(a),
        Command::Mine(a) => cmd_mine(a),
        Command::Merge(a) => cmd_merge(a),
        Command::Filter(a) => cmd_filter(a),
        Command::Co2(a) => cmd_co2(a),
        Command::Synth(a) => cmd_synth(a),
        Command::Defaults => {
            print_config("defaults", &defaults())?;
            Ok(())
        }
        Command::StubServer(a) => {
            let server =
                embench::embed::stub::StubServer::bind(&a.addr, embench::embed::stub::StubConfig::tagged(a.dim))?;
            println!("listening on {}", server.url());
            server.join();
            Ok(())
        }
    }
}

/// Prints the resolved configuration of a command on stderr.
fn print_config<T: serde::Serialize>(command: &str, cfg: &T) -> Result<()> {
    eprint!("resolved {command} configuration:\n{}", to_canonical_string(cfg)?);
    Ok(())
}

fn defaults() -> serde_json::Value {
    json!({
        "eval": ProtocolConfig::default(),
        "train": TrainConfig::default(),
        "train_presets": {
            "margin": LossVariant::ABLATION_MARGIN,
            "doc_penalty": LossVariant::ABLATION_DOC_PENALTY,
            "full_scale_batch_size": TrainConfig::FULL_SCALE_BATCH_SIZE,
            "full_scale_lr": TrainConfig::FULL_SCALE_LR,
        },
        "mine": MiningConfig::default(),
        "merge_presets": { "merge": MERGE_FACTOR, "post_train": POST_TRAIN_FACTOR },
        "filter": { "max_tokens": MAX_TOKENS },
        "co2": { "pue": DEFAULT_PUE },
        "remote": RemoteConfig::default(),
    })
}

/// Describes an embedder spec for the configuration printout.
#[derive(serde::Serialize)]
struct EmbedderSpec<'a> {
    spec: &'a str,
    pooling: Pooling,
    #[serde(skip_serializing_if = "Option::is_none")]
    remote: Option<RemoteConfig>,
}

fn describe<'a>(spec: &'a str, pooling: Pooling) -> EmbedderSpec<'a> {
    let remote = spec.strip_prefix("remote:").map(RemoteConfig::from_env);
    EmbedderSpec { spec, pooling, remote }
}

fn open_embedder(spec: &str, pooling: Pooling) -> Result<Box<dyn Embedder>> {
    let (kind, rest) = spec
        .split_once(':')
        .ok_or_else(|| Error::InvalidInput(format!("embedder spec `{spec}` has no `kind:` prefix")))?;
    match kind {
        "toy" => {
            let params = match rest.strip_prefix("seed=") {
                Some(s) => {
                    let seed = s
                        .parse()
                        .map_err(|_| Error::InvalidInput(format!("bad toy seed `{s}`")))?;
                    init_params(seed, DEFAULT_VOCAB, DEFAULT_DIM)
                }
                None => read_checkpoint(Path::new(rest))?,
            };
            Ok(Box::new(ToyEmbedder::new(params, pooling)?))
        }
        "precomputed" => Ok(Box::new(PrecomputedEmbedder::load(Path::new(rest))?)),
        "remote" => {
            let emb = RemoteEmbedder::new(RemoteConfig::from_env(rest))?;
            emb.health_check()?;
            Ok(Box::new(emb))
        }
        _ => Err(Error::InvalidInput(format!("unknown embedder kind `{kind}`"))),
    }
}

fn write_file(path: &Path, body: &str) -> Result<()> {
    fs::write(path, body).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn cmd_eval(a: EvalArgs) -> Result<()> {
    let mut cfg = ProtocolConfig::default();
    if let Some(s) = a.seed {
        cfg.base_seed = s;
    }
    if let Some(r) = a.runs {
        cfg.runs = r;
    }
    if let Some(n) = a.samples_per_label {
        cfg.samples_per_label = n;
    }
    if let Some(p) = a.pooling {
        cfg.pooling = p.into();
    }
    cfg.prefixes_enabled = !a.no_prefixes;
    cfg.parallel = a.parallel;
    cfg.validate()?;
    let mode = AggregationMode::from(a.aggregation);
    print_config(
        "eval",
        &json!({
            "manifest": a.manifest,
            "embedder": describe(&a.embedder, cfg.pooling),
            "aggregation_mode": mode,
            "protocol": cfg,
            "parallel": cfg.parallel,
            "out": a.out,
        }),
    )?;
    let suite = load_suite(&a.manifest)?;
    let embedder = open_embedder(&a.embedder, cfg.pooling)?;
    let report = run_benchmark(&suite, embedder.as_ref(), &cfg, mode)?;
    fs::create_dir_all(&a.out).map_err(|source| Error::Io {
        path: a.out.clone(),
        source,
    })?;
    let table = report.to_table();
    write_file(&a.out.join("report.json"), &report.to_json()?)?;
    write_file(&a.out.join("report.md"), &table)?;
    print!("{table}");
    Ok(())
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    let mut cfg = TrainConfig::default();
    macro_rules! set {
        ($($field:ident = $value:expr),*) => {$(if let Some(v) = $value { cfg.$field = v; })*};
    }
    set!(
        seed = a.seed,
        temperature = a.temperature,
        n_hard = a.n_hard,
        batch_size = a.batch_size,
        total_steps = a.steps,
        warmup_steps = a.warmup,
        lr = a.lr,
        weight_decay = a.weight_decay
    );
    if let Some(m) = a.margin {
        cfg.variant.margin = m;
    }
    if let Some(l) = a.doc_penalty {
        cfg.variant.doc_penalty = l;
    }
    if let Some(p) = a.pooling {
        cfg.pooling = p.into();
    }
    cfg.prefixes_enabled = !a.no_prefixes;
    cfg.stratified = !a.pooled;
    print_config(
        "train",
        &json!({
            "pairs": a.pairs,
            "init": a.init.as_ref().map(|p| p.display().to_string()).unwrap_or(format!("seed={}", a.init_seed)),
            "out": a.out,
            "log": a.log,
            "train": cfg,
            "presets": { "margin": LossVariant::ABLATION_MARGIN, "doc_penalty": LossVariant::ABLATION_DOC_PENALTY },
        }),
    )?;
    cfg.validate()?;
    let pairs = load_training_pairs(&a.pairs)?;
    let init = match &a.init {
        Some(p) => read_checkpoint(p)?,
        None => init_params(a.init_seed, DEFAULT_VOCAB, DEFAULT_DIM),
    };
    let out = train(&pairs, &init, &cfg)?;
    write_checkpoint(&a.out, &out.params)?;
    if let Some(log) = &a.log {
        write_train_log(log, &out.log)?;
    }
    if let (Some(first), Some(last)) = (out.log.first(), out.log.last()) {
        println!("steps {} loss {:.6} -> {:.6}", out.log.len(), first.loss, last.loss);
    } else {
        println!("steps 0");
    }
    Ok(())
}

fn retrieval_queries(dir: &Path) -> Result<(Vec<MiningQuery>, Vec<embench::data::CorpusDoc>)> {
    let data = match load_task_dataset(dir, TaskKind::Retrieval, &LoadOptions::default())? {
        TaskDataset::Retrieval(r) => r,
        _ => unreachable!("retrieval loader returns retrieval data"),
    };
    let qrels = data.qrels_map();
    let queries = data
        .queries
        .iter()
        .map(|q| MiningQuery {
            query_id: q.id.clone(),
            text: q.text.clone(),
            positives: qrels
                .get(q.id.as_str())
                .map(|m| m.keys().map(|s| s.to_string()).collect())
                .unwrap_or_default(),
        })
        .collect();
    Ok((queries, data.corpus))
}

fn cmd_mine(a: MineArgs) -> Result<()> {
    let mut cfg = MiningConfig::default();
    if let Some(v) = a.rank_lo {
        cfg.rank_lo = v;
    }
    if let Some(v) = a.rank_hi {
        cfg.rank_hi = v;
    }
    if let Some(v) = a.n_neg {
        cfg.n_neg = v;
    }
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    cfg.prefixes_enabled = !a.no_prefixes;
    let pooling = a.pooling.map(Pooling::from).unwrap_or_default();
    print_config(
        "mine",
        &json!({ "dataset": a.dataset, "embedder": describe(&a.embedder, pooling), "mining": cfg, "out": a.out }),
    )?;
    cfg.validate()?;
    let (queries, corpus) = retrieval_queries(&a.dataset)?;
    let embedder = open_embedder(&a.embedder, pooling)?;
    let mined = mine_hard_negatives(&queries, &corpus, embedder.as_ref(), &cfg)?;
    write_mined(&a.out, &mined)?;
    println!("mined negatives for {} queries", mined.len());
    Ok(())
}

fn cmd_merge(a: MergeArgs) -> Result<()> {
    let t = match (a.t, a.preset) {
        (Some(t), _) => t,
        (None, Some(MergePreset::Merge)) => MERGE_FACTOR,
        (None, Some(MergePreset::PostTrain)) => POST_TRAIN_FACTOR,
        (None, None) => return Err(Error::InvalidInput("pass --t or --preset".into())),
    };
    print_config(
        "merge",
        &json!({
            "model": a.model,
            "base": a.base,
            "out": a.out,
            "t": t,
            "presets": { "merge": MERGE_FACTOR, "post_train": POST_TRAIN_FACTOR },
        }),
    )?;
    let model = WeightFile::read(&a.model)?;
    let base = WeightFile::read(&a.base)?;
    let merged = slerp_merge(&model.tensors(), &base.tensors(), t)?;
    model.like(merged)?.write(&a.out)?;
    println!("merged with t = {t}");
    Ok(())
}

fn cmd_filter(a: FilterArgs) -> Result<()> {
    let pooling = a.pooling.map(Pooling::from).unwrap_or_default();
    print_config(
        "filter",
        &json!({
            "pairs": a.pairs,
            "out": a.out,
            "max_tokens": a.max_tokens,
            "dedup": !a.no_dedup,
            "min_similarity": a.min_similarity,
            "embedder": a.embedder.as_deref().map(|s| describe(s, pooling)),
        }),
    )?;
    let pairs = load_training_pairs(&a.pairs)?;
    let total = pairs.len();
    let (mut pairs, too_long) = filter_by_length(pairs, a.max_tokens)?;
    let mut duplicates = 0;
    if !a.no_dedup {
        (pairs, duplicates) = dedup_exact(pairs);
    }
    let before = pairs.len();
    if let (Some(threshold), Some(spec)) = (a.min_similarity, &a.embedder) {
        let embedder = open_embedder(spec, pooling)?;
        let scorer = |q: &str, p: &str| -> Result<f64> {
            let m = embedder.embed(&[q.to_string(), p.to_string()], PrefixKind::None)?;
            Ok(dot(m.row(0), m.row(1)))
        };
        pairs = filter_by_similarity(pairs, scorer, threshold)?;
    }
    write_training_pairs(&a.out, &pairs)?;
    println!(
        "read {total} kept {} dropped: too long {too_long}, duplicate {duplicates}, dissimilar {}",
        pairs.len(),
        before - pairs.len()
    );
    Ok(())
}

fn cmd_co2(a: Co2Args) -> Result<()> {
    print_config("co2", &json!({ "pue": a.pue, "kwh": a.kwh, "intensity": a.intensity }))?;
    println!("{}", co2_estimate(a.pue, a.kwh, a.intensity)?);
    Ok(())
}

fn cmd_synth(a: SynthArgs) -> Result<()> {
    let spec = ClusterSpec::default();
    let mining = MiningConfig {
        seed: a.seed,
        ..MiningConfig::default()
    };
    print_config(
        "synth",
        &json!({ "out": a.out, "seed": a.seed, "pairs": a.pairs, "mining": mining, "init": format!("seed={}", a.seed) }),
    )?;
    let manifest = write_synthetic_suite(&a.out.join("suite"), a.seed)?;
    let corpus = ClusterCorpus::generate(&spec, a.seed)?;
    let clusters_dir = a.out.join("clusters");
    corpus.data.write_dir(&clusters_dir)?;
    let embedder = ToyEmbedder::new(init_params(a.seed, DEFAULT_VOCAB, DEFAULT_DIM), Pooling::Cls)?;
    let pairs = cluster_training_pairs(&corpus, &spec, a.pairs, a.seed, &embedder, &mining)?;
    let pairs_path = a.out.join("clusters_train.jsonl");
    write_training_pairs(&pairs_path, &pairs)?;
    let manifest_path = a.out.join("clusters_suite.json");
    write_file(
        &manifest_path,
        &(serde_json::to_string_pretty(&json!([{
            "name": "SynthClusters",
            "category": "Retrieval",
            "kind": "retrieval",
            "path": "clusters",
        }]))?
            + "\n"),
    )?;
    println!("{}", manifest.display());
    println!("{}", manifest_path.display());
    println!("{}", pairs_path.display());
    Ok(())
}
