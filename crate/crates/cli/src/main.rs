//! Command-line pipeline: dataset preparation, training, evaluation,
//! dimension sweeps, and latency benchmarks.
//!
//! Exit codes are a stable scripting contract: 0 success, 2 usage or
//! configuration error, 3 runtime or training failure. All artifacts land
//! under the command's output directory.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use triplh_core::dataio::{
    build_dataset, load_amazon_csv, load_movielens, load_split, save_split, InteractionDataset,
};
use triplh_core::error::Error;
use triplh_core::eval::{
    coverage, latency_bench, popularity_bins, popularity_shares, rank_test, score_histogram,
    EvalReport,
};
use triplh_core::model::{build_model, load_checkpoint, save_checkpoint, ModelConfig, ModelKind};
use triplh_core::trainer::{train_with_progress, OptimizerParams, TrainSchedule};

#[derive(Parser)]
#[command(
    name = "triplh",
    version,
    about = "Hyperbolic recommender training and evaluation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    /// MovieLens "user::item::rating::timestamp" lines
    Movielens,
    /// 4-column ratings CSV with optional header
    Csv,
}

#[derive(Subcommand)]
enum Command {
    /// Ingest a raw ratings file, split it, and write the split container.
    Prepare {
        /// Raw ratings file
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Movielens)]
        format: Format,
        /// Output directory
        #[arg(long, default_value = "triplh-out")]
        out: PathBuf,
        /// Drop interactions rated strictly below this value
        #[arg(long)]
        min_rating: Option<f64>,
    },
    /// Train a model on a prepared split.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Override the config's output directory
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the config's seed
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Evaluate a trained checkpoint on the test split.
    Evaluate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Add Coverage@10 and popularity-share analysis
        #[arg(long)]
        coverage: bool,
        /// Emit the positive/negative score histogram CSV
        #[arg(long)]
        histogram: bool,
    },
    /// Train and evaluate across embedding dimensions.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated embedding dimensions, e.g. 8,16,32
        #[arg(long, required = true, value_delimiter = ',')]
        dims: Vec<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Time squared-Lorentz vs Poincare scoring on random pairs.
    Bench {
        #[arg(long, default_value_t = 64)]
        dim: usize,
        /// Scored pairs per repetition
        #[arg(long, default_value_t = 2_000_000, value_parser = parse_positive)]
        pairs: usize,
        #[arg(long, default_value_t = 3, value_parser = parse_positive)]
        reps: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value = "triplh-out")]
        out: PathBuf,
    },
}

fn parse_positive(s: &str) -> Result<usize, String> {
    let n: usize = s.parse().map_err(|_| format!("'{s}' is not a number"))?;
    if n == 0 {
        return Err("must be at least 1".into());
    }
    Ok(n)
}

/// Flat run configuration. Every field defaults except the split path;
/// unknown keys are rejected to catch typos before a long run.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunConfig {
    split: PathBuf,
    #[serde(default = "default_out")]
    out: PathBuf,
    /// Trained checkpoint to evaluate; defaults to <out>/checkpoint.bin.
    #[serde(default)]
    checkpoint: Option<PathBuf>,

    #[serde(default = "default_model_kind")]
    model_kind: String,
    #[serde(default = "default_dim")]
    dim: usize,
    #[serde(default = "default_beta")]
    beta: f64,
    #[serde(default)]
    lambda: f64,
    #[serde(default = "default_init_scale")]
    init_scale: f64,

    #[serde(default = "default_learning_rate")]
    learning_rate: f64,
    #[serde(default = "default_weight_decay")]
    weight_decay: f64,
    #[serde(default = "default_beta1")]
    beta1: f64,
    #[serde(default = "default_beta2")]
    beta2: f64,
    #[serde(default = "default_epsilon")]
    epsilon: f64,

    #[serde(default = "default_max_epochs")]
    max_epochs: usize,
    #[serde(default = "default_batch_size")]
    batch_size: usize,
    #[serde(default = "default_negatives")]
    negatives_per_positive: usize,
    #[serde(default = "default_patience")]
    patience: usize,
    #[serde(default = "default_seed")]
    seed: u64,

    /// Model kinds retrained per dimension by `sweep`.
    #[serde(default = "default_sweep_models")]
    sweep_models: Vec<String>,
    #[serde(default = "default_histogram_bins")]
    histogram_bins: usize,
}

fn default_out() -> PathBuf {
    PathBuf::from("triplh-out")
}
fn default_model_kind() -> String {
    "TriplH".into()
}
fn default_dim() -> usize {
    64
}
fn default_beta() -> f64 {
    1.0
}
fn default_init_scale() -> f64 {
    0.01
}
fn default_learning_rate() -> f64 {
    1e-3
}
fn default_weight_decay() -> f64 {
    1e-5
}
fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_epsilon() -> f64 {
    1e-8
}
fn default_max_epochs() -> usize {
    100
}
fn default_batch_size() -> usize {
    1024
}
fn default_negatives() -> usize {
    1
}
fn default_patience() -> usize {
    10
}
fn default_seed() -> u64 {
    42
}
fn default_sweep_models() -> Vec<String> {
    vec!["TriplH".into(), "TriplE".into()]
}
fn default_histogram_bins() -> usize {
    50
}

impl RunConfig {
    fn load(path: &Path) -> Result<RunConfig, Error> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    fn model_config(&self) -> Result<ModelConfig, Error> {
        let model_kind = ModelKind::from_str(&self.model_kind)?;
        let cfg = ModelConfig {
            model_kind,
            dim: self.dim,
            beta: self.beta,
            lambda: self.lambda,
            init_scale: self.init_scale,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn schedule(&self) -> TrainSchedule {
        TrainSchedule {
            max_epochs: self.max_epochs,
            batch_size: self.batch_size,
            negatives_per_positive: self.negatives_per_positive,
            patience: self.patience,
            seed: self.seed,
            optimizer: OptimizerParams {
                learning_rate: self.learning_rate,
                weight_decay: self.weight_decay,
                beta1: self.beta1,
                beta2: self.beta2,
                epsilon: self.epsilon,
            },
        }
    }

    fn checkpoint_path(&self) -> PathBuf {
        self.checkpoint
            .clone()
            .unwrap_or_else(|| self.out.join("checkpoint.bin"))
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(err) = setup_threads() {
        eprintln!("error: {err}");
        std::process::exit(2);
    }
    match run(cli.command) {
        Ok(()) => {}
        Err(err) => {
            eprintln!("error: {err}");
            std::process::exit(exit_code(&err));
        }
    }
}

/// TRIPLH_THREADS caps rayon workers; 0 selects single-threaded
/// deterministic mode.
fn setup_threads() -> Result<(), String> {
    let Ok(raw) = std::env::var("TRIPLH_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .parse()
        .map_err(|_| format!("TRIPLH_THREADS must be a nonnegative integer, got '{raw}'"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n.max(1))
        .build_global()
        .map_err(|e| format!("thread pool: {e}"))
}

fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Diverged { .. }
        | Error::NonFiniteGradient { .. }
        | Error::TimerResolution { .. }
        | Error::EmptyEvaluation(..) => 3,
        _ => 2,
    }
}

fn run(command: Command) -> Result<(), Error> {
    match command {
        Command::Prepare {
            input,
            format,
            out,
            min_rating,
        } => cmd_prepare(&input, format, &out, min_rating),
        Command::Train { config, out, seed } => {
            let cfg = overridden(&config, out, seed)?;
            cmd_train(&cfg)
        }
        Command::Evaluate {
            config,
            out,
            seed,
            coverage,
            histogram,
        } => {
            let cfg = overridden(&config, out, seed)?;
            cmd_evaluate(&cfg, coverage, histogram)
        }
        Command::Sweep {
            config,
            dims,
            out,
            seed,
        } => {
            let cfg = overridden(&config, out, seed)?;
            cmd_sweep(&cfg, &dims)
        }
        Command::Bench {
            dim,
            pairs,
            reps,
            seed,
            out,
        } => cmd_bench(dim, pairs, reps, seed, &out),
    }
}

fn overridden(config: &Path, out: Option<PathBuf>, seed: Option<u64>) -> Result<RunConfig, Error> {
    let mut cfg = RunConfig::load(config)?;
    if let Some(out) = out {
        cfg.out = out;
    }
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn ensure_out(dir: &Path) -> Result<(), Error> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_out(path: &Path, bytes: &[u8]) -> Result<(), Error> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn cmd_prepare(
    input: &Path,
    format: Format,
    out: &Path,
    min_rating: Option<f64>,
) -> Result<(), Error> {
    let raw = match format {
        Format::Movielens => load_movielens(input)?,
        Format::Csv => load_amazon_csv(input)?,
    };
    let (dataset, stats) = build_dataset(&raw, min_rating)?;
    ensure_out(out)?;
    let split_path = out.join("dataset.split");
    save_split(&dataset, &split_path)?;
    let s = dataset.summary();
    println!("users: {}", s.n_users);
    println!("items: {}", s.n_items);
    println!("actions: {}", s.n_interactions);
    println!("avg_length: {:.2}", s.avg_length_full);
    println!("avg_train_length: {:.2}", s.avg_length_train);
    println!(
        "split: train {} / validation {} / test {}",
        s.n_train, s.n_validation, s.n_test
    );
    if stats.n_below_threshold + stats.n_duplicates_removed + stats.n_users_dropped > 0 {
        println!(
            "dropped: {} below rating threshold, {} duplicates, {} users emptied",
            stats.n_below_threshold, stats.n_duplicates_removed, stats.n_users_dropped
        );
    }
    println!("wrote {}", split_path.display());
    Ok(())
}

fn cmd_train(run: &RunConfig) -> Result<(), Error> {
    let cfg = run.model_config()?;
    let schedule = run.schedule();
    let dataset = load_split(&run.split)?;
    ensure_out(&run.out)?;

    let log_path = run.out.join("train_log.jsonl");
    let mut log_file = fs::File::create(&log_path).map_err(|e| Error::io(&log_path, e))?;
    let output = train_with_progress(&dataset, &cfg, &schedule, |record| {
        let line = serde_json::to_string(record).expect("epoch record serializes");
        let _ = writeln!(log_file, "{line}");
        eprintln!(
            "epoch {:>3}  loss {:.6}  val_ndcg10 {:.4}  val_hr10 {:.4}  ({:.1}s)",
            record.epoch,
            record.train_loss,
            record.val_ndcg10,
            record.val_hr10,
            record.wall_seconds
        );
    })?;
    drop(log_file);

    let ckpt_path = run.out.join("checkpoint.bin");
    save_checkpoint(&ckpt_path, &output.table, &cfg)?;
    if output.diverged {
        return Err(Error::Diverged {
            epoch: output.log.len() + 1,
            detail: format!(
                "non-finite loss; last good checkpoint (epoch {}) kept at {}",
                output.best_epoch,
                ckpt_path.display()
            ),
        });
    }
    let best = output.log.iter().find(|r| r.epoch == output.best_epoch);
    match best {
        Some(r) => println!(
            "best epoch {} (val NDCG@10 {:.4}); wrote {}",
            r.epoch,
            r.val_ndcg10,
            ckpt_path.display()
        ),
        None => println!(
            "no epochs run; wrote initialization to {}",
            ckpt_path.display()
        ),
    }
    Ok(())
}

fn load_compatible(
    run: &RunConfig,
) -> Result<
    (
        triplh_core::model::EmbeddingTable,
        ModelConfig,
        InteractionDataset,
    ),
    Error,
> {
    let dataset = load_split(&run.split)?;
    let (table, cfg) = load_checkpoint(run.checkpoint_path())?;
    if table.n_users() != dataset.n_users() || table.n_items() != dataset.n_items() {
        return Err(Error::Config(format!(
            "count mismatch: checkpoint has {} users x {} items, split has {} x {}",
            table.n_users(),
            table.n_items(),
            dataset.n_users(),
            dataset.n_items()
        )));
    }
    Ok((table, cfg, dataset))
}

fn cmd_evaluate(run: &RunConfig, with_coverage: bool, with_histogram: bool) -> Result<(), Error> {
    let (table, cfg, dataset) = load_compatible(run)?;
    let model = build_model(cfg.clone())?;
    ensure_out(&run.out)?;

    let results = rank_test(&table, model.as_ref(), &dataset);
    let mut report =
        EvalReport::from_results(cfg.model_kind.as_str().to_string(), cfg.dim, &results)?;

    if with_coverage {
        report.coverage10 = Some(coverage(&results, 10, dataset.n_items()));
        report.popularity_shares = Some(popularity_shares(&results, &dataset)?);
        let bins = popularity_bins(dataset.item_popularity());
        let mut csv = String::from("item,popularity,bin\n");
        for (item, bin) in bins.iter().enumerate() {
            let _ = writeln!(
                csv,
                "{item},{},{}",
                dataset.item_popularity()[item],
                serde_json::to_value(bin)
                    .expect("bin serializes")
                    .as_str()
                    .expect("bin is a string")
            );
        }
        write_out(&run.out.join("popularity.csv"), csv.as_bytes())?;
    }
    if with_histogram {
        let hist = score_histogram(
            &table,
            model.as_ref(),
            &dataset,
            run.histogram_bins,
            run.seed,
        )?;
        report.separation = Some(hist.separation);
        write_out(&run.out.join("histogram.csv"), hist.to_csv().as_bytes())?;
    }

    let mut json = serde_json::to_string_pretty(&report)?;
    json.push('\n');
    write_out(&run.out.join("eval_report.json"), json.as_bytes())?;
    println!(
        "HR@5 {:.4}  HR@10 {:.4}  NDCG@5 {:.4}  NDCG@10 {:.4}  ({} users)",
        report.hr5, report.hr10, report.ndcg5, report.ndcg10, report.n_users_evaluated
    );
    if let Some(c) = report.coverage10 {
        println!("Coverage@10 {c:.4}");
    }
    if let Some(s) = report.separation {
        println!("score separation {s:.4}");
    }
    Ok(())
}

fn cmd_sweep(run: &RunConfig, dims: &[usize]) -> Result<(), Error> {
    let mut sorted = dims.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != dims.len() {
        return Err(Error::Config("duplicate dims in --dims".into()));
    }
    let kinds: Vec<ModelKind> = run
        .sweep_models
        .iter()
        .map(|name| ModelKind::from_str(name))
        .collect::<Result<_, _>>()?;
    let dataset = load_split(&run.split)?;
    ensure_out(&run.out)?;

    let csv_path = run.out.join("sweep.csv");
    let mut csv = fs::File::create(&csv_path).map_err(|e| Error::io(&csv_path, e))?;
    writeln!(csv, "dim,model,hr10,ndcg10").map_err(|e| Error::io(&csv_path, e))?;
    // Rows are flushed per run so an aborted sweep keeps its partial
    // results.
    for &dim in dims {
        for &kind in &kinds {
            let mut cfg = run.model_config()?;
            cfg.model_kind = kind;
            cfg.dim = dim;
            cfg.validate()?;
            let schedule = run.schedule();
            eprintln!("sweep: training {} at d={dim}", kind.as_str());
            let output = triplh_core::trainer::train(&dataset, &cfg, &schedule)?;
            if output.diverged {
                return Err(Error::Diverged {
                    epoch: output.log.len() + 1,
                    detail: format!("{} at d={dim} diverged", kind.as_str()),
                });
            }
            let model = build_model(cfg)?;
            let results = rank_test(&output.table, model.as_ref(), &dataset);
            let report = EvalReport::from_results(kind.as_str().to_string(), dim, &results)?;
            writeln!(
                csv,
                "{dim},{},{},{}",
                kind.as_str(),
                report.hr10,
                report.ndcg10
            )
            .map_err(|e| Error::io(&csv_path, e))?;
            csv.flush().map_err(|e| Error::io(&csv_path, e))?;
        }
    }
    println!("wrote {}", csv_path.display());
    Ok(())
}

fn cmd_bench(dim: usize, pairs: usize, reps: usize, seed: u64, out: &Path) -> Result<(), Error> {
    if dim == 0 {
        return Err(Error::Config("--dim must be at least 1".into()));
    }
    let stats = latency_bench(dim, pairs, reps, seed)?;
    ensure_out(out)?;
    let mut json = serde_json::to_string_pretty(&stats)?;
    json.push('\n');
    let path = out.join("latency.json");
    write_out(&path, json.as_bytes())?;
    println!(
        "lorentz {:.2} ns/pair  poincare {:.2} ns/pair  ratio {:.2}",
        stats.lorentz_mean_ns, stats.poincare_mean_ns, stats.ratio
    );
    println!("wrote {}", path.display());
    Ok(())
}
