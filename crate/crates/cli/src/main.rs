mod run_config;

use std::collections::HashSet;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use kwe::eval::{task1_map, task2_mrr, Task2Options};
use kwe::index::{candidate_keywords, write_neighbors_tsv};
use kwe::stats::{pairwise_permutation_tests, randomized_tukey_hsd};
use kwe::{
    build_graph, build_vocab, component_stats, connected_components, format, parse_dataset, split_corpus, train,
    Dataset, EvalReport, IndexMode, ScoreMatrix, SimilarityIndex, Task,
};

use run_config::{config_path_for, RunConfig};

#[derive(Parser)]
#[command(name = "kwe", version, about = "Train and evaluate keyword embeddings")]
struct Cli {
    /// Worker threads for training and permutation tests.
    #[arg(long, global = true, env = "KWS_THREADS")]
    threads: Option<usize>,
    /// Log progress (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Normalize a JSONL corpus and report its size.
    Ingest {
        input: PathBuf,
        /// Canonical JSONL output.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write the keyword vocabulary as TSV.
        #[arg(long)]
        vocab: Option<PathBuf>,
    },
    /// Report connected components of the keyword co-occurrence graph.
    Graph {
        corpus: PathBuf,
        /// Directory for components.tsv and stats.json.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train a model.
    Train(TrainArgs),
    /// Evaluate a model, or compare saved reports with --stats.
    Eval(EvalArgs),
    /// Nearest neighbours of a keyword.
    Nn(NnArgs),
    /// Significance tests over saved per-query reports.
    Stats(StatsArgs),
}

#[derive(Args)]
struct Common {
    /// Run configuration file (key = value lines).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one configuration key.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Output directory for model.kwe, training_log.tsv and config.txt.
    #[arg(long)]
    out: Option<PathBuf>,
    /// keywords2vec or fastkeywords.
    #[arg(long)]
    variant: Option<String>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    w: Option<usize>,
    #[arg(long)]
    ns: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    /// components or random.
    #[arg(long)]
    negatives: Option<String>,
    /// Single-threaded, bit-reproducible training.
    #[arg(long)]
    strict: bool,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// map20 or mrr100.
    #[arg(long)]
    task: Option<String>,
    /// all or test.
    #[arg(long)]
    mode: Option<String>,
    /// Documents sampled for mrr100.
    #[arg(long)]
    n_docs: Option<usize>,
    /// Report JSON output.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Name of the system in the report.
    #[arg(long)]
    system: Option<String>,
    /// Compare these report files instead of evaluating a model.
    #[arg(long, num_args = 2.., value_name = "REPORT")]
    stats: Vec<PathBuf>,
    #[arg(long)]
    permutations: Option<usize>,
}

#[derive(Args)]
struct NnArgs {
    #[command(flatten)]
    common: Common,
    keyword: String,
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(short, long)]
    k: Option<usize>,
    /// Restrict candidates to test keywords of this corpus (with --mode test).
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    mode: Option<String>,
}

#[derive(Args)]
struct StatsArgs {
    #[arg(required = true, num_args = 2..)]
    reports: Vec<PathBuf>,
    #[arg(long)]
    permutations: Option<usize>,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Write the pairwise report as JSON.
    #[arg(long)]
    out: Option<PathBuf>,
}

enum Failure {
    Usage(String),
    Lib(kwe::Error),
}

impl From<kwe::Error> for Failure {
    fn from(e: kwe::Error) -> Self {
        Failure::Lib(e)
    }
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

type CmdResult = Result<(), Failure>;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Failure + '_ {
    move |e| Failure::Lib(kwe::Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be >= 1");
            return ExitCode::from(1);
        }
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }

    let result = match cli.command {
        Command::Ingest { input, out, vocab } => cmd_ingest(&input, out.as_deref(), vocab.as_deref()),
        Command::Graph { corpus, out } => cmd_graph(&corpus, out.as_deref()),
        Command::Train(args) => cmd_train(args, cli.threads),
        Command::Eval(args) => cmd_eval(args),
        Command::Nn(args) => cmd_nn(args),
        Command::Stats(args) => cmd_stats(&args.reports, args.permutations, args.seed, args.out.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Lib(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 3 } else { 2 })
        }
    }
}

fn base_config(common: &Common, defaults_from: Option<&Path>) -> Result<RunConfig, Failure> {
    let mut cfg = RunConfig::default();
    match (&common.config, defaults_from) {
        (Some(path), _) => cfg.apply_file(path).map_err(usage)?,
        (None, Some(path)) if path.is_file() => cfg.apply_file(path).map_err(usage)?,
        _ => {}
    }
    for kv in &common.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| usage(format!("--set expects KEY=VALUE, got {kv:?}")))?;
        cfg.set(k.trim(), v).map_err(usage)?;
    }
    if let Some(seed) = common.seed {
        cfg.model.seed = seed;
    }
    Ok(cfg)
}

fn set_opt<T: ToString>(cfg: &mut RunConfig, key: &str, value: &Option<T>) -> CmdResult {
    if let Some(v) = value {
        cfg.set(key, &v.to_string()).map_err(usage)?;
    }
    Ok(())
}

fn require<'a>(path: &'a Option<PathBuf>, what: &str) -> Result<&'a Path, Failure> {
    path.as_deref()
        .ok_or_else(|| usage(format!("missing {what} (flag or config key)")))
}

fn cmd_ingest(input: &Path, out: Option<&Path>, vocab_out: Option<&Path>) -> CmdResult {
    let corpus = parse_dataset(input)?;
    if corpus.is_empty() {
        return Err(kwe::Error::Empty(format!("{}: no documents", input.display())).into());
    }
    let vocab = build_vocab(&corpus, 1)?;
    println!("{} documents", corpus.len());
    println!("{} keyword occurrences", corpus.keyword_occurrences());
    println!("{} distinct keywords", vocab.len());
    println!("{} distinct words", vocab.word_count());
    println!("{} single-keyword documents", corpus.single_keyword_documents());
    if corpus.dropped_empty > 0 {
        println!("{} empty keywords dropped", corpus.dropped_empty);
    }
    if let Some(out) = out {
        let mut w = BufWriter::new(File::create(out).map_err(io_err(out))?);
        corpus.write_jsonl(&mut w).map_err(io_err(out))?;
        w.flush().map_err(io_err(out))?;
        let cfg = RunConfig {
            corpus: Some(input.to_path_buf()),
            out: Some(out.to_path_buf()),
            ..Default::default()
        };
        let cfg_path = config_path_for(out);
        cfg.write(&cfg_path).map_err(io_err(&cfg_path))?;
    }
    if let Some(path) = vocab_out {
        let mut w = BufWriter::new(File::create(path).map_err(io_err(path))?);
        vocab.write_tsv(&mut w).map_err(io_err(path))?;
        w.flush().map_err(io_err(path))?;
    }
    Ok(())
}

fn cmd_graph(corpus_path: &Path, out: Option<&Path>) -> CmdResult {
    let corpus = parse_dataset(corpus_path)?;
    let vocab = build_vocab(&corpus, 1)?;
    let graph = build_graph(&corpus, &vocab)?;
    let labeling = connected_components(&graph);
    let stats = component_stats(&labeling)?;
    println!("{} keywords, {} edges", stats.keywords, graph.edge_count());
    println!("{} components", stats.components);
    println!(
        "largest component: {} keywords ({:.1}%)",
        stats.largest,
        100.0 * stats.largest_fraction
    );
    println!("size\tcount");
    for (size, count) in &stats.size_histogram {
        println!("{size}\t{count}");
    }
    if let Some(dir) = out {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let path = dir.join("components.tsv");
        let mut w = BufWriter::new(File::create(&path).map_err(io_err(&path))?);
        labeling.write_tsv(&mut w).map_err(io_err(&path))?;
        w.flush().map_err(io_err(&path))?;
        let path = dir.join("stats.json");
        let json = serde_json::to_string_pretty(&stats).expect("stats serialize");
        fs::write(&path, json).map_err(io_err(&path))?;
        let cfg = RunConfig {
            corpus: Some(corpus_path.to_path_buf()),
            out: Some(dir.to_path_buf()),
            ..Default::default()
        };
        let path = config_path_for(dir);
        cfg.write(&path).map_err(io_err(&path))?;
    }
    Ok(())
}

fn cmd_train(args: TrainArgs, threads: Option<usize>) -> CmdResult {
    let mut cfg = base_config(&args.common, None)?;
    set_opt(&mut cfg, "variant", &args.variant)?;
    set_opt(&mut cfg, "dim", &args.dim)?;
    set_opt(&mut cfg, "w", &args.w)?;
    set_opt(&mut cfg, "ns", &args.ns)?;
    set_opt(&mut cfg, "epochs", &args.epochs)?;
    set_opt(&mut cfg, "negatives", &args.negatives)?;
    set_opt(&mut cfg, "threads", &threads)?;
    if args.strict {
        cfg.model.strict = true;
    }
    if let Some(p) = args.corpus {
        cfg.corpus = Some(p);
    }
    if let Some(p) = args.out {
        cfg.out = Some(p);
    }
    cfg.model.validate().map_err(|e| usage(e.to_string()))?;
    let corpus_path = require(&cfg.corpus, "corpus")?.to_path_buf();
    let out = require(&cfg.out, "output directory")?.to_path_buf();

    let corpus = parse_dataset(&corpus_path)?;
    let data = Dataset::for_config(corpus, &cfg.model)?;
    let (model, log) = train(&data, &cfg.model)?;

    fs::create_dir_all(&out).map_err(io_err(&out))?;
    let model_path = out.join("model.kwe");
    format::save(&model, &model_path)?;
    let log_path = out.join("training_log.tsv");
    let mut w = BufWriter::new(File::create(&log_path).map_err(io_err(&log_path))?);
    log.write_tsv(&mut w).map_err(io_err(&log_path))?;
    w.flush().map_err(io_err(&log_path))?;
    cfg.model_path = Some(model_path.clone());
    let cfg_path = config_path_for(&out);
    cfg.write(&cfg_path).map_err(io_err(&cfg_path))?;

    println!(
        "{} model, {} keywords, {} training pairs, {} epochs{}",
        cfg.model.variant,
        model.vocab().len(),
        log.train_pairs,
        log.epochs.len(),
        if log.stopped_early { " (stopped early)" } else { "" }
    );
    if let Some(best) = log.best_epoch {
        println!("best epoch {best}");
    }
    if log.fallback_examples > 0 {
        println!("{} examples used fallback negatives", log.fallback_examples);
    }
    println!("wrote {}", model_path.display());
    Ok(())
}

/// The training config stored next to a model file, if any.
fn sibling_config(model: Option<&Path>) -> Option<PathBuf> {
    Some(model?.parent()?.join("config.txt"))
}

fn cmd_eval(args: EvalArgs) -> CmdResult {
    if !args.stats.is_empty() {
        return cmd_stats(&args.stats, args.permutations, args.common.seed.unwrap_or(42), args.out.as_deref());
    }
    let mut cfg = base_config(&args.common, sibling_config(args.model.as_deref()).as_deref())?;
    set_opt(&mut cfg, "task", &args.task)?;
    set_opt(&mut cfg, "mode", &args.mode)?;
    set_opt(&mut cfg, "n_docs", &args.n_docs)?;
    set_opt(&mut cfg, "system", &args.system)?;
    if let Some(p) = args.model {
        cfg.model_path = Some(p);
    }
    if let Some(p) = args.corpus {
        cfg.corpus = Some(p);
    }
    cfg.out = args.out;

    let model_path = require(&cfg.model_path, "model")?;
    let corpus_path = require(&cfg.corpus, "corpus")?;
    let model = format::load(model_path)?;
    let corpus = parse_dataset(corpus_path)?;
    let split = split_corpus(&corpus, cfg.model.test_fraction, cfg.model.seed)?;
    let mut report = match cfg.task {
        Task::Map20 => task1_map(&model, &corpus, &split, cfg.mode)?,
        Task::Mrr100 => {
            let opts = Task2Options {
                n_docs: cfg.n_docs,
                ..Task2Options::new(cfg.model.seed)
            };
            task2_mrr(&model, &corpus, &split, cfg.mode, &opts)?
        }
    };
    report.system = if cfg.system.is_empty() {
        model.config().variant.to_string()
    } else {
        cfg.system.clone()
    };
    for w in &report.warnings {
        log::warn!("{w}");
    }
    print!("{}", report.to_table());
    if let Some(out) = &cfg.out {
        let json = serde_json::to_string_pretty(&report).expect("report serialize");
        fs::write(out, json).map_err(io_err(out))?;
        let cfg_path = config_path_for(out);
        cfg.write(&cfg_path).map_err(io_err(&cfg_path))?;
    }
    Ok(())
}

fn cmd_nn(args: NnArgs) -> CmdResult {
    let mut cfg = base_config(&args.common, sibling_config(args.model.as_deref()).as_deref())?;
    set_opt(&mut cfg, "k", &args.k)?;
    set_opt(&mut cfg, "mode", &args.mode)?;
    if let Some(p) = args.model {
        cfg.model_path = Some(p);
    }
    if let Some(p) = args.corpus {
        cfg.corpus = Some(p);
    }
    if cfg.k < 1 {
        return Err(usage("k must be >= 1"));
    }
    let model = format::load(require(&cfg.model_path, "model")?)?;
    let ids: Vec<u32> = match cfg.mode {
        IndexMode::AllItems => (0..model.vocab().len() as u32).collect(),
        IndexMode::TestItems => {
            let corpus = parse_dataset(require(&cfg.corpus, "corpus (needed for test mode)")?)?;
            let split = split_corpus(&corpus, cfg.model.test_fraction, cfg.model.seed)?;
            candidate_keywords(&corpus, &split, model.vocab(), IndexMode::TestItems)
        }
    };
    let index = SimilarityIndex::build(&model, &ids, cfg.mode)?;
    let query = kwe::corpus::normalize_keyword(&args.keyword);
    let embedding = model.keyword_embedding(&query)?;
    let exclude: HashSet<u32> = model.vocab().keyword_id(&query).into_iter().collect();
    let hits = index.nearest(&embedding, cfg.k, &exclude)?;
    let stdout = std::io::stdout();
    write_neighbors_tsv(&query, &hits, model.vocab(), stdout.lock()).map_err(io_err(Path::new("<stdout>")))?;
    Ok(())
}

fn read_report(path: &Path) -> Result<EvalReport, Failure> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| {
        Failure::Lib(kwe::Error::Format {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    })
}

fn cmd_stats(paths: &[PathBuf], permutations: Option<usize>, seed: u64, out: Option<&Path>) -> CmdResult {
    if paths.len() < 2 {
        return Err(usage("need at least two reports"));
    }
    let mut reports = paths.iter().map(|p| read_report(p)).collect::<Result<Vec<_>, _>>()?;
    for (r, p) in reports.iter_mut().zip(paths) {
        if r.system.is_empty() {
            r.system = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        }
    }
    let matrix = ScoreMatrix::from_reports(&reports)?;
    let n_perm = permutations.unwrap_or(kwe::stats::DEFAULT_PERMUTATIONS);
    println!("{} systems, {} queries, task {}", matrix.system_count(), matrix.query_count(), reports[0].task);
    let report = if matrix.system_count() == 2 {
        println!("paired permutation test");
        pairwise_permutation_tests(&matrix, n_perm, seed)?
    } else {
        println!("randomized Tukey HSD");
        randomized_tukey_hsd(&matrix, n_perm, seed)?
    };
    print!("{}", report.to_table());
    if let Some(out) = out {
        let json = serde_json::to_string_pretty(&report).expect("report serialize");
        fs::write(out, json).map_err(io_err(out))?;
    }
    Ok(())
}
