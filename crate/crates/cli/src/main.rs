use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use passage_rank::{Budget, Error};

mod commands;

#[derive(Parser, Debug)]
#[command(
    name = "passage-rank",
    version,
    about = "BM25 retrieval, ensemble reranking and NDCG evaluation"
)]
struct Cli {
    /// Pipeline config (TOML). Relative paths inside it resolve against its directory.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,

    /// Worker threads for query-parallel stages (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Overrides the sampling seed from the config.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Log level filter, e.g. `info` or `passage_rank=debug`. `RUST_LOG` wins if set.
    #[arg(long, global = true, default_value = "info")]
    log: String,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build the BM25 index from the corpus and save it.
    Index(IndexArgs),
    /// Retrieve the top-k passages for every query.
    Search(SearchArgs),
    /// Rescore the head of each candidate list with the scorer ensemble.
    Rerank(RerankArgs),
    /// Score a run against qrels with NDCG@k.
    Eval(EvalArgs),
    /// Mine positive and hard-negative pairs for fine-tuning.
    MinePairs(MineArgs),
    /// Convert a run file to the one-line-per-query `pid:score` format.
    Convert(ConvertArgs),
}

#[derive(Args, Debug)]
struct IndexArgs {
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Where to write the index.
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SearchArgs {
    #[arg(long)]
    queries: Option<PathBuf>,
    #[arg(long)]
    index: Option<PathBuf>,
    #[arg(long, short)]
    k: Option<usize>,
    /// Run file to write (default: `<output>/bm25.run`).
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct RerankArgs {
    /// First-stage run file.
    #[arg(long)]
    run: PathBuf,
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    queries: Option<PathBuf>,
    /// One budget for all domains, or a comma list for a sweep
    /// (one output per budget, suffixed `.b<N>`).
    #[arg(long, value_delimiter = ',')]
    budget: Vec<Budget>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Run file to write (default: `<output>/rerank.run`).
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    run: PathBuf,
    #[arg(long)]
    qrels: Option<PathBuf>,
    /// Supplies query domains for the per-domain breakdown.
    #[arg(long)]
    queries: Option<PathBuf>,
    #[arg(long, short)]
    k: Option<usize>,
    /// Also write the report as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
    /// Print JSON instead of the table.
    #[arg(long)]
    print_json: bool,
}

#[derive(Args, Debug)]
struct MineArgs {
    #[arg(long)]
    qrels: Option<PathBuf>,
    #[arg(long)]
    queries: Option<PathBuf>,
    #[arg(long)]
    index: Option<PathBuf>,
    #[arg(long)]
    negatives: Option<usize>,
    #[arg(long)]
    pool: Option<usize>,
    /// Pairs TSV (default: `<output>/pairs.tsv`).
    #[arg(long, short)]
    output: Option<PathBuf>,
    /// Also write JSON lines with query and passage texts.
    #[arg(long)]
    hydrated: Option<PathBuf>,
    /// Corpus for `--hydrated`.
    #[arg(long)]
    corpus: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ConvertArgs {
    #[arg(long)]
    run: PathBuf,
    /// Query file fixing the line order of the output.
    #[arg(long)]
    queries: Option<PathBuf>,
    #[arg(long, short)]
    output: PathBuf,
}

/// Failure classes, one per exit code.
#[derive(Debug)]
enum Failure {
    Usage(String),
    Data(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Data(e)
    }
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Data(Error::Scorer(_)) => 3,
            Failure::Data(Error::Config(_)) => 1,
            Failure::Data(_) => 2,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Usage(m) => f.write_str(m),
            Failure::Data(e) => write!(f, "{e}"),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    init_logging(&cli.log);
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.exit_code())
        }
    }
}

fn init_logging(default: &str) {
    let filter = tracing_subscriber::EnvFilter::try_from_default_env()
        .or_else(|_| tracing_subscriber::EnvFilter::try_new(default))
        .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info"));
    tracing_subscriber::fmt()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .with_target(false)
        .init();
}
