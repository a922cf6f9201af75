use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use passage_rank::corpus::{self, PassageStore};
use passage_rank::eval::{self, read_qrels, read_run, write_challenge, write_run};
use passage_rank::pipeline::{domain_map, rerank_run, search_queries, RerankPlan};
use passage_rank::training::{write_pairs_jsonl, write_pairs_tsv};
use passage_rank::{load_index, mine_pairs, save_index, Analyzer, Budget, IndexBuilder, PipelineConfig, Query};
use rayon::prelude::*;
use tracing::info;

use crate::{Cli, Command, ConvertArgs, EvalArgs, Failure, IndexArgs, MineArgs, RerankArgs, SearchArgs};

type Outcome = Result<(), Failure>;

/// Passages analyzed per parallel chunk while indexing.
const INDEX_CHUNK: usize = 8192;

pub fn run(cli: Cli) -> Outcome {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Failure::Usage("--threads must be >= 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Usage(format!("thread pool: {e}")))?;
    }
    let mut cfg = match &cli.config {
        Some(p) => {
            require_exists(p, "config")?;
            PipelineConfig::load(p)?
        }
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.mining.seed = seed;
    }
    match cli.command {
        Command::Index(a) => index(&cfg, a),
        Command::Search(a) => search(&cfg, a),
        Command::Rerank(a) => rerank(&cfg, a),
        Command::Eval(a) => evaluate(&cfg, a),
        Command::MinePairs(a) => mine(&cfg, a),
        Command::Convert(a) => convert(&cfg, a),
    }
}

/// Flag value, else config value, else a usage error naming both.
fn pick(flag: Option<PathBuf>, config: &Option<PathBuf>, what: &str) -> Result<PathBuf, Failure> {
    flag.or_else(|| config.clone()).ok_or_else(|| {
        Failure::Usage(format!(
            "no {what} path: pass --{what} or set paths.{what} in the config"
        ))
    })
}

fn require_exists(path: &Path, what: &str) -> Outcome {
    if path.exists() {
        Ok(())
    } else {
        Err(Failure::Data(passage_rank::Error::Invalid(format!(
            "{what} file {} does not exist",
            path.display()
        ))))
    }
}

fn input(flag: Option<PathBuf>, config: &Option<PathBuf>, what: &str) -> Result<PathBuf, Failure> {
    let p = pick(flag, config, what)?;
    require_exists(&p, what)?;
    Ok(p)
}

fn output(flag: Option<PathBuf>, cfg: &PipelineConfig, default_name: &str) -> Result<PathBuf, Failure> {
    flag.or_else(|| cfg.paths.output.as_ref().map(|d| d.join(default_name)))
        .ok_or_else(|| Failure::Usage("no output path: pass --output or set paths.output in the config".into()))
}

fn analyzer(cfg: &PipelineConfig) -> Result<Analyzer, Failure> {
    Ok(Analyzer::from_config(&cfg.analyzer)?)
}

fn load_queries(path: &Path) -> Result<Vec<Query>, Failure> {
    let t = Instant::now();
    let queries = corpus::read_queries(path)?;
    info!(
        queries = queries.len(),
        elapsed_ms = t.elapsed().as_millis() as u64,
        "loaded queries"
    );
    Ok(queries)
}

fn load_store(path: &Path) -> Result<PassageStore, Failure> {
    let t = Instant::now();
    let store = PassageStore::load(path)?;
    info!(
        passages = store.len(),
        elapsed_ms = t.elapsed().as_millis() as u64,
        "loaded corpus"
    );
    Ok(store)
}

fn index(cfg: &PipelineConfig, a: IndexArgs) -> Outcome {
    let corpus_path = input(a.corpus, &cfg.paths.corpus, "corpus")?;
    let out = pick(a.output, &cfg.paths.index, "index")?;
    let analyzer = analyzer(cfg)?;
    let t = Instant::now();

    // Analysis is parallel per chunk; ids are added in file order so the
    // index is the same for any thread count.
    let mut builder = IndexBuilder::new(cfg.bm25)?;
    let mut reader = corpus::passages(&corpus_path)?;
    loop {
        let chunk = reader
            .by_ref()
            .take(INDEX_CHUNK)
            .collect::<passage_rank::Result<Vec<_>>>()?;
        if chunk.is_empty() {
            break;
        }
        let analyzed: Vec<_> = chunk
            .into_par_iter()
            .map(|p| (p.id, analyzer.analyze(&p.text)))
            .collect();
        for (id, tokens) in analyzed {
            builder.add(id, &tokens)?;
        }
        info!(passages = builder.len(), "indexing");
    }
    let index = builder.finish()?;
    save_index(&index, &out)?;
    info!(elapsed_ms = t.elapsed().as_millis() as u64, "index built");
    println!(
        "indexed {} passages, {} terms, {} postings, avgdl {:.4} -> {}",
        index.num_passages(),
        index.num_terms(),
        index.num_postings(),
        index.avgdl(),
        out.display()
    );
    Ok(())
}

fn search(cfg: &PipelineConfig, a: SearchArgs) -> Outcome {
    let queries_path = input(a.queries, &cfg.paths.queries, "queries")?;
    let index_path = input(a.index, &cfg.paths.index, "index")?;
    let out = output(a.output, cfg, "bm25.run")?;
    let k = a.k.unwrap_or(cfg.search.k);
    if k == 0 {
        return Err(Failure::Usage("-k must be >= 1".into()));
    }
    let analyzer = analyzer(cfg)?;
    let t = Instant::now();
    let index = load_index(&index_path)?;
    info!(
        passages = index.num_passages(),
        elapsed_ms = t.elapsed().as_millis() as u64,
        "loaded index"
    );
    let queries = load_queries(&queries_path)?;

    let t = Instant::now();
    let run = search_queries(&index, &analyzer, &queries, k);
    let empty = queries.len() - run.queries.len();
    info!(
        queries = queries.len(),
        without_hits = empty,
        k,
        elapsed_ms = t.elapsed().as_millis() as u64,
        "retrieval done"
    );
    write_run(&run, &out)?;
    println!("wrote {} candidate lists -> {}", run.queries.len(), out.display());
    Ok(())
}

fn rerank(cfg: &PipelineConfig, a: RerankArgs) -> Outcome {
    require_exists(&a.run, "run")?;
    let corpus_path = input(a.corpus, &cfg.paths.corpus, "corpus")?;
    let queries_path = input(a.queries, &cfg.paths.queries, "queries")?;
    let out = output(a.output, cfg, "rerank.run")?;

    let analyzer = Arc::new(analyzer(cfg)?);
    let scorers = cfg.build_scorers(&analyzer)?;
    let mut plan = RerankPlan::from_config(cfg, &scorers)?;
    if let Some(b) = a.batch_size {
        if b == 0 {
            return Err(Failure::Usage("--batch-size must be >= 1".into()));
        }
        plan.default = plan.default.with_batch_size(b);
        for c in plan.per_domain.values_mut() {
            *c = c.clone().with_batch_size(b);
        }
    }

    let run = read_run(&a.run)?;
    let queries = load_queries(&queries_path)?;
    let store = load_store(&corpus_path)?;

    let jobs: Vec<(PathBuf, RerankPlan)> = match a.budget.as_slice() {
        [] => vec![(out, plan)],
        [b] => vec![(out, plan.with_budget(*b))],
        many => many
            .iter()
            .map(|b| (suffixed(&out, *b), plan.with_budget(*b)))
            .collect(),
    };
    for (path, plan) in jobs {
        let t = Instant::now();
        let reranked = rerank_run(&run, &queries, &plan, &store)?;
        info!(
            queries = reranked.queries.len(),
            scorers = %plan.default.ensemble.names().collect::<Vec<_>>().join(","),
            elapsed_ms = t.elapsed().as_millis() as u64,
            "rerank done"
        );
        write_run(&reranked, &path)?;
        println!("wrote {} reranked lists -> {}", reranked.queries.len(), path.display());
    }
    Ok(())
}

/// `runs/rerank.run` with budget 50 becomes `runs/rerank.b50.run`.
fn suffixed(path: &Path, budget: Budget) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let name = match path.extension() {
        Some(ext) => format!("{stem}.b{budget}.{}", ext.to_string_lossy()),
        None => format!("{stem}.b{budget}"),
    };
    path.with_file_name(name)
}

fn evaluate(cfg: &PipelineConfig, a: EvalArgs) -> Outcome {
    require_exists(&a.run, "run")?;
    let qrels_path = input(a.qrels, &cfg.paths.qrels, "qrels")?;
    let k = a.k.unwrap_or(cfg.eval.k);
    if k == 0 {
        return Err(Failure::Usage("-k must be >= 1".into()));
    }
    let run = read_run(&a.run)?;
    let qrels = read_qrels(&qrels_path)?;
    let domains = match a.queries.or_else(|| cfg.paths.queries.clone()) {
        Some(p) if p.exists() => domain_map(&load_queries(&p)?),
        _ => HashMap::new(),
    };
    let report = eval::evaluate(&run, &qrels, &domains, k)?;
    if let Some(p) = &a.json {
        write_text(p, &report.to_json())?;
    }
    if a.print_json {
        println!("{}", report.to_json());
    } else {
        print!("{}", report.to_table());
    }
    Ok(())
}

fn write_text(path: &Path, text: &str) -> Outcome {
    let io = |e| {
        Failure::Data(passage_rank::Error::Io {
            path: path.to_owned(),
            source: e,
        })
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(io)?;
    }
    std::fs::write(path, format!("{text}\n")).map_err(io)
}

fn mine(cfg: &PipelineConfig, a: MineArgs) -> Outcome {
    let qrels_path = input(a.qrels, &cfg.paths.qrels, "qrels")?;
    let queries_path = input(a.queries, &cfg.paths.queries, "queries")?;
    let index_path = input(a.index, &cfg.paths.index, "index")?;
    let out = output(a.output, cfg, "pairs.tsv")?;
    let corpus_path = match &a.hydrated {
        Some(_) => Some(input(a.corpus, &cfg.paths.corpus, "corpus")?),
        None => None,
    };
    let mut opts = cfg.mining.options();
    if let Some(n) = a.negatives {
        opts.negatives_per_positive = n;
    }
    if let Some(n) = a.pool {
        opts.pool = n;
    }

    let analyzer = analyzer(cfg)?;
    let index = load_index(&index_path)?;
    let qrels = read_qrels(&qrels_path)?;
    let texts: HashMap<String, String> = load_queries(&queries_path)?
        .into_iter()
        .map(|q| (q.id, q.text))
        .collect();

    let t = Instant::now();
    let mined = mine_pairs(&qrels, &texts, &index, &analyzer, &opts)?;
    let samples: Vec<_> = mined.iter().flat_map(|q| &q.samples).collect();
    let positives = samples.iter().filter(|s| s.label == 1).count();
    info!(
        queries = mined.len(),
        positives,
        negatives = samples.len() - positives,
        seed = opts.seed,
        elapsed_ms = t.elapsed().as_millis() as u64,
        "mining done"
    );
    write_pairs_tsv(samples.iter().copied(), &out)?;
    println!("wrote {} pairs -> {}", samples.len(), out.display());
    if let (Some(path), Some(corpus_path)) = (a.hydrated, corpus_path) {
        let store = load_store(&corpus_path)?;
        write_pairs_jsonl(samples.iter().copied(), &texts, &store, &path)?;
        println!("wrote hydrated pairs -> {}", path.display());
    }
    Ok(())
}

fn convert(cfg: &PipelineConfig, a: ConvertArgs) -> Outcome {
    require_exists(&a.run, "run")?;
    let run = read_run(&a.run)?;
    let order: Vec<String> = match a.queries.or_else(|| cfg.paths.queries.clone()) {
        Some(p) => {
            require_exists(&p, "queries")?;
            load_queries(&p)?.into_iter().map(|q| q.id).collect()
        }
        None => run.queries.iter().map(|l| l.query_id().to_owned()).collect(),
    };
    write_challenge(&run, &order, &a.output)?;
    println!("wrote {} lines -> {}", order.len(), a.output.display());
    Ok(())
}
