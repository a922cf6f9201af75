//! Pipeline configuration (TOML).
//!
//! ```toml
//! [analyzer]
//! lowercase = true
//! stopword_path = "stopwords-pl.txt"
//! stemmer = { kind = "dictionary-table", path = "stems.tsv" }
//!
//! [bm25]
//! k1 = 1.2
//! b = 0.75
//! epsilon = 0.25
//!
//! [paths]
//! corpus = "passages.jsonl"
//! queries = "questions.jsonl"
//! qrels = "qrels.tsv"
//! index = "work/index.bin"
//! output = "work"
//!
//! [rerank]
//! budget = 3000
//! batch_size = 32
//! ensemble = [{ name = "mt5-13b", kind = "remote", endpoint = "http://127.0.0.1:8001" }]
//!
//! [domains.legal-questions]
//! budget = 1500
//!
//! [domains.allegro-faq]
//! budget = "all"
//! ```
//!
//! Relative paths are resolved against the directory holding the config
//! file.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::bm25::Bm25Params;
use crate::error::{Error, Result};
use crate::eval::DEFAULT_K;
use crate::rerank::{Budget, Ensemble, RerankConfig, DEFAULT_BATCH_SIZE};
use crate::scorer::{ConstantScorer, HttpScorer, LexicalOverlapScorer, PairScorer, RemoteConfig};
use crate::text::{Analyzer, AnalyzerConfig, StemmerConfig};
use crate::training::MiningOptions;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ScorerKind {
    Remote {
        endpoint: String,
        #[serde(default)]
        timeout_secs: Option<u64>,
        #[serde(default)]
        retries: Option<u32>,
        #[serde(default)]
        max_in_flight: Option<usize>,
        #[serde(default)]
        max_batch: Option<usize>,
    },
    LexicalOverlap,
    Constant {
        value: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScorerSpec {
    pub name: String,
    #[serde(flatten)]
    pub kind: ScorerKind,
}

impl ScorerSpec {
    pub fn build(&self, analyzer: &Arc<Analyzer>) -> Result<Arc<dyn PairScorer>> {
        Ok(match &self.kind {
            ScorerKind::Remote {
                endpoint,
                timeout_secs,
                retries,
                max_in_flight,
                max_batch,
            } => {
                let mut rc = RemoteConfig::new(endpoint.clone());
                if let Some(t) = timeout_secs {
                    rc.timeout = Duration::from_secs(*t);
                }
                if let Some(r) = retries {
                    rc.retries = *r;
                }
                if let Some(m) = max_in_flight {
                    rc.max_in_flight = *m;
                }
                if let Some(m) = max_batch {
                    rc.max_batch = *m;
                }
                Arc::new(HttpScorer::new(self.name.clone(), rc)?)
            }
            ScorerKind::LexicalOverlap => Arc::new(LexicalOverlapScorer::new(self.name.clone(), analyzer.clone())),
            ScorerKind::Constant { value } => Arc::new(ConstantScorer::new(self.name.clone(), *value)?),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RerankSettings {
    #[serde(default = "default_budget")]
    pub budget: Budget,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_parallel")]
    pub parallel_batches: usize,
    #[serde(default)]
    pub ensemble: Vec<ScorerSpec>,
}

fn default_budget() -> Budget {
    Budget::Top(3000)
}
fn default_batch_size() -> usize {
    DEFAULT_BATCH_SIZE
}
fn default_parallel() -> usize {
    1
}

impl Default for RerankSettings {
    fn default() -> Self {
        RerankSettings {
            budget: default_budget(),
            batch_size: DEFAULT_BATCH_SIZE,
            parallel_batches: 1,
            ensemble: Vec::new(),
        }
    }
}

/// Per-domain overrides of `[rerank]`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSettings {
    pub budget: Option<Budget>,
    pub batch_size: Option<usize>,
    pub parallel_batches: Option<usize>,
    pub ensemble: Option<Vec<ScorerSpec>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    pub corpus: Option<PathBuf>,
    pub queries: Option<PathBuf>,
    pub qrels: Option<PathBuf>,
    pub index: Option<PathBuf>,
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchSettings {
    /// First-stage depth.
    #[serde(default = "default_search_k")]
    pub k: usize,
}

fn default_search_k() -> usize {
    3000
}

impl Default for SearchSettings {
    fn default() -> Self {
        SearchSettings { k: default_search_k() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSettings {
    #[serde(default = "default_eval_k")]
    pub k: usize,
}

fn default_eval_k() -> usize {
    DEFAULT_K
}

impl Default for EvalSettings {
    fn default() -> Self {
        EvalSettings { k: DEFAULT_K }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MiningSettings {
    #[serde(default = "default_negatives")]
    pub negatives: usize,
    #[serde(default = "default_pool")]
    pub pool: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_negatives() -> usize {
    100
}
fn default_pool() -> usize {
    2000
}

impl Default for MiningSettings {
    fn default() -> Self {
        MiningSettings {
            negatives: default_negatives(),
            pool: default_pool(),
            seed: 0,
        }
    }
}

impl MiningSettings {
    pub fn options(&self) -> MiningOptions {
        MiningOptions {
            negatives_per_positive: self.negatives,
            pool: self.pool,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default)]
    pub analyzer: AnalyzerConfig,
    #[serde(default)]
    pub bm25: Bm25Params,
    #[serde(default)]
    pub paths: Paths,
    #[serde(default)]
    pub search: SearchSettings,
    #[serde(default)]
    pub rerank: RerankSettings,
    #[serde(default)]
    pub domains: BTreeMap<String, DomainSettings>,
    #[serde(default)]
    pub eval: EvalSettings,
    #[serde(default)]
    pub mining: MiningSettings,
}

impl PipelineConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::parse(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })?;
        if let Some(dir) = path.parent() {
            cfg.resolve_relative(dir);
        }
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let cfg: PipelineConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.bm25.validate()?;
        if self.search.k == 0 || self.eval.k == 0 {
            return Err(Error::Config("search.k and eval.k must be >= 1".into()));
        }
        self.mining.options().validate()?;
        for (name, s) in std::iter::once(("[rerank]", self.rerank.clone()))
            .chain(self.domains.keys().map(|d| (d.as_str(), self.rerank_settings(Some(d)))))
        {
            if s.batch_size == 0 || s.parallel_batches == 0 {
                return Err(Error::Config(format!(
                    "{name}: batch_size and parallel_batches must be >= 1"
                )));
            }
        }
        Ok(())
    }

    fn resolve_relative(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(p) = self.analyzer.stopword_path.as_mut() {
            fix(p);
        }
        if let StemmerConfig::DictionaryTable { path } = &mut self.analyzer.stemmer {
            fix(path);
        }
        for p in [
            &mut self.paths.corpus,
            &mut self.paths.queries,
            &mut self.paths.qrels,
            &mut self.paths.index,
            &mut self.paths.output,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
    }

    /// `[rerank]` with the overrides of `domain` applied.
    pub fn rerank_settings(&self, domain: Option<&str>) -> RerankSettings {
        let mut s = self.rerank.clone();
        if let Some(d) = domain.and_then(|d| self.domains.get(d)) {
            if let Some(b) = d.budget {
                s.budget = b;
            }
            if let Some(b) = d.batch_size {
                s.batch_size = b;
            }
            if let Some(p) = d.parallel_batches {
                s.parallel_batches = p;
            }
            if let Some(e) = &d.ensemble {
                s.ensemble = e.clone();
            }
        }
        s
    }

    /// Instantiates every scorer named anywhere in the config. A name must
    /// always refer to the same definition, so each service gets one
    /// client (and one in-flight limit) shared across domains.
    pub fn build_scorers(&self, analyzer: &Arc<Analyzer>) -> Result<HashMap<String, Arc<dyn PairScorer>>> {
        let mut specs: HashMap<&str, &ScorerSpec> = HashMap::new();
        let all = self
            .rerank
            .ensemble
            .iter()
            .chain(self.domains.values().filter_map(|d| d.ensemble.as_ref()).flatten());
        for spec in all {
            match specs.get(spec.name.as_str()) {
                Some(prev) if *prev != spec => {
                    return Err(Error::Config(format!(
                        "scorer `{}` is defined twice with different settings",
                        spec.name
                    )));
                }
                _ => {
                    specs.insert(&spec.name, spec);
                }
            }
        }
        specs
            .into_iter()
            .map(|(name, spec)| Ok((name.to_owned(), spec.build(analyzer)?)))
            .collect()
    }

    pub fn rerank_config(
        &self,
        domain: Option<&str>,
        scorers: &HashMap<String, Arc<dyn PairScorer>>,
    ) -> Result<RerankConfig> {
        let s = self.rerank_settings(domain);
        let members = s
            .ensemble
            .iter()
            .map(|spec| {
                scorers
                    .get(&spec.name)
                    .cloned()
                    .ok_or_else(|| Error::Config(format!("scorer `{}` was not built", spec.name)))
            })
            .collect::<Result<Vec<_>>>()?;
        let ensemble = Ensemble::new(members).map_err(|e| match (e, domain) {
            (Error::Config(m), Some(d)) => Error::Config(format!("domain `{d}`: {m}")),
            (e, _) => e,
        })?;
        Ok(RerankConfig {
            budget: s.budget,
            batch_size: s.batch_size,
            ensemble,
            parallel_batches: s.parallel_batches,
        })
    }
}
