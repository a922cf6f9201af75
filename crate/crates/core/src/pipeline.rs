//! Whole-run helpers: search every query, rerank every list.
//!
//! Queries are processed in parallel on the current rayon pool; outputs
//! keep input order, so results do not depend on the thread count.

use std::collections::HashMap;
use std::sync::Arc;

use rayon::prelude::*;

use crate::bm25::Bm25Index;
use crate::config::PipelineConfig;
use crate::corpus::{PassageLookup, Query};
use crate::error::{Error, Result};
use crate::eval::RunFile;
use crate::rerank::{rerank, Budget, RerankConfig};
use crate::scorer::PairScorer;
use crate::text::Analyzer;

/// First-stage run over all queries.
pub fn search_queries(index: &Bm25Index, analyzer: &Analyzer, queries: &[Query], k: usize) -> RunFile {
    let lists = queries
        .par_iter()
        .map(|q| {
            let tokens = analyzer.analyze(&q.text);
            index.retrieve_topk(q.id.clone(), &tokens, k)
        })
        .filter(|l| !l.is_empty())
        .collect();
    RunFile::new(lists)
}

/// Query id → domain label for queries that have one.
pub fn domain_map(queries: &[Query]) -> HashMap<String, String> {
    queries
        .iter()
        .filter_map(|q| q.domain.clone().map(|d| (q.id.clone(), d)))
        .collect()
}

/// Rerank settings resolved per domain.
#[derive(Debug, Clone)]
pub struct RerankPlan {
    pub default: RerankConfig,
    pub per_domain: HashMap<String, RerankConfig>,
}

impl RerankPlan {
    pub fn from_config(cfg: &PipelineConfig, scorers: &HashMap<String, Arc<dyn PairScorer>>) -> Result<Self> {
        let default = cfg.rerank_config(None, scorers)?;
        let per_domain = cfg
            .domains
            .keys()
            .map(|d| Ok((d.clone(), cfg.rerank_config(Some(d), scorers)?)))
            .collect::<Result<_>>()?;
        Ok(RerankPlan { default, per_domain })
    }

    pub fn uniform(config: RerankConfig) -> Self {
        RerankPlan {
            default: config,
            per_domain: HashMap::new(),
        }
    }

    pub fn for_domain(&self, domain: Option<&str>) -> &RerankConfig {
        domain.and_then(|d| self.per_domain.get(d)).unwrap_or(&self.default)
    }

    /// Same plan with one budget applied to every domain.
    pub fn with_budget(&self, budget: Budget) -> Self {
        RerankPlan {
            default: self.default.clone().with_budget(budget),
            per_domain: self
                .per_domain
                .iter()
                .map(|(d, c)| (d.clone(), c.clone().with_budget(budget)))
                .collect(),
        }
    }
}

/// Reranks every list of `run`. Each run query must appear in `queries`.
pub fn rerank_run<L: PassageLookup + Sync + ?Sized>(
    run: &RunFile,
    queries: &[Query],
    plan: &RerankPlan,
    store: &L,
) -> Result<RunFile> {
    let by_id: HashMap<&str, &Query> = queries.iter().map(|q| (q.id.as_str(), q)).collect();
    let lists = run
        .queries
        .par_iter()
        .map(|list| {
            let query = by_id
                .get(list.query_id())
                .ok_or_else(|| Error::UnknownQuery(list.query_id().to_owned()))?;
            rerank(list, query, plan.for_domain(query.domain.as_deref()), store)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RunFile::new(lists))
}
