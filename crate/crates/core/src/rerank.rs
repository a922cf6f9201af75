//! Second stage: rescore the head of a candidate list with an ensemble and
//! reorder it by the summed probabilities.
//!
//! Only the first `B` candidates (the budget) are scored. They are sorted
//! by fused score, highest first, with ties kept in first-stage order. The
//! remaining candidates follow untouched.
//!
//! ```
//! use std::sync::Arc;
//! use passage_rank::candidates::{Candidate, CandidateList};
//! use passage_rank::corpus::Query;
//! use passage_rank::rerank::{rerank, Budget, Ensemble, RerankConfig};
//! use passage_rank::scorer::{LexicalOverlapScorer, PairScorer};
//! use passage_rank::text::{Analyzer, Stemmer};
//! use std::collections::HashMap;
//!
//! let analyzer = Arc::new(Analyzer::new(true, Stemmer::Identity, ["i"]));
//! let lexical: Arc<dyn PairScorer> = Arc::new(LexicalOverlapScorer::new("lexical", analyzer));
//! let cfg = RerankConfig::new(Budget::All, Ensemble::new(vec![lexical])?);
//!
//! let store: HashMap<String, String> = [
//!     ("p1", "kot"),
//!     ("p2", "kot i pies"),
//! ].into_iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
//! let first_stage = CandidateList::new(
//!     "q1",
//!     vec![Candidate::new("p1", 7.5), Candidate::new("p2", 3.0)],
//! )?;
//!
//! let out = rerank(&first_stage, &Query::new("q1", "kot i pies"), &cfg, &store)?;
//! assert_eq!(out.ids().collect::<Vec<_>>(), ["p2", "p1"]);
//! # Ok::<(), passage_rank::Error>(())
//! ```

use std::collections::HashSet;
use std::fmt;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::candidates::{Candidate, CandidateList};
use crate::corpus::{PassageLookup, Query};
use crate::error::{Error, Result};
use crate::scorer::{validate_scores, PairScorer, ScorePair, ScorerError};

pub const DEFAULT_BATCH_SIZE: usize = 32;

/// How many first-stage candidates go to the reranker.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Budget {
    Top(usize),
    All,
}

impl Budget {
    pub fn top(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Config("rerank budget must be >= 1".into()));
        }
        Ok(Budget::Top(n))
    }

    pub fn head_len(self, len: usize) -> usize {
        match self {
            Budget::Top(n) => n.min(len),
            Budget::All => len,
        }
    }
}

impl fmt::Display for Budget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Budget::Top(n) => write!(f, "{n}"),
            Budget::All => f.write_str("all"),
        }
    }
}

impl std::str::FromStr for Budget {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "all" => Ok(Budget::All),
            n => n
                .parse::<usize>()
                .map_err(|_| Error::Config(format!("invalid budget `{s}` (expected a positive integer or `all`)")))
                .and_then(Budget::top),
        }
    }
}

impl Serialize for Budget {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Budget::Top(n) => s.serialize_u64(*n as u64),
            Budget::All => s.serialize_str("all"),
        }
    }
}

impl<'de> Deserialize<'de> for Budget {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Int(i64),
            Str(String),
        }
        let parsed = match Raw::deserialize(d)? {
            Raw::Int(n) if n >= 1 => Ok(Budget::Top(n as usize)),
            Raw::Int(n) => Err(format!("rerank budget must be >= 1, got {n}")),
            Raw::Str(s) => s.parse().map_err(|e: Error| e.to_string()),
        };
        parsed.map_err(serde::de::Error::custom)
    }
}

/// Non-empty set of scorers with unique names.
#[derive(Clone)]
pub struct Ensemble {
    members: Vec<Arc<dyn PairScorer>>,
}

impl Ensemble {
    pub fn new(members: Vec<Arc<dyn PairScorer>>) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::Config("ensemble needs at least one scorer".into()));
        }
        let mut names = HashSet::new();
        for m in &members {
            if !names.insert(m.name().to_owned()) {
                return Err(Error::Config(format!("duplicate scorer name `{}`", m.name())));
            }
        }
        Ok(Ensemble { members })
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.members.iter().map(|m| m.name())
    }

    pub fn members(&self) -> &[Arc<dyn PairScorer>] {
        &self.members
    }
}

impl fmt::Debug for Ensemble {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.names()).finish()
    }
}

#[derive(Debug, Clone)]
pub struct RerankConfig {
    pub budget: Budget,
    /// Pairs per scorer call.
    pub batch_size: usize,
    pub ensemble: Ensemble,
    /// Batches of one query submitted concurrently to each scorer.
    pub parallel_batches: usize,
}

impl RerankConfig {
    pub fn new(budget: Budget, ensemble: Ensemble) -> Self {
        RerankConfig {
            budget,
            batch_size: DEFAULT_BATCH_SIZE,
            ensemble,
            parallel_batches: 1,
        }
    }

    pub fn with_batch_size(mut self, batch_size: usize) -> Self {
        self.batch_size = batch_size;
        self
    }

    pub fn with_budget(mut self, budget: Budget) -> Self {
        self.budget = budget;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if matches!(self.budget, Budget::Top(0)) {
            return Err(Error::Config("rerank budget must be >= 1".into()));
        }
        Ok(())
    }
}

/// Column-wise sum of per-model score rows.
///
/// ```
/// let fused = passage_rank::rerank::fuse(&[vec![0.2, 0.9], vec![0.4, 0.1]])?;
/// assert!((fused[0] - 0.6).abs() < 1e-12 && (fused[1] - 1.0).abs() < 1e-12);
/// # Ok::<(), passage_rank::Error>(())
/// ```
pub fn fuse(scores_per_model: &[Vec<f64>]) -> Result<Vec<f64>> {
    let Some(first) = scores_per_model.first() else {
        return Err(Error::Invalid("no score rows to fuse".into()));
    };
    let width = first.len();
    let mut fused = vec![0.0; width];
    for (m, row) in scores_per_model.iter().enumerate() {
        if row.len() != width {
            return Err(Error::Invalid(format!(
                "ragged score matrix: row {m} has {} entries, row 0 has {width}",
                row.len()
            )));
        }
        for (p, (&s, acc)) in row.iter().zip(fused.iter_mut()).enumerate() {
            if !(0.0..=1.0).contains(&s) {
                return Err(Error::Invalid(format!(
                    "score {s} at row {m}, column {p} outside [0, 1]"
                )));
            }
            *acc += s;
        }
    }
    Ok(fused)
}

/// Reranks the head of `candidates`.
///
/// The output is a permutation of the input. Tail entries (rank > budget)
/// keep their ids, scores and order. Head entries are ordered by fused
/// score and carry `fused + s`, where `s` is the best tail score (or 0
/// without a tail), so the list stays score-sorted.
pub fn rerank<L: PassageLookup + ?Sized>(
    candidates: &CandidateList,
    query: &Query,
    cfg: &RerankConfig,
    store: &L,
) -> Result<CandidateList> {
    cfg.validate()?;
    if candidates.query_id() != query.id {
        return Err(Error::Invalid(format!(
            "candidate list is for query `{}` but query `{}` was given",
            candidates.query_id(),
            query.id
        )));
    }
    let entries = candidates.entries();
    let head_len = cfg.budget.head_len(entries.len());
    if head_len == 0 {
        return Ok(candidates.clone());
    }
    let (head, tail) = entries.split_at(head_len);

    let pairs = head
        .iter()
        .map(|c| {
            store
                .passage_text(&c.passage_id)
                .map(|text| ScorePair::new(&query.text, text))
                .ok_or_else(|| Error::UnknownPassage(c.passage_id.clone()))
        })
        .collect::<Result<Vec<_>>>()?;

    let rows = cfg
        .ensemble
        .members()
        .iter()
        .map(|scorer| score_all(scorer.as_ref(), &pairs, cfg.batch_size, cfg.parallel_batches))
        .collect::<std::result::Result<Vec<_>, ScorerError>>()?;
    let fused = fuse(&rows)?;

    let mut order: Vec<usize> = (0..head_len).collect();
    order.sort_by(|&a, &b| fused[b].total_cmp(&fused[a]).then(a.cmp(&b)));

    let shift = tail.first().map_or(0.0, |c| c.score.max(0.0));
    let mut out = Vec::with_capacity(entries.len());
    out.extend(
        order
            .into_iter()
            .map(|i| Candidate::new(head[i].passage_id.clone(), fused[i] + shift)),
    );
    out.extend(tail.iter().cloned());
    Ok(CandidateList::from_sorted(candidates.query_id().to_owned(), out))
}

type BatchResult = std::result::Result<Vec<f64>, ScorerError>;

fn score_all(
    scorer: &dyn PairScorer,
    pairs: &[ScorePair<'_>],
    batch_size: usize,
    parallel: usize,
) -> std::result::Result<Vec<f64>, ScorerError> {
    let batches: Vec<&[ScorePair<'_>]> = pairs.chunks(batch_size).collect();
    let run = |i: usize| -> std::result::Result<Vec<f64>, ScorerError> {
        let batch = batches[i];
        let scores = scorer.score_batch(batch).map_err(|e| e.in_batch(i))?;
        validate_scores(scorer.name(), batch.len(), &scores).map_err(|e| e.in_batch(i))?;
        Ok(scores)
    };

    let workers = parallel.clamp(1, batches.len().max(1));
    if workers == 1 {
        let mut out = Vec::with_capacity(pairs.len());
        for i in 0..batches.len() {
            out.extend(run(i)?);
        }
        return Ok(out);
    }

    let next = AtomicUsize::new(0);
    let failed = AtomicBool::new(false);
    let results: Mutex<Vec<Option<BatchResult>>> = Mutex::new(vec![None; batches.len()]);
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                if failed.load(Ordering::Relaxed) {
                    break;
                }
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= batches.len() {
                    break;
                }
                let r = run(i);
                if r.is_err() {
                    failed.store(true, Ordering::Relaxed);
                }
                results.lock().unwrap_or_else(|e| e.into_inner())[i] = Some(r);
            });
        }
    });
    let results = results.into_inner().unwrap_or_else(|e| e.into_inner());
    if let Some(err) = results.iter().flatten().find_map(|r| r.as_ref().err()) {
        return Err(err.clone());
    }
    let mut out = Vec::with_capacity(pairs.len());
    for r in results {
        out.extend(r.expect("all batches ran").expect("no failures"));
    }
    Ok(out)
}
