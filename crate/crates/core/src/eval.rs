//! NDCG@k evaluation, qrels and run files.
//!
//! Relevance is binary. For a ranking with relevance flags `rel_i`:
//!
//! ```text
//! DCG@k  = Σ_{i=1..min(k,n)} rel_i / log2(i + 1)
//! IDCG@k = Σ_{i=1..min(k,|R|)} 1 / log2(i + 1)
//! NDCG@k = DCG@k / IDCG@k        (0 when R is empty)
//! ```
//!
//! The overall score is the mean over all queries, which is the per-domain
//! means weighted by domain question counts.
//!
//! File formats (UTF-8, tab separated):
//!
//! * qrels: `query_id<TAB>passage_id`, optionally a third integer column
//!   where `0` marks a non-relevant judgment;
//! * run: `query_id<TAB>passage_id<TAB>rank<TAB>score`, one query's lines
//!   contiguous, ranks `1..n`.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::candidates::{Candidate, CandidateList};
use crate::error::{Error, Result};

pub const DEFAULT_K: usize = 10;
pub const DEFAULT_DOMAIN: &str = "default";

/// Ground truth: query id → relevant passage ids, in file order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Qrels {
    queries: Vec<String>,
    relevant: HashMap<String, Vec<String>>,
}

impl Qrels {
    pub fn new() -> Self {
        Qrels::default()
    }

    /// Registers a query with no relevant passages yet.
    pub fn add_query(&mut self, query_id: impl Into<String>) {
        let q = query_id.into();
        if !self.relevant.contains_key(&q) {
            self.queries.push(q.clone());
            self.relevant.insert(q, Vec::new());
        }
    }

    /// Returns false if the pair was already present.
    pub fn insert(&mut self, query_id: impl Into<String>, passage_id: impl Into<String>) -> bool {
        let q = query_id.into();
        let p = passage_id.into();
        self.add_query(q.clone());
        let list = self.relevant.get_mut(&q).expect("query registered");
        if list.contains(&p) {
            return false;
        }
        list.push(p);
        true
    }

    pub fn query_ids(&self) -> impl Iterator<Item = &str> {
        self.queries.iter().map(String::as_str)
    }

    pub fn relevant(&self, query_id: &str) -> Option<&[String]> {
        self.relevant.get(query_id).map(Vec::as_slice)
    }

    pub fn relevant_set(&self, query_id: &str) -> HashSet<&str> {
        self.relevant(query_id)
            .unwrap_or_default()
            .iter()
            .map(String::as_str)
            .collect()
    }

    pub fn contains(&self, query_id: &str, passage_id: &str) -> bool {
        self.relevant(query_id)
            .is_some_and(|r| r.iter().any(|p| p == passage_id))
    }

    pub fn len(&self) -> usize {
        self.queries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queries.is_empty()
    }
}

pub fn read_qrels(path: impl AsRef<Path>) -> Result<Qrels> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut qrels = Qrels::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let line_no = n + 1;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        let (q, p, relevant) = match cols.as_slice() {
            [q, p] => (*q, *p, true),
            [q, p, rel] => {
                let rel: i64 = rel
                    .trim()
                    .parse()
                    .map_err(|_| Error::parse(path, line_no, format!("relevance `{rel}` is not an integer")))?;
                (*q, *p, rel > 0)
            }
            _ => {
                return Err(Error::parse(path, line_no, "expected `query_id<TAB>passage_id`"));
            }
        };
        if q.is_empty() || p.is_empty() {
            return Err(Error::parse(path, line_no, "empty id"));
        }
        if relevant {
            if !qrels.insert(q, p) {
                return Err(Error::parse(path, line_no, format!("duplicate pair ({q}, {p})")));
            }
        } else {
            qrels.add_query(q);
        }
    }
    Ok(qrels)
}

/// A ranked run: one candidate list per query, in file order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunFile {
    pub queries: Vec<CandidateList>,
}

impl RunFile {
    pub fn new(queries: Vec<CandidateList>) -> Self {
        RunFile { queries }
    }

    pub fn get(&self, query_id: &str) -> Option<&CandidateList> {
        self.queries.iter().find(|c| c.query_id() == query_id)
    }
}

pub fn read_run(path: impl AsRef<Path>) -> Result<RunFile> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut queries = Vec::new();
    let mut finished: HashSet<String> = HashSet::new();
    let mut current: Option<(String, Vec<Candidate>, HashSet<String>)> = None;

    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let line_no = n + 1;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        let [q, p, rank, score] = cols.as_slice() else {
            return Err(Error::parse(
                path,
                line_no,
                format!("expected 4 tab-separated columns, found {}", cols.len()),
            ));
        };
        if q.is_empty() || p.is_empty() {
            return Err(Error::parse(path, line_no, "empty id"));
        }
        let rank: usize = rank
            .parse()
            .map_err(|_| Error::parse(path, line_no, format!("rank `{rank}` is not a positive integer")))?;
        let score: f64 = score
            .parse()
            .ok()
            .filter(|s: &f64| s.is_finite())
            .ok_or_else(|| Error::parse(path, line_no, format!("score `{score}` is not a finite number")))?;

        if current.as_ref().is_none_or(|(cq, _, _)| cq != q) {
            if let Some((cq, entries, _)) = current.take() {
                finished.insert(cq.clone());
                queries.push(CandidateList::from_sorted(cq, entries));
            }
            if finished.contains(*q) {
                return Err(Error::parse(path, line_no, format!("query `{q}` is not contiguous")));
            }
            current = Some((q.to_string(), Vec::new(), HashSet::new()));
        }
        let (_, entries, seen) = current.as_mut().expect("current query");
        if rank != entries.len() + 1 {
            return Err(Error::parse(
                path,
                line_no,
                format!("rank {rank} for query `{q}`, expected {}", entries.len() + 1),
            ));
        }
        if let Some(prev) = entries.last() {
            if score > prev.score {
                return Err(Error::parse(path, line_no, "score increases within query"));
            }
        }
        if !seen.insert(p.to_string()) {
            return Err(Error::parse(path, line_no, format!("duplicate pair ({q}, {p})")));
        }
        entries.push(Candidate::new(*p, score));
    }
    if let Some((cq, entries, _)) = current {
        queries.push(CandidateList::from_sorted(cq, entries));
    }
    Ok(RunFile { queries })
}

/// Writes a run in canonical form; `read_run` followed by `write_run`
/// reproduces a canonical file byte for byte.
pub fn write_run(run: &RunFile, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    write_with(path, |w| {
        for list in &run.queries {
            for (i, c) in list.entries().iter().enumerate() {
                writeln!(w, "{}\t{}\t{}\t{}", list.query_id(), c.passage_id, i + 1, c.score)?;
            }
        }
        Ok(())
    })
}

/// Challenge submission layout: one line per query, in `query_order`,
/// holding space-separated `passage_id:score` items. Queries absent from
/// the run produce an empty line.
pub fn write_challenge(run: &RunFile, query_order: &[String], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let by_id: HashMap<&str, &CandidateList> = run.queries.iter().map(|c| (c.query_id(), c)).collect();
    write_with(path, |w| {
        for q in query_order {
            if let Some(list) = by_id.get(q.as_str()) {
                let line = list
                    .entries()
                    .iter()
                    .map(|c| format!("{}:{}", c.passage_id, c.score))
                    .collect::<Vec<_>>()
                    .join(" ");
                w.write_all(line.as_bytes())?;
            }
            w.write_all(b"\n")?;
        }
        Ok(())
    })
}

pub(crate) fn write_with(path: &Path, body: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    body(&mut w).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

fn discount(rank: usize) -> f64 {
    1.0 / ((rank + 1) as f64).log2()
}

/// NDCG@k with binary gains. Returns 0 when `relevant` is empty.
///
/// ```
/// use std::collections::HashSet;
/// use passage_rank::eval::ndcg_at_k;
///
/// let relevant: HashSet<&str> = ["a", "c"].into();
/// let v = ndcg_at_k(&["a", "b", "c"], &relevant, 10)?;
/// let ideal = 1.0 + 1.0 / 3f64.log2();
/// assert!((v - 1.5 / ideal).abs() < 1e-12);
/// # Ok::<(), passage_rank::Error>(())
/// ```
pub fn ndcg_at_k<S: AsRef<str>>(ranked: &[S], relevant: &HashSet<&str>, k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::Invalid("k must be >= 1".into()));
    }
    let mut seen = HashSet::with_capacity(ranked.len());
    for id in ranked {
        if !seen.insert(id.as_ref()) {
            return Err(Error::Invalid(format!("duplicate id `{}` in ranking", id.as_ref())));
        }
    }
    if relevant.is_empty() {
        return Ok(0.0);
    }
    let dcg: f64 = ranked
        .iter()
        .take(k)
        .enumerate()
        .filter(|(_, id)| relevant.contains(id.as_ref()))
        .map(|(i, _)| discount(i + 1))
        .sum();
    let idcg: f64 = (1..=relevant.len().min(k)).map(discount).sum();
    Ok(dcg / idcg)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryScore {
    pub query_id: String,
    pub domain: String,
    pub ndcg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainScore {
    pub domain: String,
    pub queries: usize,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub k: usize,
    pub overall: f64,
    pub queries: usize,
    pub per_domain: Vec<DomainScore>,
    pub per_query: Vec<QueryScore>,
}

impl EvalReport {
    pub fn domain(&self, name: &str) -> Option<&DomainScore> {
        self.per_domain.iter().find(|d| d.domain == name)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Human-readable summary, scores in NDCG points (×100).
    pub fn to_table(&self) -> String {
        let width = self
            .per_domain
            .iter()
            .map(|d| d.domain.len())
            .chain([7])
            .max()
            .unwrap_or(7);
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<width$}  {:>7}  {:>9}",
            "domain",
            "queries",
            format!("NDCG@{}", self.k)
        );
        for d in &self.per_domain {
            let _ = writeln!(s, "{:<width$}  {:>7}  {:>9.2}", d.domain, d.queries, d.mean * 100.0);
        }
        let _ = writeln!(
            s,
            "{:<width$}  {:>7}  {:>9.2}",
            "overall",
            self.queries,
            self.overall * 100.0
        );
        s
    }
}

/// Scores every qrels query; queries without a run entry score 0. Domains
/// come from `domains` (missing entries fall under [`DEFAULT_DOMAIN`]).
pub fn evaluate(run: &RunFile, qrels: &Qrels, domains: &HashMap<String, String>, k: usize) -> Result<EvalReport> {
    if k == 0 {
        return Err(Error::Invalid("k must be >= 1".into()));
    }
    let mut by_query: HashMap<&str, &CandidateList> = HashMap::new();
    for list in &run.queries {
        if qrels.relevant(list.query_id()).is_none() {
            return Err(Error::UnknownQuery(list.query_id().to_owned()));
        }
        if by_query.insert(list.query_id(), list).is_some() {
            return Err(Error::Invalid(format!(
                "query `{}` appears twice in run",
                list.query_id()
            )));
        }
    }

    let mut per_query = Vec::with_capacity(qrels.len());
    let mut sums: BTreeMap<&str, (usize, f64)> = BTreeMap::new();
    for q in qrels.query_ids() {
        let relevant = qrels.relevant_set(q);
        let ndcg = match by_query.get(q) {
            Some(list) => ndcg_at_k(&list.ids().collect::<Vec<_>>(), &relevant, k)?,
            None => 0.0,
        };
        let domain = domains.get(q).map_or(DEFAULT_DOMAIN, String::as_str);
        let e = sums.entry(domain).or_default();
        e.0 += 1;
        e.1 += ndcg;
        per_query.push(QueryScore {
            query_id: q.to_owned(),
            domain: domain.to_owned(),
            ndcg,
        });
    }
    let per_domain = sums
        .into_iter()
        .map(|(domain, (n, total))| DomainScore {
            domain: domain.to_owned(),
            queries: n,
            mean: total / n as f64,
        })
        .collect();
    let overall = if per_query.is_empty() {
        0.0
    } else {
        per_query.iter().map(|q| q.ndcg).sum::<f64>() / per_query.len() as f64
    };
    Ok(EvalReport {
        k,
        overall,
        queries: per_query.len(),
        per_domain,
        per_query,
    })
}
