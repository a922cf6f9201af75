//! OKAPI BM25 over an in-memory inverted index.
//!
//! For a query `q` and passage `d`:
//!
//! ```text
//! score(q, d) = Σ_{t ∈ q} idf(t) · tf(t,d)·(k1 + 1) / (tf(t,d) + k1·(1 − b + b·|d|/avgdl))
//! ```
//!
//! A term repeated in the query contributes once per occurrence.
//!
//! IDF starts from `ln((N − df + 0.5) / (df + 0.5))`. That value is negative
//! for terms in more than half the passages (and zero at exactly half), so
//! every non-positive value is replaced by `ε · mean(positive idf)`. In a
//! corpus where no term has positive IDF (N ≤ 2, or every term is common)
//! the mean is taken over the smoothed `ln(1 + (N − df + 0.5)/(df + 0.5))`
//! instead so the floor stays positive.

mod persist;

use std::cmp::Ordering;
use std::collections::hash_map::Entry;
use std::collections::{BinaryHeap, HashMap};

use serde::{Deserialize, Serialize};

use crate::candidates::{Candidate, CandidateList};
use crate::corpus::Passage;
use crate::error::{Error, Result};
use crate::text::Analyzer;

pub use persist::{load_index, save_index, FORMAT_VERSION, MAGIC};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bm25Params {
    #[serde(default = "Bm25Params::default_k1")]
    pub k1: f64,
    #[serde(default = "Bm25Params::default_b")]
    pub b: f64,
    #[serde(default = "Bm25Params::default_epsilon")]
    pub epsilon: f64,
}

impl Bm25Params {
    fn default_k1() -> f64 {
        1.2
    }
    fn default_b() -> f64 {
        0.75
    }
    fn default_epsilon() -> f64 {
        0.25
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.k1.is_finite() && self.k1 >= 0.0) {
            return Err(Error::Config(format!("k1 must be >= 0, got {}", self.k1)));
        }
        if !(0.0..=1.0).contains(&self.b) {
            return Err(Error::Config(format!("b must be in [0, 1], got {}", self.b)));
        }
        if !(self.epsilon.is_finite() && self.epsilon >= 0.0) {
            return Err(Error::Config(format!("epsilon must be >= 0, got {}", self.epsilon)));
        }
        Ok(())
    }
}

impl Default for Bm25Params {
    fn default() -> Self {
        Bm25Params {
            k1: 1.2,
            b: 0.75,
            epsilon: 0.25,
        }
    }
}

/// `ln((N − df + 0.5) / (df + 0.5))`, before any flooring.
pub fn raw_idf(doc_freq: u64, num_docs: u64) -> f64 {
    ((num_docs as f64 - doc_freq as f64 + 0.5) / (doc_freq as f64 + 0.5)).ln()
}

fn floored_idf(doc_freqs: &[u32], num_docs: u64, epsilon: f64) -> Vec<f64> {
    let raw: Vec<f64> = doc_freqs.iter().map(|&df| raw_idf(df as u64, num_docs)).collect();
    let (sum, count) = raw
        .iter()
        .filter(|&&v| v > 0.0)
        .fold((0.0, 0usize), |(s, c), &v| (s + v, c + 1));
    let mean_positive = if count > 0 {
        sum / count as f64
    } else if doc_freqs.is_empty() {
        0.0
    } else {
        let smoothed: f64 = doc_freqs
            .iter()
            .map(|&df| (1.0 + (num_docs as f64 - df as f64 + 0.5) / (df as f64 + 0.5)).ln())
            .sum();
        smoothed / doc_freqs.len() as f64
    };
    let floor = epsilon * mean_positive;
    raw.into_iter().map(|v| if v > 0.0 { v } else { floor }).collect()
}

/// Accumulates analyzed passages in ordinal order.
#[derive(Debug)]
pub struct IndexBuilder {
    params: Bm25Params,
    term_ids: HashMap<String, u32>,
    postings: Vec<Vec<(u32, u32)>>,
    doc_len: Vec<u32>,
    ids: Vec<String>,
    ordinals: HashMap<String, u32>,
    scratch: Vec<u32>,
}

impl IndexBuilder {
    pub fn new(params: Bm25Params) -> Result<Self> {
        params.validate()?;
        Ok(IndexBuilder {
            params,
            term_ids: HashMap::new(),
            postings: Vec::new(),
            doc_len: Vec::new(),
            ids: Vec::new(),
            ordinals: HashMap::new(),
            scratch: Vec::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn add<S: AsRef<str>>(&mut self, id: impl Into<String>, tokens: &[S]) -> Result<()> {
        let id = id.into();
        let ordinal = u32::try_from(self.ids.len())
            .ok()
            .filter(|&o| o < u32::MAX)
            .ok_or_else(|| Error::Invalid("corpus exceeds u32::MAX passages".into()))?;
        match self.ordinals.entry(id) {
            Entry::Occupied(e) => return Err(Error::DuplicatePassage(e.key().clone())),
            Entry::Vacant(e) => {
                self.ids.push(e.key().clone());
                e.insert(ordinal);
            }
        }
        let len =
            u32::try_from(tokens.len()).map_err(|_| Error::Invalid("passage longer than u32::MAX tokens".into()))?;
        self.doc_len.push(len);

        self.scratch.clear();
        for tok in tokens {
            let tok = tok.as_ref();
            let tid = match self.term_ids.get(tok) {
                Some(&t) => t,
                None => {
                    let t = self.postings.len() as u32;
                    self.term_ids.insert(tok.to_owned(), t);
                    self.postings.push(Vec::new());
                    t
                }
            };
            self.scratch.push(tid);
        }
        self.scratch.sort_unstable();
        let mut i = 0;
        while i < self.scratch.len() {
            let tid = self.scratch[i];
            let mut j = i + 1;
            while j < self.scratch.len() && self.scratch[j] == tid {
                j += 1;
            }
            self.postings[tid as usize].push((ordinal, (j - i) as u32));
            i = j;
        }
        Ok(())
    }

    pub fn finish(self) -> Result<Bm25Index> {
        if self.ids.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let mut terms = vec![String::new(); self.term_ids.len()];
        for (term, tid) in self.term_ids {
            terms[tid as usize] = term;
        }
        let total: usize = self.postings.iter().map(Vec::len).sum();
        let mut offsets = Vec::with_capacity(self.postings.len() + 1);
        let mut docs = Vec::with_capacity(total);
        let mut tfs = Vec::with_capacity(total);
        offsets.push(0u64);
        for list in &self.postings {
            for &(d, tf) in list {
                docs.push(d);
                tfs.push(tf);
            }
            offsets.push(docs.len() as u64);
        }
        Ok(Bm25Index::from_parts(
            self.params,
            terms,
            offsets,
            docs,
            tfs,
            self.doc_len,
            self.ids,
        ))
    }
}

/// Immutable BM25 index. Postings are stored contiguously per term, sorted
/// by passage ordinal.
#[derive(Debug, Clone)]
pub struct Bm25Index {
    params: Bm25Params,
    terms: Vec<String>,
    term_ids: HashMap<String, u32>,
    offsets: Vec<u64>,
    post_docs: Vec<u32>,
    post_tfs: Vec<u32>,
    idf: Vec<f64>,
    doc_len: Vec<u32>,
    avgdl: f64,
    ids: Vec<String>,
    ordinals: HashMap<String, u32>,
}

/// One passage hit from [`Bm25Index::top_ordinals`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredDoc {
    pub ordinal: u32,
    pub score: f64,
}

impl Bm25Index {
    /// Builds an index from a stream of passages.
    pub fn build<I>(corpus: I, analyzer: &Analyzer, params: Bm25Params) -> Result<Self>
    where
        I: IntoIterator<Item = Result<Passage>>,
    {
        let mut builder = IndexBuilder::new(params)?;
        for passage in corpus {
            let passage = passage?;
            let tokens = analyzer.analyze(&passage.text);
            builder.add(passage.id, &tokens)?;
        }
        builder.finish()
    }

    fn from_parts(
        params: Bm25Params,
        terms: Vec<String>,
        offsets: Vec<u64>,
        post_docs: Vec<u32>,
        post_tfs: Vec<u32>,
        doc_len: Vec<u32>,
        ids: Vec<String>,
    ) -> Self {
        let n = doc_len.len() as u64;
        let dfs: Vec<u32> = offsets.windows(2).map(|w| (w[1] - w[0]) as u32).collect();
        let idf = floored_idf(&dfs, n, params.epsilon);
        let avgdl = mean_len(&doc_len);
        let term_ids = terms.iter().enumerate().map(|(i, t)| (t.clone(), i as u32)).collect();
        let ordinals = ids.iter().enumerate().map(|(i, id)| (id.clone(), i as u32)).collect();
        Bm25Index {
            params,
            terms,
            term_ids,
            offsets,
            post_docs,
            post_tfs,
            idf,
            doc_len,
            avgdl,
            ids,
            ordinals,
        }
    }

    pub fn params(&self) -> Bm25Params {
        self.params
    }

    pub fn num_passages(&self) -> usize {
        self.doc_len.len()
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn num_postings(&self) -> usize {
        self.post_docs.len()
    }

    pub fn avgdl(&self) -> f64 {
        self.avgdl
    }

    pub fn doc_len(&self, ordinal: u32) -> u32 {
        self.doc_len[ordinal as usize]
    }

    pub fn passage_id(&self, ordinal: u32) -> &str {
        &self.ids[ordinal as usize]
    }

    pub fn ordinal(&self, passage_id: &str) -> Option<u32> {
        self.ordinals.get(passage_id).copied()
    }

    pub fn doc_freq(&self, term: &str) -> Option<usize> {
        self.term_ids.get(term).map(|&t| self.posting_range(t).len())
    }

    /// Stored (floored) IDF of an indexed term.
    pub fn idf(&self, term: &str) -> Option<f64> {
        self.term_ids.get(term).map(|&t| self.idf[t as usize])
    }

    /// `(ordinal, tf)` pairs for a term, ascending by ordinal.
    pub fn postings(&self, term: &str) -> impl Iterator<Item = (u32, u32)> + '_ {
        let range = self.term_ids.get(term).map(|&t| self.posting_range(t)).unwrap_or(0..0);
        self.post_docs[range.clone()]
            .iter()
            .copied()
            .zip(self.post_tfs[range].iter().copied())
    }

    /// Indexed terms in term-id order.
    pub fn terms(&self) -> impl Iterator<Item = &str> {
        self.terms.iter().map(String::as_str)
    }

    fn posting_range(&self, tid: u32) -> std::ops::Range<usize> {
        self.offsets[tid as usize] as usize..self.offsets[tid as usize + 1] as usize
    }

    // Distinct known query terms with their multiplicity, in order of first
    // appearance. Both scoring paths add contributions in this order.
    fn query_terms<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<(u32, u32)> {
        let mut out: Vec<(u32, u32)> = Vec::new();
        for tok in tokens {
            if let Some(&tid) = self.term_ids.get(tok.as_ref()) {
                match out.iter_mut().find(|(t, _)| *t == tid) {
                    Some((_, c)) => *c += 1,
                    None => out.push((tid, 1)),
                }
            }
        }
        out
    }

    #[inline]
    fn term_weight(&self, idf: f64, tf: u32, dl: u32) -> f64 {
        let Bm25Params { k1, b, .. } = self.params;
        let tf = tf as f64;
        let norm = if self.avgdl > 0.0 {
            1.0 - b + b * dl as f64 / self.avgdl
        } else {
            1.0 - b
        };
        idf * (tf * (k1 + 1.0)) / (tf + k1 * norm)
    }

    /// BM25 score of one passage.
    ///
    /// # Panics
    ///
    /// If `ordinal` is not below [`num_passages`](Self::num_passages).
    pub fn score<S: AsRef<str>>(&self, query_tokens: &[S], ordinal: u32) -> f64 {
        assert!(
            (ordinal as usize) < self.doc_len.len(),
            "ordinal {ordinal} out of range for {} passages",
            self.doc_len.len()
        );
        let dl = self.doc_len[ordinal as usize];
        let mut total = 0.0;
        for (tid, count) in self.query_terms(query_tokens) {
            let range = self.posting_range(tid);
            let docs = &self.post_docs[range.clone()];
            if let Ok(pos) = docs.binary_search(&ordinal) {
                let tf = self.post_tfs[range.start + pos];
                total += count as f64 * self.term_weight(self.idf[tid as usize], tf, dl);
            }
        }
        total
    }

    /// The `k` best passages with a positive score, ordered by score
    /// descending then ordinal ascending.
    pub fn top_ordinals<S: AsRef<str>>(&self, query_tokens: &[S], k: usize) -> Vec<ScoredDoc> {
        if k == 0 {
            return Vec::new();
        }
        let terms = self.query_terms(query_tokens);
        if terms.is_empty() {
            return Vec::new();
        }
        let touched: usize = terms.iter().map(|&(t, _)| self.posting_range(t).len()).sum();
        let mut heap = TopK::new(k);

        if touched.saturating_mul(8) >= self.doc_len.len() {
            let mut acc = vec![0.0f64; self.doc_len.len()];
            self.accumulate(&terms, |d, w| acc[d as usize] += w);
            for (d, &s) in acc.iter().enumerate() {
                if s > 0.0 {
                    heap.push(d as u32, s);
                }
            }
        } else {
            let mut acc: HashMap<u32, f64> = HashMap::with_capacity(touched);
            self.accumulate(&terms, |d, w| *acc.entry(d).or_insert(0.0) += w);
            for (d, s) in acc {
                if s > 0.0 {
                    heap.push(d, s);
                }
            }
        }
        heap.into_sorted()
    }

    fn accumulate(&self, terms: &[(u32, u32)], mut add: impl FnMut(u32, f64)) {
        for &(tid, count) in terms {
            let idf = self.idf[tid as usize];
            let range = self.posting_range(tid);
            for (&d, &tf) in self.post_docs[range.clone()].iter().zip(&self.post_tfs[range]) {
                add(d, count as f64 * self.term_weight(idf, tf, self.doc_len[d as usize]));
            }
        }
    }

    /// First-stage retrieval for one query.
    pub fn retrieve_topk<S: AsRef<str>>(
        &self,
        query_id: impl Into<String>,
        query_tokens: &[S],
        k: usize,
    ) -> CandidateList {
        let entries = self
            .top_ordinals(query_tokens, k)
            .into_iter()
            .map(|h| Candidate::new(self.ids[h.ordinal as usize].clone(), h.score))
            .collect();
        CandidateList::from_sorted(query_id.into(), entries)
    }
}

fn mean_len(doc_len: &[u32]) -> f64 {
    if doc_len.is_empty() {
        return 0.0;
    }
    let total: u64 = doc_len.iter().map(|&l| l as u64).sum();
    total as f64 / doc_len.len() as f64
}

// Max-heap on "worseness": the root is the weakest hit kept so far.
#[derive(Debug, Clone, Copy)]
struct HeapEntry(ScoredDoc);

impl PartialEq for HeapEntry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for HeapEntry {}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .0
            .score
            .total_cmp(&self.0.score)
            .then(self.0.ordinal.cmp(&other.0.ordinal))
    }
}

struct TopK {
    k: usize,
    heap: BinaryHeap<HeapEntry>,
}

impl TopK {
    fn new(k: usize) -> Self {
        TopK {
            k,
            heap: BinaryHeap::with_capacity(k.min(1 << 16) + 1),
        }
    }

    fn push(&mut self, ordinal: u32, score: f64) {
        let entry = HeapEntry(ScoredDoc { ordinal, score });
        if self.heap.len() < self.k {
            self.heap.push(entry);
        } else if let Some(mut worst) = self.heap.peek_mut() {
            if entry < *worst {
                *worst = entry;
            }
        }
    }

    fn into_sorted(self) -> Vec<ScoredDoc> {
        self.heap.into_sorted_vec().into_iter().map(|e| e.0).collect()
    }
}
