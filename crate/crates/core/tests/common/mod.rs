#![allow(dead_code)]

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;

pub type Handler = dyn Fn(&str, &str, &[u8]) -> (u16, String) + Send + Sync;

/// Minimal HTTP/1.1 server on 127.0.0.1 for exercising the scorer client.
pub struct MockServer {
    addr: std::net::SocketAddr,
    stop: Arc<AtomicBool>,
    pub requests: Arc<AtomicUsize>,
    pub in_flight: Arc<AtomicUsize>,
    pub peak_in_flight: Arc<AtomicUsize>,
    thread: Option<JoinHandle<()>>,
}

impl MockServer {
    pub fn start(handler: impl Fn(&str, &str, &[u8]) -> (u16, String) + Send + Sync + 'static) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let stop = Arc::new(AtomicBool::new(false));
        let requests = Arc::new(AtomicUsize::new(0));
        let in_flight = Arc::new(AtomicUsize::new(0));
        let peak = Arc::new(AtomicUsize::new(0));
        let handler: Arc<Handler> = Arc::new(handler);
        let thread = {
            let (stop, requests, in_flight, peak) = (stop.clone(), requests.clone(), in_flight.clone(), peak.clone());
            std::thread::spawn(move || {
                for conn in listener.incoming() {
                    if stop.load(Ordering::SeqCst) {
                        break;
                    }
                    let Ok(conn) = conn else { continue };
                    let (handler, requests, in_flight, peak) =
                        (handler.clone(), requests.clone(), in_flight.clone(), peak.clone());
                    std::thread::spawn(move || {
                        let now = in_flight.fetch_add(1, Ordering::SeqCst) + 1;
                        peak.fetch_max(now, Ordering::SeqCst);
                        requests.fetch_add(1, Ordering::SeqCst);
                        let _ = serve(conn, &*handler);
                        in_flight.fetch_sub(1, Ordering::SeqCst);
                    });
                }
            })
        };
        MockServer {
            addr,
            stop,
            requests,
            in_flight,
            peak_in_flight: peak,
            thread: Some(thread),
        }
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn request_count(&self) -> usize {
        self.requests.load(Ordering::SeqCst)
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        let _ = TcpStream::connect(self.addr);
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

fn serve(conn: TcpStream, handler: &Handler) -> std::io::Result<()> {
    let mut reader = BufReader::new(conn.try_clone()?);
    let mut request_line = String::new();
    reader.read_line(&mut request_line)?;
    let mut parts = request_line.split_whitespace();
    let method = parts.next().unwrap_or("").to_owned();
    let path = parts.next().unwrap_or("").to_owned();
    let mut content_length = 0usize;
    loop {
        let mut line = String::new();
        reader.read_line(&mut line)?;
        let line = line.trim_end();
        if line.is_empty() {
            break;
        }
        if let Some((k, v)) = line.split_once(':') {
            if k.eq_ignore_ascii_case("content-length") {
                content_length = v.trim().parse().unwrap_or(0);
            }
        }
    }
    let mut body = vec![0u8; content_length];
    reader.read_exact(&mut body)?;
    let (status, text) = handler(&method, &path, &body);
    let mut conn = conn;
    write!(
        conn,
        "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{text}",
        text.len()
    )?;
    conn.flush()
}

/// Parses a `/score` request body into (query, passage) pairs.
pub fn parse_pairs(body: &[u8]) -> Vec<(String, String)> {
    let v: serde_json::Value = serde_json::from_slice(body).unwrap();
    v["pairs"]
        .as_array()
        .unwrap()
        .iter()
        .map(|p| {
            (
                p["query"].as_str().unwrap().to_owned(),
                p["passage"].as_str().unwrap().to_owned(),
            )
        })
        .collect()
}

pub fn scores_json(scores: &[f64]) -> String {
    serde_json::json!({ "scores": scores }).to_string()
}

pub fn fixture_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/e2e")
}

/// Brute-force BM25 straight from token lists: document frequencies are
/// counted by scanning every document, no index structures involved.
pub struct Oracle {
    pub docs: Vec<Vec<String>>,
    pub k1: f64,
    pub b: f64,
    pub epsilon: f64,
    raw: HashMap<String, f64>,
    avgdl: f64,
}

impl Oracle {
    pub fn new(docs: Vec<Vec<String>>) -> Self {
        let n = docs.len() as f64;
        let mut raw = HashMap::new();
        for t in docs.iter().flatten() {
            if !raw.contains_key(t) {
                let df = docs.iter().filter(|d| d.contains(t)).count() as f64;
                raw.insert(t.clone(), ((n - df + 0.5) / (df + 0.5)).ln());
            }
        }
        let avgdl = docs.iter().map(|d| d.len()).sum::<usize>() as f64 / n;
        Oracle {
            docs,
            k1: 1.2,
            b: 0.75,
            epsilon: 0.25,
            raw,
            avgdl,
        }
    }

    pub fn raw_idf(&self, term: &str) -> f64 {
        self.raw[term]
    }

    pub fn mean_positive_idf(&self) -> Option<f64> {
        let pos: Vec<f64> = self.raw.values().copied().filter(|&v| v > 0.0).collect();
        (!pos.is_empty()).then(|| pos.iter().sum::<f64>() / pos.len() as f64)
    }

    /// With no positive raw IDF anywhere (tiny corpora), the floor is
    /// taken from the mean of `ln(1 + (N - df + 0.5) / (df + 0.5))`.
    pub fn idf(&self, term: &str) -> f64 {
        let r = self.raw_idf(term);
        if r > 0.0 {
            return r;
        }
        let mean = self.mean_positive_idf().unwrap_or_else(|| {
            let n = self.docs.len() as f64;
            let smoothed: f64 = self
                .raw
                .keys()
                .map(|t| {
                    let df = self.docs.iter().filter(|d| d.contains(t)).count() as f64;
                    (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
                })
                .sum();
            smoothed / self.raw.len() as f64
        });
        self.epsilon * mean
    }

    pub fn score(&self, query: &[String], doc: usize) -> f64 {
        let d = &self.docs[doc];
        query
            .iter()
            .map(|t| {
                let tf = d.iter().filter(|w| *w == t).count() as f64;
                if tf == 0.0 {
                    return 0.0;
                }
                self.idf(t) * tf * (self.k1 + 1.0)
                    / (tf + self.k1 * (1.0 - self.b + self.b * d.len() as f64 / self.avgdl))
            })
            .sum()
    }

    /// All positive-score docs, best first, ties by ordinal.
    pub fn ranking(&self, query: &[String]) -> Vec<(usize, f64)> {
        let mut all: Vec<(usize, f64)> = (0..self.docs.len())
            .map(|d| (d, self.score(query, d)))
            .filter(|&(_, s)| s > 0.0)
            .collect();
        all.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        all
    }
}

/// NDCG@k written independently of the library: explicit gain vector,
/// ideal ranking from sorting gains.
pub fn reference_ndcg(ranked: &[&str], relevant: &[&str], k: usize) -> f64 {
    let gains: Vec<f64> = ranked
        .iter()
        .map(|id| if relevant.contains(id) { 1.0 } else { 0.0 })
        .collect();
    let dcg = |g: &[f64]| -> f64 {
        g.iter()
            .take(k)
            .enumerate()
            .map(|(i, &x)| x / (i as f64 + 2.0).log2())
            .sum()
    };
    let mut ideal = vec![1.0; relevant.len()];
    ideal.extend(std::iter::repeat_n(0.0, k));
    let idcg = dcg(&ideal);
    if idcg == 0.0 {
        0.0
    } else {
        dcg(&gains) / idcg
    }
}

/// Compares a ranking against the oracle. Positions must agree on score
/// within `tol`; where the oracle score at a position is unambiguous (no
/// other doc within `tol`) the doc must be the same. Exact ties in `got`
/// must be ordered by ordinal. Returns the number of positions where a
/// near-tie (within `tol`) put a different doc than the oracle's.
pub fn check_ranking(
    got: &[(usize, f64)],
    want: &[(usize, f64)],
    oracle_scores: &[f64],
    tol: f64,
) -> Result<usize, String> {
    if got.len() != want.len() {
        return Err(format!("length {} vs oracle {}", got.len(), want.len()));
    }
    let mut ambiguous = 0;
    for (i, (&(gd, gs), &(wd, ws))) in got.iter().zip(want).enumerate() {
        if (gs - ws).abs() > tol || (gs - oracle_scores[gd]).abs() > tol {
            return Err(format!("rank {i}: doc {gd} score {gs}, oracle has doc {wd} at {ws}"));
        }
        let close = oracle_scores
            .iter()
            .filter(|&&s| s > 0.0 && (s - ws).abs() <= tol)
            .count();
        if close > 1 {
            ambiguous += usize::from(gd != wd);
        } else if gd != wd {
            return Err(format!("rank {i}: doc {gd}, oracle doc {wd}"));
        }
        if i > 0 {
            let (pd, ps) = got[i - 1];
            if ps < gs || (ps == gs && pd > gd) {
                return Err(format!("rank {i}: not sorted by score desc, ordinal asc"));
            }
        }
    }
    Ok(ambiguous)
}

/// Scores each passage by looking its text up in a table.
pub struct TableScorer {
    pub name: String,
    pub scores: HashMap<String, f64>,
}

impl passage_rank::PairScorer for TableScorer {
    fn name(&self) -> &str {
        &self.name
    }

    fn score_batch(&self, pairs: &[passage_rank::ScorePair<'_>]) -> Result<Vec<f64>, passage_rank::ScorerError> {
        Ok(pairs.iter().map(|p| self.scores[p.passage.as_ref()]).collect())
    }
}

/// Applies `f` to another scorer's output.
pub struct MappedScorer<F> {
    pub name: String,
    pub inner: Arc<dyn passage_rank::PairScorer>,
    pub f: F,
}

impl<F: Fn(f64) -> f64 + Send + Sync> passage_rank::PairScorer for MappedScorer<F> {
    fn name(&self) -> &str {
        &self.name
    }

    fn score_batch(&self, pairs: &[passage_rank::ScorePair<'_>]) -> Result<Vec<f64>, passage_rank::ScorerError> {
        Ok(self.inner.score_batch(pairs)?.into_iter().map(&self.f).collect())
    }
}

pub mod rerank_cases {
    use std::collections::HashMap;
    use std::sync::Arc;

    use passage_rank::corpus::PassageStore;
    use passage_rank::scorer::ConstantScorer;
    use passage_rank::{rerank, Budget, Candidate, CandidateList, Ensemble, PairScorer, Passage, Query, RerankConfig};
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::{MappedScorer, TableScorer};

    /// Scorer outputs are multiples of 1/1024 so sums of a few of them are
    /// exact in f64 and mathematically equal fused scores compare equal.
    pub const GRID: f64 = 1024.0;

    pub struct Case {
        pub list: CandidateList,
        pub query: Query,
        pub store: PassageStore,
        pub tables: Vec<HashMap<String, f64>>,
        pub budget: Budget,
        pub batch_size: usize,
        pub parallel: usize,
    }

    pub fn generate(seed: u64) -> Case {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(1..=60);
        let mut ids: Vec<usize> = (0..n * 3).collect();
        ids.shuffle(&mut rng);
        let mut first: Vec<f64> = (0..n).map(|_| rng.random_range(0..40) as f64 * 0.5).collect();
        first.sort_by(|a, b| b.total_cmp(a));
        let entries: Vec<Candidate> = ids[..n]
            .iter()
            .zip(&first)
            .map(|(id, s)| Candidate::new(format!("p{id}"), *s))
            .collect();
        let store: PassageStore = entries
            .iter()
            .map(|c| Passage::new(c.passage_id.clone(), format!("text of {}", c.passage_id)))
            .collect();
        // Few distinct levels sometimes, to force fused ties.
        let levels = if rng.random_bool(0.3) { 4 } else { GRID as u32 + 1 };
        let tables = (0..rng.random_range(1..=3))
            .map(|_| {
                entries
                    .iter()
                    .map(|c| {
                        let k = rng.random_range(0..levels) * (GRID as u32 / (levels - 1).max(1)).max(1);
                        (format!("text of {}", c.passage_id), k.min(GRID as u32) as f64 / GRID)
                    })
                    .collect()
            })
            .collect();
        let budget = if rng.random_bool(0.15) {
            Budget::All
        } else {
            Budget::Top(rng.random_range(1..=n + 10))
        };
        Case {
            list: CandidateList::new("q", entries).unwrap(),
            query: Query::new("q", "pytanie"),
            store,
            tables,
            budget,
            batch_size: rng.random_range(1..=9),
            parallel: rng.random_range(1..=3),
        }
    }

    impl Case {
        pub fn scorers(&self) -> Vec<Arc<dyn PairScorer>> {
            self.tables
                .iter()
                .enumerate()
                .map(|(i, t)| {
                    Arc::new(TableScorer {
                        name: format!("t{i}"),
                        scores: t.clone(),
                    }) as Arc<dyn PairScorer>
                })
                .collect()
        }

        pub fn run(&self, members: Vec<Arc<dyn PairScorer>>) -> CandidateList {
            let mut cfg =
                RerankConfig::new(self.budget, Ensemble::new(members).unwrap()).with_batch_size(self.batch_size);
            cfg.parallel_batches = self.parallel;
            rerank(&self.list, &self.query, &cfg, &self.store).unwrap()
        }

        fn ids(list: &CandidateList) -> Vec<String> {
            list.ids().map(str::to_owned).collect()
        }
    }

    /// Output is a permutation of the input, and the head follows the
    /// fused scores computed by hand.
    pub fn permutation(case: &Case) -> Result<(), String> {
        let out = case.run(case.scorers());
        let mut a = Case::ids(&out);
        let mut b = Case::ids(&case.list);
        if a.len() != b.len() {
            return Err(format!("length {} -> {}", b.len(), a.len()));
        }
        a.sort();
        b.sort();
        if a != b {
            return Err("output is not a permutation of the input".into());
        }
        let head = case.budget.head_len(case.list.len());
        let fused: Vec<f64> = case.list.entries()[..head]
            .iter()
            .map(|c| {
                let text = format!("text of {}", c.passage_id);
                case.tables.iter().fold(0.0, |acc, t| acc + t[&text])
            })
            .collect();
        let mut order: Vec<usize> = (0..head).collect();
        order.sort_by(|&x, &y| fused[y].total_cmp(&fused[x]).then(x.cmp(&y)));
        let want: Vec<&str> = order
            .iter()
            .map(|&i| case.list.entries()[i].passage_id.as_str())
            .collect();
        let got: Vec<&str> = out.ids().take(head).collect();
        if got != want {
            return Err(format!("head order {got:?}, expected {want:?}"));
        }
        Ok(())
    }

    /// Entries past the budget are returned unchanged.
    pub fn tail_isolation(case: &Case) -> Result<(), String> {
        let out = case.run(case.scorers());
        let head = case.budget.head_len(case.list.len());
        if out.entries()[head..] != case.list.entries()[head..] {
            return Err(format!("tail after rank {head} changed"));
        }
        let scores: Vec<f64> = out.entries().iter().map(|c| c.score).collect();
        if scores.windows(2).any(|w| w[0] < w[1]) {
            return Err("output scores increase somewhere".into());
        }
        Ok(())
    }

    /// A constant member shifts every fused score equally: order is kept.
    /// A constant-only ensemble keeps the first-stage order.
    pub fn constant_scorer(case: &Case, seed: u64) -> Result<(), String> {
        let c = (seed % (GRID as u64 + 1)) as f64 / GRID;
        let constant = || Arc::new(ConstantScorer::new("const", c).unwrap()) as Arc<dyn PairScorer>;
        let base = Case::ids(&case.run(case.scorers()));
        let mut members = case.scorers();
        members.insert(seed as usize % (members.len() + 1), constant());
        if Case::ids(&case.run(members)) != base {
            return Err(format!("adding constant {c} changed the order"));
        }
        if Case::ids(&case.run(vec![constant()])) != Case::ids(&case.list) {
            return Err("constant-only ensemble changed the first-stage order".into());
        }
        Ok(())
    }

    /// A strictly increasing transform of a lone scorer keeps the order.
    pub fn monotone_transform(case: &Case) -> Result<(), String> {
        let inner = case.scorers().remove(0);
        let base = Case::ids(&case.run(vec![inner.clone()]));
        let mapped: Arc<dyn PairScorer> = Arc::new(MappedScorer {
            name: "mapped".into(),
            inner,
            f: |x: f64| (x * x + x) / 2.0,
        });
        if Case::ids(&case.run(vec![mapped])) != base {
            return Err("monotone transform changed the order".into());
        }
        Ok(())
    }
}

pub mod ranking_cases {
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Random ranking over a pool of ids, a random relevant set, and a
    /// swap that moves a relevant id above an irrelevant one.
    pub struct SwapCase {
        pub ranking: Vec<String>,
        pub swapped: Vec<String>,
        pub relevant: Vec<String>,
        pub k: usize,
    }

    pub fn generate(seed: u64) -> Option<SwapCase> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pool = rng.random_range(2..40);
        let mut ids: Vec<String> = (0..pool).map(|i| format!("d{i}")).collect();
        ids.shuffle(&mut rng);
        let len = rng.random_range(2..=pool);
        let relevant: Vec<String> = ids.iter().filter(|_| rng.random_bool(0.3)).cloned().collect();
        let ranking: Vec<String> = ids[..len].to_vec();
        let is_rel = |id: &String| relevant.contains(id);
        let irrel: Vec<usize> = (0..len).filter(|&i| !is_rel(&ranking[i])).collect();
        let i = *irrel.first()?;
        let later: Vec<usize> = (i + 1..len).filter(|&j| is_rel(&ranking[j])).collect();
        let j = *later.get(rng.random_range(0..later.len().max(1)))?;
        let mut swapped = ranking.clone();
        swapped.swap(i, j);
        Some(SwapCase {
            ranking,
            swapped,
            relevant,
            k: rng.random_range(1..=12),
        })
    }
}
