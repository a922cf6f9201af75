//! Pair scorers: the remote JSON-over-HTTP client plus two local kinds used
//! for testing and offline runs.
//!
//! Wire protocol (one service per ensemble member):
//!
//! ```text
//! POST /score   {"pairs":[{"query":"...","passage":"..."}, ...]}
//!            -> {"scores":[0.93, 0.02, ...]}
//! GET  /health  -> {"status":"ok","model":"<name>"}
//! ```
//!
//! Scores are probabilities in `[0, 1]`, aligned index-for-index with the
//! request pairs.

use std::borrow::Cow;
use std::collections::HashSet;
use std::fmt;
use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::text::Analyzer;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScorePair<'a> {
    #[serde(borrow)]
    pub query: Cow<'a, str>,
    #[serde(borrow)]
    pub passage: Cow<'a, str>,
}

impl<'a> ScorePair<'a> {
    pub fn new(query: &'a str, passage: &'a str) -> Self {
        ScorePair {
            query: Cow::Borrowed(query),
            passage: Cow::Borrowed(passage),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreRequest<'a> {
    #[serde(borrow)]
    pub pairs: Vec<ScorePair<'a>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreResponse {
    pub scores: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HealthResponse {
    pub status: String,
    pub model: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ScorerErrorKind {
    Transport(String),
    Status { status: u16, body: String },
    Malformed(String),
    LengthMismatch { expected: usize, got: usize },
    OutOfRange { index: usize, value: f64 },
    BatchSize { got: usize, max: usize },
    RetriesExhausted { attempts: u32, last: String },
    Config(String),
}

impl fmt::Display for ScorerErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScorerErrorKind::Transport(e) => write!(f, "transport error: {e}"),
            ScorerErrorKind::Status { status, body } => write!(f, "http status {status}: {body}"),
            ScorerErrorKind::Malformed(e) => write!(f, "malformed response: {e}"),
            ScorerErrorKind::LengthMismatch { expected, got } => {
                write!(f, "length mismatch: sent {expected} pairs, got {got} scores")
            }
            ScorerErrorKind::OutOfRange { index, value } => {
                write!(f, "score {value} at position {index} is outside [0, 1]")
            }
            ScorerErrorKind::BatchSize { got, max } => {
                write!(f, "batch of {got} pairs outside the allowed 1..={max}")
            }
            ScorerErrorKind::RetriesExhausted { attempts, last } => {
                write!(f, "gave up after {attempts} attempts, last error: {last}")
            }
            ScorerErrorKind::Config(e) => write!(f, "configuration: {e}"),
        }
    }
}

/// A scorer failure, tagged with the scorer name and, once known, the
/// index of the batch that failed.
#[derive(Debug, Clone, PartialEq)]
pub struct ScorerError {
    pub scorer: String,
    pub batch: Option<usize>,
    pub kind: ScorerErrorKind,
}

impl ScorerError {
    pub fn new(scorer: impl Into<String>, kind: ScorerErrorKind) -> Self {
        ScorerError {
            scorer: scorer.into(),
            batch: None,
            kind,
        }
    }

    pub fn in_batch(mut self, batch: usize) -> Self {
        self.batch = Some(batch);
        self
    }
}

impl fmt::Display for ScorerError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "scorer `{}`", self.scorer)?;
        if let Some(b) = self.batch {
            write!(f, " (batch {b})")?;
        }
        write!(f, ": {}", self.kind)
    }
}

impl std::error::Error for ScorerError {}

/// Scores (query, passage) pairs with probabilities in `[0, 1]`.
pub trait PairScorer: Send + Sync {
    fn name(&self) -> &str;

    /// One score per pair, in request order.
    fn score_batch(&self, pairs: &[ScorePair<'_>]) -> Result<Vec<f64>, ScorerError>;
}

/// Checks a score vector against the request it answers.
pub fn validate_scores(name: &str, expected: usize, scores: &[f64]) -> Result<(), ScorerError> {
    if scores.len() != expected {
        return Err(ScorerError::new(
            name,
            ScorerErrorKind::LengthMismatch {
                expected,
                got: scores.len(),
            },
        ));
    }
    if let Some((index, &value)) = scores.iter().enumerate().find(|(_, s)| !(0.0..=1.0).contains(*s)) {
        return Err(ScorerError::new(name, ScorerErrorKind::OutOfRange { index, value }));
    }
    Ok(())
}

/// `|set(q) ∩ set(p)| / max(1, |set(q)|)`.
pub fn lexical_overlap<Q: AsRef<str>, P: AsRef<str>>(query_tokens: &[Q], passage_tokens: &[P]) -> f64 {
    let q: HashSet<&str> = query_tokens.iter().map(AsRef::as_ref).collect();
    if q.is_empty() {
        return 0.0;
    }
    let p: HashSet<&str> = passage_tokens.iter().map(AsRef::as_ref).collect();
    q.intersection(&p).count() as f64 / q.len() as f64
}

/// Fraction of distinct query tokens that also occur in the passage.
pub struct LexicalOverlapScorer {
    name: String,
    analyzer: Arc<Analyzer>,
}

impl LexicalOverlapScorer {
    pub fn new(name: impl Into<String>, analyzer: Arc<Analyzer>) -> Self {
        LexicalOverlapScorer {
            name: name.into(),
            analyzer,
        }
    }
}

impl PairScorer for LexicalOverlapScorer {
    fn name(&self) -> &str {
        &self.name
    }

    fn score_batch(&self, pairs: &[ScorePair<'_>]) -> Result<Vec<f64>, ScorerError> {
        // consecutive pairs usually share the query
        let mut cached: Option<(&str, Vec<String>)> = None;
        let mut out = Vec::with_capacity(pairs.len());
        for pair in pairs {
            let query = pair.query.as_ref();
            if cached.as_ref().is_none_or(|(q, _)| *q != query) {
                cached = Some((query, self.analyzer.analyze(query).into_vec()));
            }
            let q_tokens = cached.as_ref().map(|(_, t)| t.as_slice()).unwrap_or_default();
            let p_tokens = self.analyzer.analyze(&pair.passage);
            out.push(lexical_overlap(q_tokens, &p_tokens));
        }
        Ok(out)
    }
}

/// Returns the same score for every pair.
pub struct ConstantScorer {
    name: String,
    value: f64,
}

impl ConstantScorer {
    pub fn new(name: impl Into<String>, value: f64) -> Result<Self, ScorerError> {
        let name = name.into();
        if !(0.0..=1.0).contains(&value) {
            return Err(ScorerError::new(
                name,
                ScorerErrorKind::Config(format!("constant {value} outside [0, 1]")),
            ));
        }
        Ok(ConstantScorer { name, value })
    }
}

impl PairScorer for ConstantScorer {
    fn name(&self) -> &str {
        &self.name
    }

    fn score_batch(&self, pairs: &[ScorePair<'_>]) -> Result<Vec<f64>, ScorerError> {
        Ok(vec![self.value; pairs.len()])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RemoteConfig {
    /// Base URL, e.g. `http://127.0.0.1:8000`.
    pub endpoint: String,
    pub timeout: Duration,
    /// Extra attempts after the first on transport failures and 5xx.
    pub retries: u32,
    pub retry_backoff: Duration,
    pub max_batch: usize,
    pub max_in_flight: usize,
}

impl RemoteConfig {
    pub fn new(endpoint: impl Into<String>) -> Self {
        RemoteConfig {
            endpoint: endpoint.into(),
            timeout: Duration::from_secs(120),
            retries: 2,
            retry_backoff: Duration::from_millis(250),
            max_batch: 256,
            max_in_flight: 4,
        }
    }
}

/// Client for one remote scoring service. Shareable across threads; at
/// most `max_in_flight` requests are outstanding at once.
pub struct HttpScorer {
    name: String,
    base: String,
    client: reqwest::blocking::Client,
    cfg: RemoteConfig,
    permits: Semaphore,
}

enum Attempt {
    Retry(String),
    Fatal(ScorerErrorKind),
}

impl HttpScorer {
    pub fn new(name: impl Into<String>, cfg: RemoteConfig) -> Result<Self, ScorerError> {
        let name = name.into();
        let config_err = |m: String| ScorerError::new(name.clone(), ScorerErrorKind::Config(m));
        if cfg.max_batch == 0 || cfg.max_in_flight == 0 {
            return Err(config_err("max_batch and max_in_flight must be >= 1".into()));
        }
        let base = cfg.endpoint.trim_end_matches('/').to_owned();
        if !(base.starts_with("http://") || base.starts_with("https://")) {
            return Err(config_err(format!("endpoint `{}` is not an http(s) URL", cfg.endpoint)));
        }
        let client = reqwest::blocking::Client::builder()
            .timeout(cfg.timeout)
            .build()
            .map_err(|e| config_err(e.to_string()))?;
        Ok(HttpScorer {
            permits: Semaphore::new(cfg.max_in_flight),
            name,
            base,
            client,
            cfg,
        })
    }

    pub fn health(&self) -> Result<HealthResponse, ScorerError> {
        let err = |k| ScorerError::new(self.name.clone(), k);
        let resp = self
            .client
            .get(format!("{}/health", self.base))
            .send()
            .map_err(|e| err(ScorerErrorKind::Transport(e.to_string())))?;
        let status = resp.status();
        let body = resp
            .text()
            .map_err(|e| err(ScorerErrorKind::Transport(e.to_string())))?;
        if !status.is_success() {
            return Err(err(ScorerErrorKind::Status {
                status: status.as_u16(),
                body,
            }));
        }
        serde_json::from_str(&body).map_err(|e| err(ScorerErrorKind::Malformed(e.to_string())))
    }

    fn attempt(&self, body: &[u8], expected: usize) -> Result<Vec<f64>, Attempt> {
        let resp = self
            .client
            .post(format!("{}/score", self.base))
            .header(reqwest::header::CONTENT_TYPE, "application/json")
            .body(body.to_vec())
            .send()
            .map_err(|e| Attempt::Retry(e.to_string()))?;
        let status = resp.status();
        let text = resp.text().map_err(|e| Attempt::Retry(e.to_string()))?;
        if status.is_server_error() {
            return Err(Attempt::Retry(format!("http status {}: {}", status.as_u16(), text)));
        }
        if !status.is_success() {
            return Err(Attempt::Fatal(ScorerErrorKind::Status {
                status: status.as_u16(),
                body: text,
            }));
        }
        let parsed: ScoreResponse =
            serde_json::from_str(&text).map_err(|e| Attempt::Fatal(ScorerErrorKind::Malformed(e.to_string())))?;
        validate_scores(&self.name, expected, &parsed.scores).map_err(|e| Attempt::Fatal(e.kind))?;
        Ok(parsed.scores)
    }
}

impl PairScorer for HttpScorer {
    fn name(&self) -> &str {
        &self.name
    }

    fn score_batch(&self, pairs: &[ScorePair<'_>]) -> Result<Vec<f64>, ScorerError> {
        if pairs.is_empty() || pairs.len() > self.cfg.max_batch {
            return Err(ScorerError::new(
                self.name.clone(),
                ScorerErrorKind::BatchSize {
                    got: pairs.len(),
                    max: self.cfg.max_batch,
                },
            ));
        }
        let body = serde_json::to_vec(&ScoreRequest { pairs: pairs.to_vec() }).expect("request serializes");

        let _permit = self.permits.acquire();
        let attempts = self.cfg.retries + 1;
        let mut last = String::new();
        for attempt in 0..attempts {
            if attempt > 0 && !self.cfg.retry_backoff.is_zero() {
                std::thread::sleep(self.cfg.retry_backoff * (1 << (attempt - 1).min(6)));
            }
            match self.attempt(&body, pairs.len()) {
                Ok(scores) => return Ok(scores),
                Err(Attempt::Fatal(kind)) => return Err(ScorerError::new(self.name.clone(), kind)),
                Err(Attempt::Retry(msg)) => {
                    tracing::warn!(scorer = %self.name, attempt = attempt + 1, error = %msg, "score request failed");
                    last = msg;
                }
            }
        }
        Err(ScorerError::new(
            self.name.clone(),
            ScorerErrorKind::RetriesExhausted { attempts, last },
        ))
    }
}

struct Semaphore {
    free: Mutex<usize>,
    cond: Condvar,
}

struct Permit<'a>(&'a Semaphore);

impl Semaphore {
    fn new(n: usize) -> Self {
        Semaphore {
            free: Mutex::new(n),
            cond: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut free = self.free.lock().unwrap_or_else(|e| e.into_inner());
        while *free == 0 {
            free = self.cond.wait(free).unwrap_or_else(|e| e.into_inner());
        }
        *free -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap_or_else(|e| e.into_inner()) += 1;
        self.0.cond.notify_one();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::Stemmer;

    #[test]
    fn overlap_values() {
        assert_eq!(lexical_overlap(&["a", "b"], &["b", "a"]), 1.0);
        assert_eq!(lexical_overlap(&["a", "b"], &["c"]), 0.0);
        assert!((lexical_overlap(&["a", "b", "c"], &["b", "c", "d"]) - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(lexical_overlap::<&str, &str>(&[], &["a"]), 0.0);
        // duplicates count once
        assert_eq!(lexical_overlap(&["a", "a", "b"], &["a"]), 0.5);
    }

    #[test]
    fn lexical_scorer_uses_analyzer() {
        let a = Arc::new(Analyzer::new(true, Stemmer::Identity, ["i"]));
        let s = LexicalOverlapScorer::new("lex", a);
        let got = s
            .score_batch(&[
                ScorePair::new("Kot i pies", "PIES śpi"),
                ScorePair::new("Kot i pies", "kot, pies"),
                ScorePair::new("ryba", "kot"),
            ])
            .unwrap();
        assert_eq!(got, vec![0.5, 1.0, 0.0]);
    }

    #[test]
    fn constant_scorer_range() {
        assert!(ConstantScorer::new("c", 1.5).is_err());
        let c = ConstantScorer::new("c", 0.5).unwrap();
        assert_eq!(c.score_batch(&[ScorePair::new("a", "b")]).unwrap(), vec![0.5]);
    }

    #[test]
    fn validate_scores_errors() {
        let e = validate_scores("m", 2, &[0.1]).unwrap_err();
        assert!(matches!(
            e.kind,
            ScorerErrorKind::LengthMismatch { expected: 2, got: 1 }
        ));
        let e = validate_scores("m", 2, &[0.1, 1.3]).unwrap_err();
        assert!(matches!(e.kind, ScorerErrorKind::OutOfRange { index: 1, .. }));
        assert!(validate_scores("m", 0, &[]).is_ok());
    }

    #[test]
    fn request_wire_format() {
        let req = ScoreRequest {
            pairs: vec![ScorePair::new("q", "p \"x\"")],
        };
        assert_eq!(
            serde_json::to_string(&req).unwrap(),
            r#"{"pairs":[{"query":"q","passage":"p \"x\""}]}"#
        );
        let back: ScoreRequest<'_> = serde_json::from_str(r#"{"pairs":[{"query":"q","passage":"p"}]}"#).unwrap();
        assert_eq!(back.pairs[0], ScorePair::new("q", "p"));
    }

    #[test]
    fn error_display_includes_name_and_batch() {
        let e = ScorerError::new("mt5", ScorerErrorKind::Malformed("x".into())).in_batch(3);
        assert_eq!(e.to_string(), "scorer `mt5` (batch 3): malformed response: x");
    }

    #[test]
    fn bad_endpoint_rejected() {
        assert!(HttpScorer::new("m", RemoteConfig::new("localhost:9")).is_err());
    }

    #[test]
    fn semaphore_bounds_concurrency() {
        use std::sync::atomic::{AtomicUsize, Ordering};
        let sem = Semaphore::new(2);
        let live = AtomicUsize::new(0);
        let peak = AtomicUsize::new(0);
        std::thread::scope(|s| {
            for _ in 0..8 {
                s.spawn(|| {
                    let _p = sem.acquire();
                    let now = live.fetch_add(1, Ordering::SeqCst) + 1;
                    peak.fetch_max(now, Ordering::SeqCst);
                    std::thread::sleep(Duration::from_millis(5));
                    live.fetch_sub(1, Ordering::SeqCst);
                });
            }
        });
        assert!(peak.load(Ordering::SeqCst) <= 2);
    }
}
