//! Two-stage passage retrieval.
//!
//! * [`text`] turns raw text into tokens (tokenize, lowercase, stem,
//!   drop stopwords).
//! * [`bm25`] indexes passages and returns the top-k candidates for a
//!   query under OKAPI BM25.
//! * [`rerank`] rescores the head of a candidate list with an ensemble of
//!   pair scorers ([`scorer`]) and reorders it by summed probabilities.
//! * [`eval`] computes NDCG@k per query and per domain and reads/writes
//!   qrels and run files.
//! * [`training`] mines hard negatives from BM25 results for fine-tuning.
//! * [`pipeline`] runs the stages over whole query sets.
//!
//! The `book/` directory at the repository root walks through each stage;
//! its code listings are compiled and run as doctests of this crate.

pub mod bm25;
pub mod candidates;
pub mod config;
pub mod corpus;
mod error;
pub mod eval;
pub mod pipeline;
pub mod rerank;
pub mod scorer;
pub mod text;
pub mod training;

pub use bm25::{load_index, save_index, Bm25Index, Bm25Params, IndexBuilder};
pub use candidates::{Candidate, CandidateList};
pub use config::PipelineConfig;
pub use corpus::{Passage, PassageStore, Query};
pub use error::{Error, Result};
pub use eval::{evaluate, ndcg_at_k, EvalReport, Qrels, RunFile};
pub use rerank::{fuse, rerank, Budget, Ensemble, RerankConfig};
pub use scorer::{PairScorer, ScorePair, ScorerError};
pub use text::{Analyzer, AnalyzerConfig, Stemmer, TokenSeq};
pub use training::{mine_pairs, MiningOptions, PairSample};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/intro.md")]
    struct Intro;
    #[doc = include_str!("../../../book/src/analysis.md")]
    struct Analysis;
    #[doc = include_str!("../../../book/src/bm25.md")]
    struct Bm25;
    #[doc = include_str!("../../../book/src/reranking.md")]
    struct Reranking;
    #[doc = include_str!("../../../book/src/evaluation.md")]
    struct Evaluation;
    #[doc = include_str!("../../../book/src/mining.md")]
    struct Mining;
    #[doc = include_str!("../../../book/src/cli.md")]
    struct Cli;
}
