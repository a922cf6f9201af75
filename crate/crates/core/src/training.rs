//! Training pairs for cross-encoder fine-tuning.
//!
//! For each query, every relevant passage yields one positive pair followed
//! by `n_neg` negatives. Negatives are drawn uniformly without replacement
//! from the query's top-`pool` BM25 candidates with the relevant passages
//! removed; each positive gets its own draw. When fewer than `n_neg`
//! passages are eligible, all of them are used.
//!
//! Sampling is seeded per query (the stream index is the query's position),
//! so output does not depend on how queries are scheduled.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::bm25::Bm25Index;
use crate::corpus::PassageLookup;
use crate::error::{Error, Result};
use crate::eval::{write_with, Qrels};
use crate::text::Analyzer;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MiningOptions {
    pub negatives_per_positive: usize,
    pub pool: usize,
    pub seed: u64,
}

impl Default for MiningOptions {
    fn default() -> Self {
        MiningOptions {
            negatives_per_positive: 100,
            pool: 2000,
            seed: 0,
        }
    }
}

impl MiningOptions {
    pub fn validate(&self) -> Result<()> {
        if self.negatives_per_positive == 0 {
            return Err(Error::Config("negatives per positive must be >= 1".into()));
        }
        if self.pool < self.negatives_per_positive {
            return Err(Error::Config(format!(
                "pool ({}) must be at least the number of negatives ({})",
                self.pool, self.negatives_per_positive
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PairSample {
    pub query_id: String,
    pub passage_id: String,
    pub label: u8,
}

/// Samples for one query plus a warning when BM25 found nothing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueryPairs {
    pub samples: Vec<PairSample>,
    pub warning: Option<String>,
}

/// Mines pairs for the query at `position` in qrels order.
pub fn mine_query(
    position: usize,
    query_id: &str,
    query_text: &str,
    qrels: &Qrels,
    index: &Bm25Index,
    analyzer: &Analyzer,
    opts: &MiningOptions,
) -> QueryPairs {
    let relevant = qrels.relevant(query_id).unwrap_or_default();
    let relevant_set = qrels.relevant_set(query_id);
    let tokens = analyzer.analyze(query_text);
    let eligible: Vec<&str> = index
        .top_ordinals(&tokens, opts.pool)
        .into_iter()
        .map(|h| index.passage_id(h.ordinal))
        .filter(|id| !relevant_set.contains(id))
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    rng.set_stream(position as u64);

    let take = opts.negatives_per_positive.min(eligible.len());
    let mut samples = Vec::with_capacity(relevant.len() * (1 + take));
    for pos in relevant {
        samples.push(PairSample {
            query_id: query_id.to_owned(),
            passage_id: pos.clone(),
            label: 1,
        });
        for i in index::sample(&mut rng, eligible.len(), take) {
            samples.push(PairSample {
                query_id: query_id.to_owned(),
                passage_id: eligible[i].to_owned(),
                label: 0,
            });
        }
    }
    let warning = eligible
        .is_empty()
        .then(|| format!("query `{query_id}`: no eligible BM25 candidates, emitting positives only"));
    if let Some(w) = &warning {
        tracing::warn!("{w}");
    }
    QueryPairs { samples, warning }
}

/// Mines pairs for every qrels query, in qrels order.
pub fn mine_pairs(
    qrels: &Qrels,
    query_texts: &HashMap<String, String>,
    index: &Bm25Index,
    analyzer: &Analyzer,
    opts: &MiningOptions,
) -> Result<Vec<QueryPairs>> {
    opts.validate()?;
    qrels
        .query_ids()
        .enumerate()
        .map(|(pos, q)| {
            let text = query_texts.get(q).ok_or_else(|| Error::UnknownQuery(q.to_owned()))?;
            Ok(mine_query(pos, q, text, qrels, index, analyzer, opts))
        })
        .collect()
}

/// `query_id<TAB>passage_id<TAB>label` lines.
pub fn write_pairs_tsv<'a>(samples: impl IntoIterator<Item = &'a PairSample>, path: impl AsRef<Path>) -> Result<()> {
    write_with(path.as_ref(), |w| {
        for s in samples {
            writeln!(w, "{}\t{}\t{}", s.query_id, s.passage_id, s.label)?;
        }
        Ok(())
    })
}

#[derive(Serialize)]
struct Hydrated<'a> {
    query_id: &'a str,
    passage_id: &'a str,
    query: &'a str,
    passage: &'a str,
    label: u8,
}

/// JSON lines with full texts, for trainers that do not read the index.
pub fn write_pairs_jsonl<'a, L: PassageLookup + ?Sized>(
    samples: impl IntoIterator<Item = &'a PairSample>,
    query_texts: &HashMap<String, String>,
    passages: &L,
    path: impl AsRef<Path>,
) -> Result<()> {
    let mut rows = Vec::new();
    for s in samples {
        let query = query_texts
            .get(&s.query_id)
            .ok_or_else(|| Error::UnknownQuery(s.query_id.clone()))?;
        let passage = passages
            .passage_text(&s.passage_id)
            .ok_or_else(|| Error::UnknownPassage(s.passage_id.clone()))?;
        rows.push(
            serde_json::to_string(&Hydrated {
                query_id: &s.query_id,
                passage_id: &s.passage_id,
                query,
                passage,
                label: s.label,
            })
            .expect("row serializes"),
        );
    }
    write_with(path.as_ref(), |w| {
        for row in rows {
            writeln!(w, "{row}")?;
        }
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bm25::Bm25Params;
    use crate::corpus::Passage;
    use crate::text::Stemmer;
    use std::collections::HashSet;

    fn analyzer() -> Analyzer {
        Analyzer::new(true, Stemmer::Identity, Vec::<&str>::new())
    }

    // `n_matching` passages mention "kot"; p0 is relevant.
    fn setup(n_matching: usize) -> (Bm25Index, Qrels, HashMap<String, String>) {
        let mut corpus: Vec<Passage> = (0..n_matching)
            .map(|i| Passage::new(format!("p{i}"), format!("kot {}", "x ".repeat(i % 5))))
            .collect();
        corpus.extend((0..20).map(|i| Passage::new(format!("f{i}"), "pies")));
        let idx = Bm25Index::build(corpus.into_iter().map(Ok), &analyzer(), Bm25Params::default()).unwrap();
        let mut qrels = Qrels::new();
        qrels.insert("q", "p0");
        let texts = HashMap::from([("q".to_string(), "kot".to_string())]);
        (idx, qrels, texts)
    }

    #[test]
    fn one_positive_hundred_negatives() {
        let (idx, qrels, texts) = setup(151);
        let out = mine_pairs(&qrels, &texts, &idx, &analyzer(), &MiningOptions::default()).unwrap();
        let s = &out[0].samples;
        assert_eq!(s.len(), 101);
        assert_eq!(s[0].label, 1);
        assert!(s[1..].iter().all(|p| p.label == 0 && p.passage_id != "p0"));
        let distinct: HashSet<_> = s[1..].iter().map(|p| &p.passage_id).collect();
        assert_eq!(distinct.len(), 100);
    }

    #[test]
    fn small_pool_is_exhausted() {
        let (idx, qrels, texts) = setup(41);
        let out = mine_pairs(&qrels, &texts, &idx, &analyzer(), &MiningOptions::default()).unwrap();
        assert_eq!(out[0].samples.iter().filter(|p| p.label == 0).count(), 40);
    }

    #[test]
    fn seeded_runs_repeat_and_seeds_differ() {
        let (idx, qrels, texts) = setup(300);
        let run = |seed| {
            let o = MiningOptions {
                seed,
                ..Default::default()
            };
            mine_pairs(&qrels, &texts, &idx, &analyzer(), &o).unwrap()
        };
        assert_eq!(run(7), run(7));
        assert_ne!(run(7), run(8));
    }

    #[test]
    fn no_candidates_warns_positives_only() {
        let (idx, mut qrels, mut texts) = setup(5);
        qrels.insert("empty", "p3");
        texts.insert("empty".into(), "żyrafa".into());
        let out = mine_pairs(&qrels, &texts, &idx, &analyzer(), &MiningOptions::default()).unwrap();
        assert_eq!(out[1].samples.len(), 1);
        assert!(out[1].warning.is_some());
    }

    #[test]
    fn invalid_options_and_missing_text() {
        let (idx, qrels, texts) = setup(5);
        let bad = MiningOptions {
            negatives_per_positive: 10,
            pool: 5,
            seed: 0,
        };
        assert!(mine_pairs(&qrels, &texts, &idx, &analyzer(), &bad).is_err());
        assert!(matches!(
            mine_pairs(&qrels, &HashMap::new(), &idx, &analyzer(), &MiningOptions::default()),
            Err(Error::UnknownQuery(_))
        ));
    }
}
