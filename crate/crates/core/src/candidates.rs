use std::collections::HashSet;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub passage_id: String,
    pub score: f64,
}

impl Candidate {
    pub fn new(passage_id: impl Into<String>, score: f64) -> Self {
        Candidate {
            passage_id: passage_id.into(),
            score,
        }
    }
}

/// Ranked candidates for one query. Scores are finite and non-increasing;
/// passage ids are unique.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateList {
    query_id: String,
    entries: Vec<Candidate>,
}

impl CandidateList {
    pub fn new(query_id: impl Into<String>, entries: Vec<Candidate>) -> Result<Self> {
        let query_id = query_id.into();
        check_entries(&entries).map_err(|msg| Error::Invalid(format!("query `{query_id}`: {msg}")))?;
        Ok(CandidateList { query_id, entries })
    }

    pub fn empty(query_id: impl Into<String>) -> Self {
        CandidateList {
            query_id: query_id.into(),
            entries: Vec::new(),
        }
    }

    pub(crate) fn from_sorted(query_id: String, entries: Vec<Candidate>) -> Self {
        debug_assert!(check_entries(&entries).is_ok());
        CandidateList { query_id, entries }
    }

    pub fn query_id(&self) -> &str {
        &self.query_id
    }

    pub fn entries(&self) -> &[Candidate] {
        &self.entries
    }

    pub fn into_entries(self) -> Vec<Candidate> {
        self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|c| c.passage_id.as_str())
    }

    /// Keeps only the first `k` entries.
    pub fn truncate(&mut self, k: usize) {
        self.entries.truncate(k);
    }
}

fn check_entries(entries: &[Candidate]) -> std::result::Result<(), String> {
    let mut seen = HashSet::with_capacity(entries.len());
    for (i, c) in entries.iter().enumerate() {
        if c.passage_id.is_empty() {
            return Err(format!("empty passage id at rank {}", i + 1));
        }
        if !c.score.is_finite() {
            return Err(format!("non-finite score at rank {}", i + 1));
        }
        if i > 0 && c.score > entries[i - 1].score {
            return Err(format!("score increases at rank {}", i + 1));
        }
        if !seen.insert(c.passage_id.as_str()) {
            return Err(format!("duplicate passage id `{}`", c.passage_id));
        }
    }
    Ok(())
}
