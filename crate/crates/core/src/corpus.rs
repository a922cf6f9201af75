//! Passage and query files.
//!
//! Two layouts are accepted, picked by file extension: `.jsonl`/`.json`
//! files hold one `{"id": ..., "text": ...}` object per line, anything else
//! is read as `id<TAB>text`. Query files may carry a domain label, either as
//! a `"domain"` field or as a third TSV column.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Passage {
    pub id: String,
    pub text: String,
}

impl Passage {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        Passage {
            id: id.into(),
            text: text.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Query {
    pub id: String,
    pub text: String,
    pub domain: Option<String>,
}

impl Query {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        Query {
            id: id.into(),
            text: text.into(),
            domain: None,
        }
    }

    pub fn with_domain(mut self, domain: impl Into<String>) -> Self {
        self.domain = Some(domain.into());
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layout {
    Tsv,
    JsonLines,
}

impl Layout {
    pub fn detect(path: &Path) -> Layout {
        match path.extension().and_then(|e| e.to_str()) {
            Some("jsonl" | "json" | "ndjson") => Layout::JsonLines,
            _ => Layout::Tsv,
        }
    }
}

#[derive(Deserialize)]
struct JsonRecord {
    #[serde(alias = "_id")]
    id: IdValue,
    text: String,
    #[serde(default)]
    domain: Option<String>,
}

// Ids are sometimes numeric in published corpora.
#[derive(Deserialize)]
#[serde(untagged)]
enum IdValue {
    Str(String),
    Int(i64),
}

impl IdValue {
    fn into_string(self) -> String {
        match self {
            IdValue::Str(s) => s,
            IdValue::Int(i) => i.to_string(),
        }
    }
}

struct Record {
    id: String,
    text: String,
    domain: Option<String>,
}

/// Streams records from a corpus or query file.
pub struct RecordReader {
    path: PathBuf,
    layout: Layout,
    lines: std::io::Lines<BufReader<File>>,
    line_no: usize,
}

impl RecordReader {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let file = File::open(&path).map_err(|e| Error::io(&path, e))?;
        Ok(RecordReader {
            layout: Layout::detect(&path),
            lines: BufReader::new(file).lines(),
            path,
            line_no: 0,
        })
    }

    fn next_record(&mut self) -> Option<Result<Record>> {
        loop {
            let line = match self.lines.next()? {
                Ok(l) => l,
                Err(e) => return Some(Err(Error::io(&self.path, e))),
            };
            self.line_no += 1;
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() {
                continue;
            }
            return Some(self.parse_line(line));
        }
    }

    fn parse_line(&self, line: &str) -> Result<Record> {
        let rec = match self.layout {
            Layout::JsonLines => {
                let r: JsonRecord =
                    serde_json::from_str(line).map_err(|e| Error::parse(&self.path, self.line_no, e.to_string()))?;
                Record {
                    id: r.id.into_string(),
                    text: r.text,
                    domain: r.domain,
                }
            }
            Layout::Tsv => {
                let mut cols = line.splitn(3, '\t');
                let id = cols.next().unwrap_or_default();
                let Some(text) = cols.next() else {
                    return Err(Error::parse(&self.path, self.line_no, "expected `id<TAB>text`"));
                };
                Record {
                    id: id.to_owned(),
                    text: text.to_owned(),
                    domain: cols.next().map(str::to_owned),
                }
            }
        };
        if rec.id.is_empty() {
            return Err(Error::parse(&self.path, self.line_no, "empty id"));
        }
        Ok(rec)
    }
}

/// Iterator over the passages of a corpus file.
pub struct PassageReader(RecordReader);

impl Iterator for PassageReader {
    type Item = Result<Passage>;

    fn next(&mut self) -> Option<Self::Item> {
        self.0
            .next_record()
            .map(|r| r.map(|r| Passage { id: r.id, text: r.text }))
    }
}

pub fn passages(path: impl AsRef<Path>) -> Result<PassageReader> {
    RecordReader::open(path).map(PassageReader)
}

pub fn read_passages(path: impl AsRef<Path>) -> Result<Vec<Passage>> {
    passages(path)?.collect()
}

/// Reads a query file. Duplicate query ids are rejected.
pub fn read_queries(path: impl AsRef<Path>) -> Result<Vec<Query>> {
    let mut reader = RecordReader::open(path)?;
    let mut seen = HashMap::new();
    let mut out = Vec::new();
    while let Some(rec) = reader.next_record() {
        let rec = rec?;
        if seen.insert(rec.id.clone(), ()).is_some() {
            return Err(Error::parse(
                &reader.path,
                reader.line_no,
                format!("duplicate query id `{}`", rec.id),
            ));
        }
        out.push(Query {
            id: rec.id,
            text: rec.text,
            domain: rec.domain.filter(|d| !d.is_empty()),
        });
    }
    Ok(out)
}

/// Lookup from passage id to text.
pub trait PassageLookup {
    fn passage_text(&self, id: &str) -> Option<&str>;
}

impl PassageLookup for HashMap<String, String> {
    fn passage_text(&self, id: &str) -> Option<&str> {
        self.get(id).map(String::as_str)
    }
}

/// In-memory passage store.
#[derive(Debug, Default, Clone)]
pub struct PassageStore {
    texts: HashMap<String, String>,
}

impl PassageStore {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        passages(path)?.collect()
    }

    pub fn len(&self) -> usize {
        self.texts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.texts.is_empty()
    }

    pub fn insert(&mut self, passage: Passage) {
        self.texts.insert(passage.id, passage.text);
    }
}

impl FromIterator<Passage> for PassageStore {
    fn from_iter<I: IntoIterator<Item = Passage>>(iter: I) -> Self {
        let mut store = PassageStore::default();
        for p in iter {
            store.insert(p);
        }
        store
    }
}

impl PassageLookup for PassageStore {
    fn passage_text(&self, id: &str) -> Option<&str> {
        self.texts.get(id).map(String::as_str)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write(name: &str, contents: &str) -> (tempfile::TempDir, PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(name);
        File::create(&path).unwrap().write_all(contents.as_bytes()).unwrap();
        (dir, path)
    }

    #[test]
    fn tsv_passages() {
        let (_d, p) = write("c.tsv", "p1\tAla ma kota\n\np2\tkot\tz tabem\n");
        let ps = read_passages(&p).unwrap();
        assert_eq!(ps.len(), 2);
        assert_eq!(ps[1].text, "kot");
    }

    #[test]
    fn jsonl_passages_with_extra_fields_and_numeric_ids() {
        let (_d, p) = write(
            "c.jsonl",
            "{\"id\":\"a\",\"title\":\"t\",\"text\":\"x y\"}\n{\"_id\":7,\"text\":\"z\"}\n",
        );
        let ps = read_passages(&p).unwrap();
        assert_eq!(ps[0], Passage::new("a", "x y"));
        assert_eq!(ps[1], Passage::new("7", "z"));
    }

    #[test]
    fn bad_lines_report_line_number() {
        let (_d, p) = write("c.tsv", "p1\tok\nmissing-tab\n");
        let err = read_passages(&p).unwrap_err();
        assert!(err.to_string().contains(":2:"), "{err}");

        let (_d, p) = write("c.jsonl", "{\"id\":\"a\",\"text\":\"x\"}\n{oops\n");
        let err = read_passages(&p).unwrap_err();
        assert!(err.to_string().contains(":2:"), "{err}");
    }

    #[test]
    fn queries_with_domains() {
        let (_d, p) = write("q.tsv", "q1\tczy kot\twiki-trivia\nq2\tile lat\n");
        let qs = read_queries(&p).unwrap();
        assert_eq!(qs[0].domain.as_deref(), Some("wiki-trivia"));
        assert_eq!(qs[1].domain, None);
    }

    #[test]
    fn duplicate_query_rejected() {
        let (_d, p) = write("q.tsv", "q1\ta\nq1\tb\n");
        assert!(read_queries(&p).is_err());
    }

    #[test]
    fn missing_file_names_path() {
        let err = read_passages("/no/such/corpus.tsv").unwrap_err();
        assert!(err.to_string().contains("/no/such/corpus.tsv"));
    }
}
