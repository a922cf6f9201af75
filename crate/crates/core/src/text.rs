//! Text analysis: tokenize, lowercase, stem, drop stopwords.
//!
//! The chain is fixed in that order. Tokens are maximal runs of Unicode
//! alphanumeric characters; everything else (whitespace, punctuation,
//! symbols) separates tokens and is discarded.
//!
//! ```
//! use passage_rank::text::{Analyzer, Stemmer};
//!
//! let analyzer = Analyzer::new(true, Stemmer::Identity, ["i"]);
//! assert_eq!(analyzer.analyze("Kot i KOT").as_slice(), ["kot", "kot"]);
//! ```

use std::borrow::Cow;
use std::collections::{HashMap, HashSet};
use std::fs;
use std::ops::Deref;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Polish stopword list bundled with the crate (one word per line).
pub const POLISH_STOPWORDS: &str = include_str!("../data/stopwords-pl.txt");

/// Analyzer output. Tokens are non-empty and contain no whitespace.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct TokenSeq(Vec<String>);

impl TokenSeq {
    pub fn as_slice(&self) -> &[String] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<String> {
        self.0
    }

    /// Space-joined form. Re-analyzing it with an identity stemmer gives
    /// back the same sequence.
    pub fn join(&self) -> String {
        self.0.join(" ")
    }
}

impl Deref for TokenSeq {
    type Target = [String];

    fn deref(&self) -> &[String] {
        &self.0
    }
}

impl<S: Into<String>> FromIterator<S> for TokenSeq {
    fn from_iter<I: IntoIterator<Item = S>>(iter: I) -> Self {
        TokenSeq(iter.into_iter().map(Into::into).collect())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TokenRule {
    #[default]
    UnicodeWords,
}

/// One suffix-stripping rule: `suffix` is replaced by `replacement`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SuffixRule {
    pub suffix: String,
    #[serde(default)]
    pub replacement: String,
}

impl SuffixRule {
    pub fn new(suffix: impl Into<String>, replacement: impl Into<String>) -> Self {
        SuffixRule {
            suffix: suffix.into(),
            replacement: replacement.into(),
        }
    }
}

/// Stemmer selection as it appears in configuration files.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum StemmerConfig {
    #[default]
    Identity,
    SuffixRules {
        rules: Vec<SuffixRule>,
    },
    /// TSV file of `surface<TAB>stem` lines.
    DictionaryTable {
        path: PathBuf,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalyzerConfig {
    #[serde(default = "default_true")]
    pub lowercase: bool,
    #[serde(default)]
    pub stemmer: StemmerConfig,
    #[serde(default)]
    pub stopword_path: Option<PathBuf>,
    #[serde(default)]
    pub token_rule: TokenRule,
}

fn default_true() -> bool {
    true
}

impl Default for AnalyzerConfig {
    fn default() -> Self {
        AnalyzerConfig {
            lowercase: true,
            stemmer: StemmerConfig::Identity,
            stopword_path: None,
            token_rule: TokenRule::UnicodeWords,
        }
    }
}

/// A loaded stemmer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Stemmer {
    Identity,
    /// Rules sorted longest suffix first; at most one rule fires per token.
    SuffixRules(Vec<SuffixRule>),
    Dictionary(HashMap<String, String>),
}

impl Stemmer {
    /// Builds a suffix stemmer. Rules are ordered by suffix length
    /// (longest first); rules of equal length keep their given order.
    pub fn suffix_rules(mut rules: Vec<SuffixRule>) -> Result<Self> {
        for rule in &rules {
            if rule.suffix.is_empty() {
                return Err(Error::Config("suffix rule with empty suffix".into()));
            }
            if !is_token_text(&rule.replacement) && !rule.replacement.is_empty() {
                return Err(Error::Config(format!(
                    "suffix rule `{}` has a replacement containing non-word characters",
                    rule.suffix
                )));
            }
        }
        rules.sort_by_key(|r| std::cmp::Reverse(r.suffix.chars().count()));
        Ok(Stemmer::SuffixRules(rules))
    }

    pub fn dictionary<K, V>(entries: impl IntoIterator<Item = (K, V)>) -> Self
    where
        K: Into<String>,
        V: Into<String>,
    {
        Stemmer::Dictionary(entries.into_iter().map(|(k, v)| (k.into(), v.into())).collect())
    }

    pub fn stem<'a>(&'a self, token: &'a str) -> Cow<'a, str> {
        match self {
            Stemmer::Identity => Cow::Borrowed(token),
            Stemmer::Dictionary(table) => match table.get(token) {
                Some(stem) => Cow::Borrowed(stem.as_str()),
                None => Cow::Borrowed(token),
            },
            Stemmer::SuffixRules(rules) => {
                for rule in rules {
                    if let Some(base) = token.strip_suffix(rule.suffix.as_str()) {
                        // never strip a token down to nothing
                        if base.is_empty() {
                            continue;
                        }
                        let mut out = String::with_capacity(base.len() + rule.replacement.len());
                        out.push_str(base);
                        out.push_str(&rule.replacement);
                        return Cow::Owned(out);
                    }
                }
                Cow::Borrowed(token)
            }
        }
    }
}

/// Immutable analyzer; safe to share across threads.
#[derive(Debug, Clone)]
pub struct Analyzer {
    lowercase: bool,
    stemmer: Stemmer,
    stopwords: HashSet<String>,
}

impl Analyzer {
    /// Builds an analyzer from already-loaded parts. Stopwords are
    /// lowercased.
    pub fn new<S: AsRef<str>>(lowercase: bool, stemmer: Stemmer, stopwords: impl IntoIterator<Item = S>) -> Self {
        Analyzer {
            lowercase,
            stemmer,
            stopwords: stopwords
                .into_iter()
                .map(|s| s.as_ref().trim().to_lowercase())
                .filter(|s| !s.is_empty())
                .collect(),
        }
    }

    /// Loads every file the configuration references. All I/O errors
    /// surface here; `analyze` itself cannot fail.
    pub fn from_config(cfg: &AnalyzerConfig) -> Result<Self> {
        let stemmer = match &cfg.stemmer {
            StemmerConfig::Identity => Stemmer::Identity,
            StemmerConfig::SuffixRules { rules } => Stemmer::suffix_rules(rules.clone())?,
            StemmerConfig::DictionaryTable { path } => Stemmer::Dictionary(load_stem_table(path)?),
        };
        let stopwords = match &cfg.stopword_path {
            Some(path) => load_stopwords(path)?,
            None => HashSet::new(),
        };
        Ok(Analyzer {
            lowercase: cfg.lowercase,
            stemmer,
            stopwords,
        })
    }

    pub fn stopwords(&self) -> &HashSet<String> {
        &self.stopwords
    }

    pub fn stemmer(&self) -> &Stemmer {
        &self.stemmer
    }

    pub fn analyze(&self, text: &str) -> TokenSeq {
        let mut out = Vec::new();
        for raw in words(text) {
            let token: Cow<'_, str> = if self.lowercase {
                Cow::Owned(normalize_case(raw))
            } else {
                Cow::Borrowed(raw)
            };
            if token.is_empty() {
                continue;
            }
            let stemmed = self.stemmer.stem(&token);
            if stemmed.is_empty() || self.is_stopword(&stemmed) {
                continue;
            }
            out.push(stemmed.into_owned());
        }
        TokenSeq(out)
    }

    fn is_stopword(&self, token: &str) -> bool {
        if self.stopwords.is_empty() {
            return false;
        }
        if self.lowercase {
            self.stopwords.contains(token)
        } else {
            self.stopwords.contains(&normalize_case(token))
        }
    }
}

/// Maximal runs of alphanumeric characters.
pub fn words(text: &str) -> impl Iterator<Item = &str> {
    text.split(|c: char| !c.is_alphanumeric()).filter(|w| !w.is_empty())
}

// Lowercasing can emit combining marks (e.g. U+0130); those are dropped so
// every token stays a single alphanumeric run.
fn normalize_case(word: &str) -> String {
    word.chars()
        .flat_map(char::to_lowercase)
        .filter(|c| c.is_alphanumeric())
        .collect()
}

fn is_token_text(s: &str) -> bool {
    !s.is_empty() && s.chars().all(char::is_alphanumeric)
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

/// Reads a stopword file: one word per line, `#` starts a comment line.
/// The result is lowercased and duplicate-free.
pub fn load_stopwords(path: impl AsRef<Path>) -> Result<HashSet<String>> {
    let path = path.as_ref();
    Ok(parse_stopwords(&read_text(path)?))
}

pub fn parse_stopwords(text: &str) -> HashSet<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_lowercase)
        .collect()
}

/// Reads a `surface<TAB>stem` table. Blank lines and `#` comments are
/// skipped.
pub fn load_stem_table(path: impl AsRef<Path>) -> Result<HashMap<String, String>> {
    let path = path.as_ref();
    let text = read_text(path)?;
    let mut table = HashMap::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((surface, stem)) = line.split_once('\t') else {
            return Err(Error::Config(format!(
                "{}:{}: expected `surface<TAB>stem`",
                path.display(),
                n + 1
            )));
        };
        if !is_token_text(surface) || !is_token_text(stem) {
            return Err(Error::Config(format!(
                "{}:{}: surface and stem must be single words",
                path.display(),
                n + 1
            )));
        }
        table.insert(surface.to_owned(), stem.to_owned());
    }
    Ok(table)
}
