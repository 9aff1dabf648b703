//! Document ingestion: cleaning, tokenization, stop words, unigram
//! probabilities and the line-delimited dataset format.
//!
//! Dataset files hold one JSON object per line:
//!
//! ```text
//! {"id": "d1", "text": "The engine idles rough", "label": "autos"}
//! {"id": "d2", "text": "Box score from last night"}
//! ```
//!
//! `label` is optional so unlabeled batches use the same format.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Versioned English stop-word list shipped with the crate.
pub const STOP_WORDS_EN: &str = include_str!("../data/stopwords_en.txt");

/// Shortest token kept by [`clean_tokenize`].
pub const MIN_TOKEN_LEN: usize = 2;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: malformed record: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("line {line}: duplicate document id {id:?}")]
    DuplicateId { line: usize, id: String },
    #[error("corpus contains no tokens")]
    EmptyCorpus,
    #[error("line {line}: malformed frequency record")]
    BadFrequency { line: usize },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StopWords(HashSet<String>);

impl StopWords {
    /// The bundled English list.
    pub fn english() -> Self {
        Self::parse(STOP_WORDS_EN)
    }

    pub fn none() -> Self {
        Self(HashSet::new())
    }

    /// One word per line; `#` starts a comment line.
    pub fn parse(text: &str) -> Self {
        Self(
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#'))
                .map(str::to_lowercase)
                .collect(),
        )
    }

    pub fn contains(&self, word: &str) -> bool {
        self.0.contains(word)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl<S: Into<String>> FromIterator<S> for StopWords {
    fn from_iter<I: IntoIterator<Item = S>>(iter: I) -> Self {
        Self(iter.into_iter().map(|s| s.into().to_lowercase()).collect())
    }
}

/// Lowercases, splits on every non-letter, drops tokens shorter than two
/// characters and stop words. Surviving tokens keep their order.
pub fn clean_tokenize(raw_text: &str, stopwords: &StopWords) -> Vec<String> {
    raw_text
        .split(|c: char| !c.is_alphabetic())
        .filter(|piece| !piece.is_empty())
        .map(str::to_lowercase)
        .filter(|tok| tok.chars().count() >= MIN_TOKEN_LEN && !stopwords.contains(tok))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub raw_text: String,
    pub tokens: Vec<String>,
}

impl Document {
    pub fn new(id: impl Into<String>, raw_text: impl Into<String>, stopwords: &StopWords) -> Self {
        let raw_text = raw_text.into();
        let tokens = clean_tokenize(&raw_text, stopwords);
        Self {
            id: id.into(),
            raw_text,
            tokens,
        }
    }

    /// A document whose tokens are taken as given, bypassing cleaning.
    pub fn from_tokens<S: Into<String>>(id: impl Into<String>, tokens: impl IntoIterator<Item = S>) -> Self {
        let tokens: Vec<String> = tokens.into_iter().map(Into::into).collect();
        Self {
            id: id.into(),
            raw_text: tokens.join(" "),
            tokens,
        }
    }

    pub fn token_count(&self) -> usize {
        self.tokens.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledDocument {
    pub doc: Document,
    pub gold_label: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledDataset {
    pub documents: Vec<LabeledDocument>,
    /// Distinct labels in order of first appearance.
    pub categories: Vec<String>,
}

impl LabeledDataset {
    pub fn docs(&self) -> Vec<Document> {
        self.documents.iter().map(|d| d.doc.clone()).collect()
    }

    pub fn is_fully_labeled(&self) -> bool {
        self.documents.iter().all(|d| d.gold_label.is_some())
    }
}

/// One line of the dataset format.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DocumentRecord {
    pub id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

pub fn load_labeled_dataset(path: impl AsRef<Path>, stopwords: &StopWords) -> Result<LabeledDataset, CorpusError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_dataset(&text, stopwords)
}

/// Parses dataset text. Blank lines are ignored.
pub fn parse_dataset(text: &str, stopwords: &StopWords) -> Result<LabeledDataset, CorpusError> {
    let mut records = Vec::new();
    let mut seen = HashSet::new();
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let record: DocumentRecord = serde_json::from_str(line).map_err(|e| CorpusError::Malformed {
            line: lineno,
            reason: e.to_string(),
        })?;
        if !seen.insert(record.id.clone()) {
            return Err(CorpusError::DuplicateId {
                line: lineno,
                id: record.id,
            });
        }
        records.push(record);
    }
    Ok(dataset_from_records(records, stopwords))
}

/// Tokenizes records in parallel; output order follows input order.
pub fn dataset_from_records(records: Vec<DocumentRecord>, stopwords: &StopWords) -> LabeledDataset {
    let mut categories: Vec<String> = Vec::new();
    for r in &records {
        if let Some(label) = &r.label {
            if !categories.contains(label) {
                categories.push(label.clone());
            }
        }
    }
    let documents = records
        .into_par_iter()
        .map(|r| LabeledDocument {
            doc: Document::new(r.id, r.text, stopwords),
            gold_label: r.label,
        })
        .collect();
    LabeledDataset { documents, categories }
}

/// Unigram probabilities p(w).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnigramModel {
    probs: HashMap<String, f64>,
    total_tokens: u64,
}

impl UnigramModel {
    pub fn prob(&self, token: &str) -> Option<f64> {
        self.probs.get(token).copied()
    }

    pub fn total_tokens(&self) -> u64 {
        self.total_tokens
    }

    pub fn vocab_size(&self) -> usize {
        self.probs.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.probs.iter().map(|(k, &v)| (k.as_str(), v))
    }

    /// Builds the model from raw counts. Zero counts are dropped.
    pub fn from_counts<S: Into<String>>(counts: impl IntoIterator<Item = (S, u64)>) -> Result<Self, CorpusError> {
        let counts: BTreeMap<String, u64> = counts
            .into_iter()
            .filter(|(_, c)| *c > 0)
            .fold(BTreeMap::new(), |mut acc, (k, c)| {
                *acc.entry(k.into()).or_default() += c;
                acc
            });
        let total: u64 = counts.values().sum();
        if total == 0 {
            return Err(CorpusError::EmptyCorpus);
        }
        let probs = counts
            .into_iter()
            .map(|(k, c)| (k, c as f64 / total as f64))
            .collect();
        Ok(Self {
            probs,
            total_tokens: total,
        })
    }

    /// Reads a `token count` per line frequency file, an optional
    /// replacement for batch-estimated probabilities.
    pub fn load_frequency_file(path: impl AsRef<Path>) -> Result<Self, CorpusError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| CorpusError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut counts = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            let parsed = match (parts.next(), parts.next().map(str::parse::<u64>), parts.next()) {
                (Some(tok), Some(Ok(c)), None) => Some((tok.to_lowercase(), c)),
                _ => None,
            };
            counts.push(parsed.ok_or(CorpusError::BadFrequency { line: idx + 1 })?);
        }
        Self::from_counts(counts)
    }
}

/// p(w) = occurrences of w / all token occurrences in `docs`.
pub fn build_unigram_model<'a>(docs: impl IntoIterator<Item = &'a Document>) -> Result<UnigramModel, CorpusError> {
    let mut counts: HashMap<&str, u64> = HashMap::new();
    for doc in docs {
        for tok in &doc.tokens {
            *counts.entry(tok.as_str()).or_default() += 1;
        }
    }
    UnigramModel::from_counts(counts)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenize_examples() {
        let the: StopWords = ["the"].into_iter().collect();
        assert_eq!(clean_tokenize("The cat, the CAT!", &the), vec!["cat", "cat"]);
        assert!(clean_tokenize("a I x", &StopWords::none()).is_empty());
        assert_eq!(clean_tokenize("Auto-pilot 2000", &StopWords::none()), vec!["auto", "pilot"]);
        assert!(clean_tokenize("", &StopWords::english()).is_empty());
    }

    #[test]
    fn bundled_list() {
        let sw = StopWords::english();
        assert!(sw.len() >= 170 && sw.len() <= 190, "{}", sw.len());
        for w in ["the", "and", "don", "would"] {
            assert!(sw.contains(w), "{w}");
        }
        assert!(!sw.contains("car"));
    }

    #[test]
    fn unigram_counts() {
        let docs = [Document::from_tokens("1", ["a", "b"]), Document::from_tokens("2", ["b", "b"])];
        let m = build_unigram_model(&docs).unwrap();
        assert_eq!(m.prob("a"), Some(0.25));
        assert_eq!(m.prob("b"), Some(0.75));
        assert_eq!(m.total_tokens(), 4);

        let single = build_unigram_model(&[Document::from_tokens("x", ["x", "x"])]).unwrap();
        assert_eq!(single.prob("x"), Some(1.0));

        let docs = [Document::from_tokens("1", ["u", "v", "v"]), Document::from_tokens("2", ["v", "v"])];
        assert_eq!(build_unigram_model(&docs).unwrap().prob("u"), Some(1.0 / 5.0));
    }

    #[test]
    fn unigram_empty_corpus() {
        let docs = [Document::from_tokens::<&str>("1", [])];
        assert!(matches!(build_unigram_model(&docs), Err(CorpusError::EmptyCorpus)));
        assert!(matches!(build_unigram_model(&[]), Err(CorpusError::EmptyCorpus)));
    }

    #[test]
    fn dataset_parsing() {
        let sw = StopWords::english();
        let text = r#"{"id":"1","text":"engine oil pressure","label":"autos"}
{"id":"2","text":"pitcher threw a curveball","label":"baseball"}"#;
        let ds = parse_dataset(text, &sw).unwrap();
        assert_eq!(ds.documents.len(), 2);
        assert_eq!(ds.categories, vec!["autos", "baseball"]);
        assert!(ds.is_fully_labeled());
    }

    #[test]
    fn dataset_missing_text_names_line() {
        let text = "{\"id\":\"1\",\"text\":\"ok\"}\n{\"id\":\"2\",\"label\":\"x\"}\n";
        match parse_dataset(text, &StopWords::english()) {
            Err(CorpusError::Malformed { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn dataset_duplicate_id() {
        let text = "{\"id\":\"1\",\"text\":\"aa\"}\n{\"id\":\"1\",\"text\":\"bb\"}\n";
        assert!(matches!(
            parse_dataset(text, &StopWords::english()),
            Err(CorpusError::DuplicateId { line: 2, .. })
        ));
    }

    #[test]
    fn all_stop_word_document_is_kept() {
        let text = "{\"id\":\"1\",\"text\":\"the and of it\",\"label\":\"a\"}\n";
        let ds = parse_dataset(text, &StopWords::english()).unwrap();
        assert_eq!(ds.documents.len(), 1);
        assert_eq!(ds.documents[0].doc.token_count(), 0);
    }
}
