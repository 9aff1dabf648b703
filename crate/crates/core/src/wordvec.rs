//! Pre-trained word vectors in the common text formats.
//!
//! Two layouts are accepted:
//!
//! * `plain` (GloVe): one record per line, the token followed by
//!   whitespace-separated decimal components.
//! * `headered` (word2vec / FastText `.vec`): the same records preceded by a
//!   `count dim` line.
//!
//! The first whitespace delimits the token, so tokens with inner spaces are
//! not representable. Components are always parsed as `f64`.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum WordVecError {
    #[error("cannot read vector file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: expected {expected} components, found {found}")]
    InconsistentDim {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: cannot parse component {value:?}")]
    BadNumber { line: usize, value: String },
    #[error("line {line}: malformed header {header:?}, expected \"count dim\"")]
    BadHeader { line: usize, header: String },
    #[error("line {line}: record has a token but no components")]
    NoComponents { line: usize },
    #[error("no vector records found")]
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VectorFormat {
    /// `token v1 v2 ...` on every line.
    #[default]
    Plain,
    /// A `count dim` line, then `plain` records.
    Headered,
}

impl FromStr for VectorFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "plain" => Ok(VectorFormat::Plain),
            "headered" => Ok(VectorFormat::Headered),
            other => Err(format!("unknown vector format {other:?} (plain|headered)")),
        }
    }
}

/// What happened while loading a vector file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LoadReport {
    pub tokens: usize,
    pub dim: usize,
    pub duplicates_skipped: usize,
    /// `(count, dim)` from the header when it disagreed with the records.
    pub header_mismatch: Option<(usize, usize)>,
}

/// Immutable token to vector map.
#[derive(Debug, Clone, PartialEq)]
pub struct WordVectorTable {
    entries: HashMap<String, Vec<f64>>,
    dim: usize,
    source_id: String,
}

impl WordVectorTable {
    /// Builds a table from in-memory records, keeping the first occurrence of
    /// a repeated token.
    pub fn from_entries<I, S>(source_id: impl Into<String>, records: I) -> Result<Self, WordVecError>
    where
        I: IntoIterator<Item = (S, Vec<f64>)>,
        S: Into<String>,
    {
        let mut entries = HashMap::new();
        let mut dim = None;
        for (i, (token, vector)) in records.into_iter().enumerate() {
            let expected = *dim.get_or_insert(vector.len());
            if vector.is_empty() {
                return Err(WordVecError::NoComponents { line: i + 1 });
            }
            if vector.len() != expected {
                return Err(WordVecError::InconsistentDim {
                    line: i + 1,
                    expected,
                    found: vector.len(),
                });
            }
            entries.entry(token.into()).or_insert(vector);
        }
        let dim = dim.ok_or(WordVecError::Empty)?;
        Ok(Self {
            entries,
            dim,
            source_id: source_id.into(),
        })
    }

    pub fn lookup(&self, token: &str) -> Option<&[f64]> {
        self.entries.get(token).map(Vec::as_slice)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn source_id(&self) -> &str {
        &self.source_id
    }

    pub fn tokens(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }
}

/// Loads a vector file from disk and logs a load report.
pub fn load_vectors(path: impl AsRef<Path>, format: VectorFormat) -> Result<WordVectorTable, WordVecError> {
    let path = path.as_ref();
    let io_err = |source| WordVecError::Io {
        path: path.display().to_string(),
        source,
    };
    let file = File::open(path).map_err(io_err)?;
    let (table, report) = read_vectors(BufReader::new(file), format, path.display().to_string())?;
    tracing::info!(
        source = %table.source_id,
        tokens = report.tokens,
        dim = report.dim,
        duplicates_skipped = report.duplicates_skipped,
        "loaded word vectors"
    );
    Ok(table)
}

/// Parses vectors from any buffered reader.
pub fn read_vectors<R: BufRead>(
    reader: R,
    format: VectorFormat,
    source_id: impl Into<String>,
) -> Result<(WordVectorTable, LoadReport), WordVecError> {
    let source_id = source_id.into();
    let mut entries: HashMap<String, Vec<f64>> = HashMap::new();
    let mut dim: Option<usize> = None;
    let mut header: Option<(usize, usize)> = None;
    let mut duplicates = 0;
    let mut expect_header = format == VectorFormat::Headered;

    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|source| WordVecError::Io {
            path: source_id.clone(),
            source,
        })?;
        let trimmed = line.trim_end();
        if trimmed.trim().is_empty() {
            continue;
        }
        if expect_header {
            expect_header = false;
            header = Some(parse_header(trimmed, lineno)?);
            continue;
        }

        let mut fields = trimmed.split_whitespace();
        let token = fields.next().expect("non-blank line has a field");
        let mut vector = Vec::with_capacity(dim.unwrap_or(0));
        for field in fields {
            let value = field.parse::<f64>().map_err(|_| WordVecError::BadNumber {
                line: lineno,
                value: field.to_string(),
            })?;
            vector.push(value);
        }
        if vector.is_empty() {
            return Err(WordVecError::NoComponents { line: lineno });
        }
        let expected = *dim.get_or_insert(vector.len());
        if vector.len() != expected {
            return Err(WordVecError::InconsistentDim {
                line: lineno,
                expected,
                found: vector.len(),
            });
        }
        if entries.contains_key(token) {
            duplicates += 1;
        } else {
            entries.insert(token.to_string(), vector);
        }
    }

    let dim = dim.ok_or(WordVecError::Empty)?;
    let record_count = entries.len() + duplicates;
    let header_mismatch = header.filter(|&(count, hdim)| count != record_count || hdim != dim);
    if let Some((count, hdim)) = header_mismatch {
        tracing::warn!(
            header_count = count,
            header_dim = hdim,
            records = record_count,
            dim,
            "vector file header disagrees with its records; using the records"
        );
    }
    let report = LoadReport {
        tokens: entries.len(),
        dim,
        duplicates_skipped: duplicates,
        header_mismatch,
    };
    Ok((
        WordVectorTable {
            entries,
            dim,
            source_id,
        },
        report,
    ))
}

fn parse_header(line: &str, lineno: usize) -> Result<(usize, usize), WordVecError> {
    let bad = || WordVecError::BadHeader {
        line: lineno,
        header: line.to_string(),
    };
    let mut parts = line.split_whitespace();
    let count = parts.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
    let dim = parts.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
    if parts.next().is_some() {
        return Err(bad());
    }
    Ok((count, dim))
}
