//! Smooth-inverse-frequency weighted averages of word vectors.
//!
//! A document vector is
//!
//! ```text
//! v_d = 1/|d| * sum over token occurrences w in d of  a / (a + p(w)) * v_w
//! ```
//!
//! where `|d|` counts only the occurrences that have a word vector. Tokens
//! missing from the vector table are skipped and reported. A document with no
//! embeddable token gets the zero vector and `is_empty = true`.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Document, UnigramModel};
use crate::wordvec::WordVectorTable;

pub const DEFAULT_ALPHA_SIF: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SifConfig {
    pub alpha_sif: f64,
}

impl Default for SifConfig {
    fn default() -> Self {
        Self {
            alpha_sif: DEFAULT_ALPHA_SIF,
        }
    }
}

impl SifConfig {
    /// Returns `None` unless `alpha_sif` is finite and positive.
    pub fn new(alpha_sif: f64) -> Option<Self> {
        (alpha_sif.is_finite() && alpha_sif > 0.0).then_some(Self { alpha_sif })
    }
}

/// `a / (a + p)`: 1 for unseen words, 0.5 when `p == a`.
#[inline]
pub fn sif_weight(p: f64, cfg: SifConfig) -> f64 {
    cfg.alpha_sif / (cfg.alpha_sif + p)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocumentEmbedding {
    pub doc_id: String,
    pub vector: Vec<f64>,
    pub embedded_token_count: usize,
    pub is_empty: bool,
}

/// Out-of-vocabulary occurrences per token.
pub type SkipReport = BTreeMap<String, usize>;

/// Embeds one document. Returns the embedding and the number of token
/// occurrences that had no vector.
///
/// Tokens absent from `unigram` are weighted as if `p(w) = 0`.
pub fn embed_document(
    doc: &Document,
    table: &WordVectorTable,
    unigram: &UnigramModel,
    cfg: SifConfig,
) -> (DocumentEmbedding, usize) {
    let (embedding, skipped) = embed_tokens(doc, table, unigram, cfg);
    (embedding, skipped.len())
}

fn embed_tokens<'d>(
    doc: &'d Document,
    table: &WordVectorTable,
    unigram: &UnigramModel,
    cfg: SifConfig,
) -> (DocumentEmbedding, Vec<&'d str>) {
    let mut sum = vec![0.0; table.dim()];
    let mut used = 0usize;
    let mut skipped = Vec::new();
    for tok in &doc.tokens {
        let Some(v) = table.lookup(tok) else {
            skipped.push(tok.as_str());
            continue;
        };
        let weight = sif_weight(unigram.prob(tok).unwrap_or(0.0), cfg);
        for (acc, x) in sum.iter_mut().zip(v) {
            *acc += weight * x;
        }
        used += 1;
    }
    if used > 0 {
        let inv = used as f64;
        for x in &mut sum {
            *x /= inv;
        }
    }
    (
        DocumentEmbedding {
            doc_id: doc.id.clone(),
            vector: sum,
            embedded_token_count: used,
            is_empty: used == 0,
        },
        skipped,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchEmbedding {
    pub embeddings: Vec<DocumentEmbedding>,
    pub skip_report: SkipReport,
}

impl BatchEmbedding {
    pub fn empty_count(&self) -> usize {
        self.embeddings.iter().filter(|e| e.is_empty).count()
    }
}

/// Embeds every document in parallel; output order matches `docs`.
pub fn embed_batch(docs: &[Document], table: &WordVectorTable, unigram: &UnigramModel, cfg: SifConfig) -> BatchEmbedding {
    let results: Vec<_> = docs
        .par_iter()
        .map(|doc| embed_tokens(doc, table, unigram, cfg))
        .collect();
    let mut skip_report = SkipReport::new();
    let mut embeddings = Vec::with_capacity(results.len());
    for (embedding, skipped) in results {
        for tok in skipped {
            *skip_report.entry(tok.to_string()).or_default() += 1;
        }
        embeddings.push(embedding);
    }
    BatchEmbedding {
        embeddings,
        skip_report,
    }
}
