//! Category prototypes and nearest-prototype classification.
//!
//! A prototype is the plain mean of its representatives' document vectors
//! (one representative gives that vector unchanged). Every other document is
//! assigned the category whose prototype has the highest cosine similarity;
//! ties go to the category listed first.

use std::collections::{HashMap, HashSet};

use indexmap::IndexMap;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embed::DocumentEmbedding;

#[derive(Debug, Error, PartialEq)]
pub enum ClassifyError {
    #[error("cosine similarity of a zero vector is undefined")]
    ZeroNorm,
    #[error("vector lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("need at least 2 categories, got {0}")]
    TooFewCategories(usize),
    #[error("category {0:?} has no representatives")]
    NoRepresentatives(String),
    #[error("document {doc_id:?} is selected for both {first:?} and {second:?}")]
    DuplicateRepresentative {
        doc_id: String,
        first: String,
        second: String,
    },
    #[error("unknown document {0:?}")]
    UnknownDocument(String),
    #[error("document {0:?} has an empty embedding and cannot represent a category")]
    EmptyRepresentative(String),
}

/// Category name to selected document ids, in category order.
pub type Selection = IndexMap<String, Vec<String>>;

pub fn cosine_similarity(u: &[f64], v: &[f64]) -> Result<f64, ClassifyError> {
    if u.len() != v.len() {
        return Err(ClassifyError::LengthMismatch(u.len(), v.len()));
    }
    let mut dot = 0.0;
    let mut uu = 0.0;
    let mut vv = 0.0;
    for (a, b) in u.iter().zip(v) {
        dot += a * b;
        uu += a * a;
        vv += b * b;
    }
    if uu == 0.0 || vv == 0.0 {
        return Err(ClassifyError::ZeroNorm);
    }
    Ok(dot / (uu.sqrt() * vv.sqrt()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prototype {
    pub category: String,
    pub representative_doc_ids: Vec<String>,
    pub vector: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrototypeSet {
    pub prototypes: Vec<Prototype>,
}

impl PrototypeSet {
    pub fn categories(&self) -> impl Iterator<Item = &str> {
        self.prototypes.iter().map(|p| p.category.as_str())
    }

    pub fn representative_ids(&self) -> HashSet<&str> {
        self.prototypes
            .iter()
            .flat_map(|p| p.representative_doc_ids.iter().map(String::as_str))
            .collect()
    }
}

/// Anything that can resolve a document id to its embedding.
pub trait EmbeddingLookup {
    fn embedding(&self, doc_id: &str) -> Option<&DocumentEmbedding>;
}

impl EmbeddingLookup for HashMap<String, DocumentEmbedding> {
    fn embedding(&self, doc_id: &str) -> Option<&DocumentEmbedding> {
        self.get(doc_id)
    }
}

impl EmbeddingLookup for HashMap<&str, &DocumentEmbedding> {
    fn embedding(&self, doc_id: &str) -> Option<&DocumentEmbedding> {
        self.get(doc_id).copied()
    }
}

impl EmbeddingLookup for [DocumentEmbedding] {
    fn embedding(&self, doc_id: &str) -> Option<&DocumentEmbedding> {
        self.iter().find(|e| e.doc_id == doc_id)
    }
}

pub fn build_prototypes<L: EmbeddingLookup + ?Sized>(selection: &Selection, embeddings: &L) -> Result<PrototypeSet, ClassifyError> {
    if selection.len() < 2 {
        return Err(ClassifyError::TooFewCategories(selection.len()));
    }
    let mut owner: HashMap<&str, &str> = HashMap::new();
    let mut prototypes = Vec::with_capacity(selection.len());
    for (category, ids) in selection {
        if ids.is_empty() {
            return Err(ClassifyError::NoRepresentatives(category.clone()));
        }
        let mut sum: Option<Vec<f64>> = None;
        for id in ids {
            if let Some(first) = owner.insert(id, category) {
                return Err(ClassifyError::DuplicateRepresentative {
                    doc_id: id.clone(),
                    first: first.to_string(),
                    second: category.clone(),
                });
            }
            let e = embeddings
                .embedding(id)
                .ok_or_else(|| ClassifyError::UnknownDocument(id.clone()))?;
            if e.is_empty {
                return Err(ClassifyError::EmptyRepresentative(id.clone()));
            }
            match &mut sum {
                None => sum = Some(e.vector.clone()),
                Some(acc) => {
                    if acc.len() != e.vector.len() {
                        return Err(ClassifyError::LengthMismatch(acc.len(), e.vector.len()));
                    }
                    for (a, x) in acc.iter_mut().zip(&e.vector) {
                        *a += x;
                    }
                }
            }
        }
        let mut vector = sum.expect("non-empty representative list");
        if ids.len() > 1 {
            let n = ids.len() as f64;
            for x in &mut vector {
                *x /= n;
            }
        }
        prototypes.push(Prototype {
            category: category.clone(),
            representative_doc_ids: ids.clone(),
            vector,
        });
    }
    Ok(PrototypeSet { prototypes })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub doc_id: String,
    pub category: String,
    /// Cosine similarity to the winning prototype.
    pub score: f64,
    /// Winning similarity minus the runner-up's.
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub predictions: Vec<Prediction>,
    /// Documents with an empty embedding; they get no prediction.
    pub unclassifiable: Vec<String>,
}

/// Index of the winning prototype, its score and margin. Ties go to the
/// lowest index.
pub fn pick_category(sims: &[f64]) -> (usize, f64, f64) {
    let mut best = 0;
    for (c, &s) in sims.iter().enumerate().skip(1) {
        if s > sims[best] {
            best = c;
        }
    }
    let runner_up = sims
        .iter()
        .enumerate()
        .filter(|&(c, _)| c != best)
        .map(|(_, &s)| s)
        .fold(f64::NEG_INFINITY, f64::max);
    let margin = if runner_up.is_finite() { sims[best] - runner_up } else { 0.0 };
    (best, sims[best], margin)
}

/// Classifies every embedding not in `exclude`. Output order follows
/// `embeddings`.
pub fn classify_batch(embeddings: &[DocumentEmbedding], prototypes: &PrototypeSet, exclude: &HashSet<&str>) -> Classification {
    let outcomes: Vec<Option<Result<Prediction, String>>> = embeddings
        .par_iter()
        .map(|e| {
            if exclude.contains(e.doc_id.as_str()) {
                return None;
            }
            if e.is_empty {
                return Some(Err(e.doc_id.clone()));
            }
            let sims: Option<Vec<f64>> = prototypes
                .prototypes
                .iter()
                .map(|p| cosine_similarity(&e.vector, &p.vector).ok())
                .collect();
            let Some(sims) = sims else {
                return Some(Err(e.doc_id.clone()));
            };
            let (best, score, margin) = pick_category(&sims);
            Some(Ok(Prediction {
                doc_id: e.doc_id.clone(),
                category: prototypes.prototypes[best].category.clone(),
                score,
                margin,
            }))
        })
        .collect();

    let mut predictions = Vec::new();
    let mut unclassifiable = Vec::new();
    for outcome in outcomes.into_iter().flatten() {
        match outcome {
            Ok(p) => predictions.push(p),
            Err(id) => unclassifiable.push(id),
        }
    }
    Classification {
        predictions,
        unclassifiable,
    }
}
