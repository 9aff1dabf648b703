//! Evaluation harness for labeled batches.
//!
//! * [`search_max_one_shot`]: best one-shot accuracy over every choice of one
//!   representative per category, or over a seeded uniform sample of choices
//!   when there are more than `budget`.
//! * [`search_lda_restricted`]: the same search where representatives may
//!   only come from the first page of each LDA topic.
//! * [`length_bias_analysis`]: Pearson correlation between a representative's
//!   share of the pair's token length and its category's share of
//!   predictions, over all (or sampled) representative pairs.
//!
//! A one-shot prototype is the representative's own vector, so every
//! combination can be scored from cosine similarities between documents.
//! Those are computed once with [`cosine_similarity`] (same argument order as
//! [`classify_batch`](crate::classify::classify_batch)) and cached, which
//! makes the scores bitwise identical to running the full classification
//! for each combination.
//!
//! Combinations are indexed in lexicographic order of the per-category
//! doc-id tuple; among equally accurate combinations the smallest index
//! wins, so results do not depend on thread count.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;

use indexmap::IndexMap;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classify::{cosine_similarity, Prediction, Selection};
use crate::corpus::LabeledDataset;
use crate::embed::DocumentEmbedding;
use crate::topics::{CandidateRanking, TopicModel};

pub const DEFAULT_BUDGET: u64 = 500_000;
pub const DEFAULT_EVAL_SEED: u64 = 7;

/// Cached similarity rows beyond this many entries are computed on demand.
const DENSE_LIMIT: usize = 64 * 1024 * 1024;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("need at least 2 categories, got {0}")]
    TooFewCategories(usize),
    #[error("length-bias analysis needs exactly 2 categories, got {0}")]
    NotTwoCategories(usize),
    #[error("category {0:?} has no document with a non-empty embedding")]
    EmptyPool(String),
    #[error("document {0:?} has no gold label")]
    MissingGold(String),
    #[error("document {doc_id:?} has label {label:?} outside the category set")]
    UnknownLabel { doc_id: String, label: String },
    #[error("embeddings do not line up with documents (at position {0})")]
    Misaligned(usize),
    #[error("accuracy is undefined: nothing to count")]
    ZeroDenominator,
    #[error("correlation is undefined: {0} has zero variance")]
    DegenerateVariance(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AccuracyConvention {
    /// Representatives count as correctly labeled documents.
    IncludeReps,
    /// Only predicted documents count.
    ExcludeReps,
}

/// Fraction of correct predictions. With `IncludeReps` the representatives
/// are added to both numerator and denominator.
pub fn accuracy(
    predictions: &[Prediction],
    gold: &HashMap<String, String>,
    representatives: &Selection,
    convention: AccuracyConvention,
) -> Result<f64, EvalError> {
    let mut correct = 0usize;
    for p in predictions {
        let label = gold.get(&p.doc_id).ok_or_else(|| EvalError::MissingGold(p.doc_id.clone()))?;
        if *label == p.category {
            correct += 1;
        }
    }
    let (num, den) = match convention {
        AccuracyConvention::ExcludeReps => (correct, predictions.len()),
        AccuracyConvention::IncludeReps => {
            let reps: usize = representatives.values().map(Vec::len).sum();
            (correct + reps, predictions.len() + reps)
        }
    };
    if den == 0 {
        return Err(EvalError::ZeroDenominator);
    }
    Ok(num as f64 / den as f64)
}

/// A fully labeled batch with its embeddings, aligned by position.
#[derive(Debug, Clone)]
pub struct EvalBatch {
    pub dataset_id: String,
    pub categories: Vec<String>,
    pub doc_ids: Vec<String>,
    /// Category index per document.
    pub gold: Vec<usize>,
    pub token_counts: Vec<usize>,
    pub embeddings: Vec<DocumentEmbedding>,
}

impl EvalBatch {
    pub fn new(dataset_id: impl Into<String>, dataset: &LabeledDataset, embeddings: Vec<DocumentEmbedding>) -> Result<Self, EvalError> {
        if embeddings.len() != dataset.documents.len() {
            return Err(EvalError::Misaligned(embeddings.len().min(dataset.documents.len())));
        }
        let index: HashMap<&str, usize> = dataset.categories.iter().enumerate().map(|(i, c)| (c.as_str(), i)).collect();
        let mut gold = Vec::with_capacity(embeddings.len());
        for (pos, (doc, emb)) in dataset.documents.iter().zip(&embeddings).enumerate() {
            if doc.doc.id != emb.doc_id {
                return Err(EvalError::Misaligned(pos));
            }
            let label = doc
                .gold_label
                .as_deref()
                .ok_or_else(|| EvalError::MissingGold(doc.doc.id.clone()))?;
            let c = *index.get(label).ok_or_else(|| EvalError::UnknownLabel {
                doc_id: doc.doc.id.clone(),
                label: label.to_string(),
            })?;
            gold.push(c);
        }
        Ok(Self {
            dataset_id: dataset_id.into(),
            categories: dataset.categories.clone(),
            doc_ids: dataset.documents.iter().map(|d| d.doc.id.clone()).collect(),
            gold,
            token_counts: dataset.documents.iter().map(|d| d.doc.token_count()).collect(),
            embeddings,
        })
    }

    pub fn len(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.doc_ids.is_empty()
    }

    pub fn gold_map(&self) -> HashMap<String, String> {
        self.doc_ids
            .iter()
            .zip(&self.gold)
            .map(|(id, &c)| (id.clone(), self.categories[c].clone()))
            .collect()
    }

    fn is_active(&self, i: usize) -> bool {
        let e = &self.embeddings[i];
        !e.is_empty && e.vector.iter().any(|&x| x != 0.0)
    }

    /// Documents that can be classified or chosen as representatives.
    fn active(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.is_active(i)).collect()
    }

    /// Active documents of each category, sorted by doc id.
    fn pools(&self, allowed: Option<&HashSet<usize>>) -> Vec<Vec<usize>> {
        let mut pools = vec![Vec::new(); self.categories.len()];
        for i in self.active() {
            if allowed.is_none_or(|a| a.contains(&i)) {
                pools[self.gold[i]].push(i);
            }
        }
        for pool in &mut pools {
            pool.sort_by(|&a, &b| self.doc_ids[a].cmp(&self.doc_ids[b]));
        }
        pools
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchMode {
    Exhaustive,
    Sampled,
    LdaRestricted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchFailure {
    /// Some category had no gold-matching document on the first pages.
    LdaMissingCategory,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub dataset_id: String,
    pub categories: Vec<String>,
    pub doc_count: usize,
    pub mode: SearchMode,
    pub combinations_evaluated: u64,
    pub total_combinations: u128,
    pub best_combination: IndexMap<String, Vec<String>>,
    /// Accuracy over predicted documents only.
    pub max_accuracy: Option<f64>,
    /// Accuracy with the representatives counted as correct.
    pub max_accuracy_include_reps: Option<f64>,
    pub correct: usize,
    pub predicted: usize,
    pub seed: Option<u64>,
    pub page_size: Option<usize>,
    pub candidate_pool_size: Option<usize>,
    pub failure: Option<SearchFailure>,
}

impl EvalReport {
    pub fn category_label(&self) -> String {
        self.categories.join(", ")
    }
}

enum SimRows {
    Dense { row_of: Vec<Option<u32>>, data: Vec<f64>, n: usize },
    OnDemand,
}

/// Scores one-shot combinations for a batch.
struct Scorer<'a> {
    batch: &'a EvalBatch,
    active: Vec<usize>,
    rows: SimRows,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct ComboScore {
    correct: usize,
    predicted: usize,
    per_category: [usize; 2],
}

impl<'a> Scorer<'a> {
    fn new(batch: &'a EvalBatch, candidates: &[usize]) -> Self {
        let n = batch.len();
        let active = batch.active();
        let rows = if candidates.len().saturating_mul(n) <= DENSE_LIMIT {
            let mut row_of = vec![None; n];
            for (r, &c) in candidates.iter().enumerate() {
                row_of[c] = Some(r as u32);
            }
            let mut data = vec![0.0; candidates.len() * n];
            data.par_chunks_mut(n.max(1)).zip(candidates.par_iter()).for_each(|(row, &c)| {
                let rep = &batch.embeddings[c].vector;
                for &j in &active {
                    row[j] = cosine_similarity(&batch.embeddings[j].vector, rep).expect("active vectors are non-zero");
                }
            });
            SimRows::Dense { row_of, data, n }
        } else {
            SimRows::OnDemand
        };
        Self { batch, active, rows }
    }

    #[inline]
    fn sim(&self, rep: usize, doc: usize) -> f64 {
        match &self.rows {
            SimRows::Dense { row_of, data, n } => {
                let r = row_of[rep].expect("representative has a cached row") as usize;
                data[r * n + doc]
            }
            SimRows::OnDemand => cosine_similarity(&self.batch.embeddings[doc].vector, &self.batch.embeddings[rep].vector)
                .expect("active vectors are non-zero"),
        }
    }

    /// Classifies every non-representative active document against the
    /// given one-shot representatives (one per category, category order).
    fn score(&self, reps: &[usize]) -> ComboScore {
        let mut correct = 0;
        let mut predicted = 0;
        let mut per_category = [0usize; 2];
        for &j in &self.active {
            if reps.contains(&j) {
                continue;
            }
            let mut best = 0;
            let mut best_sim = self.sim(reps[0], j);
            for (c, &r) in reps.iter().enumerate().skip(1) {
                let s = self.sim(r, j);
                if s > best_sim {
                    best = c;
                    best_sim = s;
                }
            }
            predicted += 1;
            if best < 2 {
                per_category[best] += 1;
            }
            if self.batch.gold[j] == best {
                correct += 1;
            }
        }
        ComboScore {
            correct,
            predicted,
            per_category,
        }
    }
}

/// Mixed-radix decode of a combination index; the last category varies
/// fastest, so index order is lexicographic order of pool positions.
fn decode(mut index: u128, pools: &[Vec<usize>], out: &mut [usize]) {
    for (c, pool) in pools.iter().enumerate().rev() {
        let radix = pool.len() as u128;
        out[c] = pool[(index % radix) as usize];
        index /= radix;
    }
}

fn total_combinations(pools: &[Vec<usize>]) -> u128 {
    pools
        .iter()
        .try_fold(1u128, |acc, p| acc.checked_mul(p.len() as u128))
        .unwrap_or(u128::MAX)
}

/// `amount` distinct indices drawn uniformly from `0..total` (Floyd's
/// algorithm), sorted ascending.
fn sample_indices(total: u128, amount: u64, seed: u64) -> Vec<u128> {
    let amount = amount as u128;
    assert!(amount <= total);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen: HashSet<u128> = HashSet::with_capacity(amount as usize);
    for j in (total - amount)..total {
        let t = rng.random_range(0..=j);
        if !chosen.insert(t) {
            chosen.insert(j);
        }
    }
    let mut out: Vec<u128> = chosen.into_iter().collect();
    out.sort_unstable();
    out
}

/// Which combination indices a search visits.
enum Plan {
    All(u128),
    Sample(Vec<u128>),
}

impl Plan {
    fn new(total: u128, budget: Option<u64>, seed: u64) -> Self {
        match budget {
            Some(b) if total > b as u128 => Plan::Sample(sample_indices(total, b, seed)),
            _ => Plan::All(total),
        }
    }

    fn len(&self) -> u64 {
        match self {
            Plan::All(n) => *n as u64,
            Plan::Sample(v) => v.len() as u64,
        }
    }

    fn mode(&self) -> SearchMode {
        match self {
            Plan::All(_) => SearchMode::Exhaustive,
            Plan::Sample(_) => SearchMode::Sampled,
        }
    }

    fn for_each<F>(&self, f: F) -> Vec<(u128, ComboScore)>
    where
        F: Fn(u128) -> ComboScore + Sync,
    {
        match self {
            Plan::All(n) => (0..*n as u64).into_par_iter().map(|i| (i as u128, f(i as u128))).collect(),
            Plan::Sample(v) => v.par_iter().map(|&i| (i, f(i))).collect(),
        }
    }

    fn best<F>(&self, f: F) -> Option<(u128, ComboScore)>
    where
        F: Fn(u128) -> ComboScore + Sync,
    {
        // Higher correct count wins, then the smaller index.
        let better = |a: (u128, ComboScore), b: (u128, ComboScore)| {
            if b.1.correct > a.1.correct || (b.1.correct == a.1.correct && b.0 < a.0) {
                b
            } else {
                a
            }
        };
        match self {
            Plan::All(n) => (0..*n as u64)
                .into_par_iter()
                .map(|i| (i as u128, f(i as u128)))
                .reduce_with(better),
            Plan::Sample(v) => v.par_iter().map(|&i| (i, f(i))).reduce_with(better),
        }
    }
}

struct SearchOutcome {
    mode: SearchMode,
    evaluated: u64,
    total: u128,
    best: Option<(Vec<usize>, ComboScore)>,
}

fn run_search(batch: &EvalBatch, pools: &[Vec<usize>], budget: Option<u64>, seed: u64) -> Result<SearchOutcome, EvalError> {
    let total = total_combinations(pools);
    let plan = Plan::new(total, budget, seed);
    let candidates: Vec<usize> = pools.iter().flatten().copied().collect();
    let scorer = Scorer::new(batch, &candidates);
    if scorer.active.len() <= pools.len() {
        return Err(EvalError::ZeroDenominator);
    }
    let k = pools.len();
    let best = plan.best(|idx| {
        let mut reps = vec![0; k];
        decode(idx, pools, &mut reps);
        scorer.score(&reps)
    });
    let best = best.map(|(idx, score)| {
        let mut reps = vec![0; k];
        decode(idx, pools, &mut reps);
        (reps, score)
    });
    Ok(SearchOutcome {
        mode: plan.mode(),
        evaluated: plan.len(),
        total,
        best,
    })
}

fn report_from(batch: &EvalBatch, outcome: SearchOutcome, seed: Option<u64>) -> EvalReport {
    let k = batch.categories.len();
    let (best_combination, max_accuracy, include, correct, predicted) = match outcome.best {
        Some((reps, score)) => {
            let combo = batch
                .categories
                .iter()
                .zip(&reps)
                .map(|(c, &r)| (c.clone(), vec![batch.doc_ids[r].clone()]))
                .collect();
            let acc = score.correct as f64 / score.predicted as f64;
            let inc = (score.correct + k) as f64 / (score.predicted + k) as f64;
            (combo, Some(acc), Some(inc), score.correct, score.predicted)
        }
        None => (IndexMap::new(), None, None, 0, 0),
    };
    EvalReport {
        dataset_id: batch.dataset_id.clone(),
        categories: batch.categories.clone(),
        doc_count: batch.len(),
        mode: outcome.mode,
        combinations_evaluated: outcome.evaluated,
        total_combinations: outcome.total,
        best_combination,
        max_accuracy,
        max_accuracy_include_reps: include,
        correct,
        predicted,
        seed,
        page_size: None,
        candidate_pool_size: None,
        failure: None,
    }
}

fn check_pools(batch: &EvalBatch, pools: &[Vec<usize>]) -> Result<(), EvalError> {
    if batch.categories.len() < 2 {
        return Err(EvalError::TooFewCategories(batch.categories.len()));
    }
    if let Some(c) = pools.iter().position(Vec::is_empty) {
        return Err(EvalError::EmptyPool(batch.categories[c].clone()));
    }
    Ok(())
}

/// Maximum one-shot accuracy (exclude-reps convention) over all
/// combinations, or over `budget` sampled combinations when there are more.
pub fn search_max_one_shot(batch: &EvalBatch, budget: u64, seed: u64) -> Result<EvalReport, EvalError> {
    let pools = batch.pools(None);
    check_pools(batch, &pools)?;
    let outcome = run_search(batch, &pools, Some(budget.max(1)), seed)?;
    let sampled = outcome.mode == SearchMode::Sampled;
    Ok(report_from(batch, outcome, sampled.then_some(seed)))
}

/// Maximum one-shot accuracy when representatives must come from the first
/// `page_size` documents of each topic of `model`.
pub fn search_lda_restricted(batch: &EvalBatch, model: &TopicModel, page_size: usize) -> Result<EvalReport, EvalError> {
    search_ranked(batch, &model.rank_candidates(page_size), Some(model.config.seed))
}

/// [`search_lda_restricted`] for an existing ranking.
pub fn search_ranked(batch: &EvalBatch, ranking: &CandidateRanking, lda_seed: Option<u64>) -> Result<EvalReport, EvalError> {
    if batch.categories.len() < 2 {
        return Err(EvalError::TooFewCategories(batch.categories.len()));
    }
    let position: HashMap<&str, usize> = batch.doc_ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
    let pool: HashSet<usize> = ranking
        .first_page_pool()
        .into_iter()
        .filter_map(|id| position.get(id).copied())
        .collect();
    let pools = batch.pools(Some(&pool));
    let mut report = if pools.iter().any(Vec::is_empty) {
        EvalReport {
            dataset_id: batch.dataset_id.clone(),
            categories: batch.categories.clone(),
            doc_count: batch.len(),
            mode: SearchMode::LdaRestricted,
            combinations_evaluated: 0,
            total_combinations: 0,
            best_combination: IndexMap::new(),
            max_accuracy: None,
            max_accuracy_include_reps: None,
            correct: 0,
            predicted: 0,
            seed: lda_seed,
            page_size: None,
            candidate_pool_size: None,
            failure: Some(SearchFailure::LdaMissingCategory),
        }
    } else {
        let outcome = run_search(batch, &pools, None, 0)?;
        report_from(batch, outcome, lda_seed)
    };
    report.mode = SearchMode::LdaRestricted;
    report.page_size = Some(ranking.page_size);
    report.candidate_pool_size = Some(pool.len());
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LengthBiasRow {
    pub rep_a: String,
    pub rep_b: String,
    pub len_a: usize,
    pub len_b: usize,
    /// `len_a / (len_a + len_b)`
    pub length_share: f64,
    pub predicted_a: usize,
    pub predicted_b: usize,
    /// `predicted_a / (predicted_a + predicted_b)`
    pub prediction_share: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LengthBiasReport {
    pub dataset_id: String,
    pub categories: Vec<String>,
    pub mode: SearchMode,
    pub combinations_evaluated: u64,
    pub total_combinations: u128,
    pub seed: Option<u64>,
    pub correlation: f64,
    pub rows: Vec<LengthBiasRow>,
}

/// Pearson correlation of two equally long samples.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64, EvalError> {
    assert_eq!(x.len(), y.len());
    let n = x.len() as f64;
    let mean = |v: &[f64]| v.iter().sum::<f64>() / n;
    let (mx, my) = (mean(x), mean(y));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 {
        return Err(EvalError::DegenerateVariance("length share"));
    }
    if syy == 0.0 {
        return Err(EvalError::DegenerateVariance("prediction share"));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

pub fn length_bias_analysis(batch: &EvalBatch, budget: u64, seed: u64) -> Result<LengthBiasReport, EvalError> {
    if batch.categories.len() != 2 {
        return Err(EvalError::NotTwoCategories(batch.categories.len()));
    }
    let pools = batch.pools(None);
    check_pools(batch, &pools)?;
    let total = total_combinations(&pools);
    let plan = Plan::new(total, Some(budget.max(1)), seed);
    let candidates: Vec<usize> = pools.iter().flatten().copied().collect();
    let scorer = Scorer::new(batch, &candidates);
    if scorer.active.len() <= 2 {
        return Err(EvalError::ZeroDenominator);
    }
    let scored = plan.for_each(|idx| {
        let mut reps = [0; 2];
        decode(idx, &pools, &mut reps);
        scorer.score(&reps)
    });
    let rows: Vec<LengthBiasRow> = scored
        .into_iter()
        .map(|(idx, score)| {
            let mut reps = [0; 2];
            decode(idx, &pools, &mut reps);
            let (len_a, len_b) = (batch.token_counts[reps[0]], batch.token_counts[reps[1]]);
            let [pa, pb] = score.per_category;
            LengthBiasRow {
                rep_a: batch.doc_ids[reps[0]].clone(),
                rep_b: batch.doc_ids[reps[1]].clone(),
                len_a,
                len_b,
                length_share: len_a as f64 / (len_a + len_b) as f64,
                predicted_a: pa,
                predicted_b: pb,
                prediction_share: pa as f64 / (pa + pb) as f64,
            }
        })
        .collect();
    let x: Vec<f64> = rows.iter().map(|r| r.length_share).collect();
    let y: Vec<f64> = rows.iter().map(|r| r.prediction_share).collect();
    let correlation = pearson(&x, &y)?;
    Ok(LengthBiasReport {
        dataset_id: batch.dataset_id.clone(),
        categories: batch.categories.clone(),
        mode: plan.mode(),
        combinations_evaluated: plan.len(),
        total_combinations: total,
        seed: (plan.mode() == SearchMode::Sampled).then_some(seed),
        correlation,
        rows,
    })
}

fn fmt_acc(acc: Option<f64>) -> String {
    acc.map_or_else(|| "--".to_string(), |a| format!("{a:.4}"))
}

/// Aligned text table, one row per report.
pub fn render_table(reports: &[EvalReport]) -> String {
    let header = ["Categories", "# docs", "Mode", "Evaluated", "Total", "Max acc.", "Max acc. (incl. reps)"];
    let rows: Vec<[String; 7]> = reports
        .iter()
        .map(|r| {
            [
                r.category_label(),
                r.doc_count.to_string(),
                match r.mode {
                    SearchMode::Exhaustive => "exhaustive",
                    SearchMode::Sampled => "sampled",
                    SearchMode::LdaRestricted => "lda_restricted",
                }
                .to_string(),
                r.combinations_evaluated.to_string(),
                r.total_combinations.to_string(),
                fmt_acc(r.max_accuracy),
                fmt_acc(r.max_accuracy_include_reps),
            ]
        })
        .collect();
    let mut widths = header.map(str::len);
    for row in &rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let mut out = String::new();
    let line = |out: &mut String, cells: &[&str]| {
        let mut first = true;
        for (cell, w) in cells.iter().zip(widths) {
            if !first {
                out.push_str("  ");
            }
            first = false;
            let _ = write!(out, "{cell:<w$}");
        }
        out.truncate(out.trim_end().len());
        out.push('\n');
    };
    line(&mut out, &header);
    let rule: Vec<String> = widths.iter().map(|&w| "-".repeat(w)).collect();
    line(&mut out, &rule.iter().map(String::as_str).collect::<Vec<_>>());
    for row in &rows {
        line(&mut out, &row.iter().map(String::as_str).collect::<Vec<_>>());
    }
    out
}
