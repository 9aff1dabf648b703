//! LDA by collapsed Gibbs sampling, and ranking of documents per topic.
//!
//! The topic count equals the number of categories the user asked for. After
//! fitting, each document is assigned to its most probable topic and each
//! topic's documents are ordered by that probability, so the first page of
//! every topic is a short list of likely representatives.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Document;

pub const DEFAULT_BETA_LDA: f64 = 0.01;
pub const DEFAULT_ITERATIONS: usize = 1000;
pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_PAGE_SIZE: usize = 12;

#[derive(Debug, Error, PartialEq)]
pub enum TopicsError {
    #[error("topic count must be at least 2, got {0}")]
    TooFewTopics(usize),
    #[error("iterations must be at least 1")]
    NoIterations,
    #[error("priors must be positive and finite (alpha {alpha}, beta {beta})")]
    BadPrior { alpha: f64, beta: f64 },
    #[error("need at least {k} non-empty documents, found {found}")]
    TooFewDocuments { k: usize, found: usize },
    #[error("vocabulary is empty")]
    EmptyVocabulary,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LdaConfig {
    pub k: usize,
    pub alpha_lda: f64,
    pub beta_lda: f64,
    pub iterations: usize,
    pub seed: u64,
}

impl LdaConfig {
    /// Defaults: `alpha = 50 / k`, `beta = 0.01`, 1000 sweeps.
    pub fn new(k: usize) -> Self {
        Self {
            k,
            alpha_lda: 50.0 / k.max(1) as f64,
            beta_lda: DEFAULT_BETA_LDA,
            iterations: DEFAULT_ITERATIONS,
            seed: DEFAULT_SEED,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_iterations(mut self, iterations: usize) -> Self {
        self.iterations = iterations;
        self
    }

    pub fn validate(&self) -> Result<(), TopicsError> {
        if self.k < 2 {
            return Err(TopicsError::TooFewTopics(self.k));
        }
        self.validate_common()
    }

    fn validate_common(&self) -> Result<(), TopicsError> {
        if self.iterations == 0 {
            return Err(TopicsError::NoIterations);
        }
        let ok = |x: f64| x.is_finite() && x > 0.0;
        if !ok(self.alpha_lda) || !ok(self.beta_lda) {
            return Err(TopicsError::BadPrior {
                alpha: self.alpha_lda,
                beta: self.beta_lda,
            });
        }
        Ok(())
    }
}

/// Collapsed Gibbs sampler state. [`fit_lda`] drives it to completion;
/// use it directly to inspect counts between sweeps.
pub struct GibbsSampler {
    cfg: LdaConfig,
    vocab: Vec<String>,
    doc_ids: Vec<String>,
    unrankable: Vec<String>,
    words: Vec<Vec<u32>>,
    assignments: Vec<Vec<u32>>,
    // n_{d,t}: doc-major, k entries per document
    doc_topic: Vec<u32>,
    // n_{t,w}: word-major, k entries per word
    word_topic: Vec<u32>,
    // n_t
    topic_totals: Vec<u32>,
    rng: ChaCha8Rng,
    sweeps_done: usize,
}

impl GibbsSampler {
    pub fn new(docs: &[Document], cfg: LdaConfig) -> Result<Self, TopicsError> {
        cfg.validate()?;
        Self::new_unchecked(docs, cfg)
    }

    fn new_unchecked(docs: &[Document], cfg: LdaConfig) -> Result<Self, TopicsError> {
        cfg.validate_common()?;
        let k = cfg.k;
        let mut vocab = Vec::new();
        let mut index: HashMap<&str, u32> = HashMap::new();
        let mut doc_ids = Vec::new();
        let mut unrankable = Vec::new();
        let mut words = Vec::new();
        for doc in docs {
            if doc.tokens.is_empty() {
                unrankable.push(doc.id.clone());
                continue;
            }
            let ids: Vec<u32> = doc
                .tokens
                .iter()
                .map(|tok| {
                    *index.entry(tok.as_str()).or_insert_with(|| {
                        vocab.push(tok.clone());
                        (vocab.len() - 1) as u32
                    })
                })
                .collect();
            doc_ids.push(doc.id.clone());
            words.push(ids);
        }
        if vocab.is_empty() {
            return Err(TopicsError::EmptyVocabulary);
        }
        if doc_ids.len() < k {
            return Err(TopicsError::TooFewDocuments {
                k,
                found: doc_ids.len(),
            });
        }

        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut doc_topic = vec![0u32; doc_ids.len() * k];
        let mut word_topic = vec![0u32; vocab.len() * k];
        let mut topic_totals = vec![0u32; k];
        let assignments = words
            .iter()
            .enumerate()
            .map(|(d, ws)| {
                ws.iter()
                    .map(|&w| {
                        let t = rng.random_range(0..k);
                        doc_topic[d * k + t] += 1;
                        word_topic[w as usize * k + t] += 1;
                        topic_totals[t] += 1;
                        t as u32
                    })
                    .collect()
            })
            .collect();

        Ok(Self {
            cfg,
            vocab,
            doc_ids,
            unrankable,
            words,
            assignments,
            doc_topic,
            word_topic,
            topic_totals,
            rng,
            sweeps_done: 0,
        })
    }

    /// Resamples every token's topic once.
    pub fn sweep(&mut self) {
        let k = self.cfg.k;
        let alpha = self.cfg.alpha_lda;
        let beta = self.cfg.beta_lda;
        let v_beta = self.vocab.len() as f64 * beta;
        let mut cumulative = vec![0.0f64; k];

        for d in 0..self.words.len() {
            for i in 0..self.words[d].len() {
                let w = self.words[d][i] as usize;
                let old = self.assignments[d][i] as usize;
                self.doc_topic[d * k + old] -= 1;
                self.word_topic[w * k + old] -= 1;
                self.topic_totals[old] -= 1;

                let mut total = 0.0;
                for t in 0..k {
                    let p = (self.doc_topic[d * k + t] as f64 + alpha) * (self.word_topic[w * k + t] as f64 + beta)
                        / (self.topic_totals[t] as f64 + v_beta);
                    total += p;
                    cumulative[t] = total;
                }
                let u = self.rng.random::<f64>() * total;
                let new = cumulative.iter().position(|&c| u < c).unwrap_or(k - 1);

                self.doc_topic[d * k + new] += 1;
                self.word_topic[w * k + new] += 1;
                self.topic_totals[new] += 1;
                self.assignments[d][i] = new as u32;
            }
        }
        self.sweeps_done += 1;
    }

    pub fn sweeps_done(&self) -> usize {
        self.sweeps_done
    }

    pub fn k(&self) -> usize {
        self.cfg.k
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    pub fn doc_count(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn doc_len(&self, d: usize) -> usize {
        self.words[d].len()
    }

    pub fn doc_topic_count(&self, d: usize, t: usize) -> u32 {
        self.doc_topic[d * self.cfg.k + t]
    }

    pub fn topic_word_count(&self, t: usize, w: usize) -> u32 {
        self.word_topic[w * self.cfg.k + t]
    }

    pub fn topic_total(&self, t: usize) -> u32 {
        self.topic_totals[t]
    }

    pub fn assignments(&self) -> &[Vec<u32>] {
        &self.assignments
    }

    /// Point estimates from the current sample.
    pub fn into_model(self) -> TopicModel {
        let k = self.cfg.k;
        let alpha = self.cfg.alpha_lda;
        let beta = self.cfg.beta_lda;
        let v = self.vocab.len();
        let theta = (0..self.doc_ids.len())
            .map(|d| {
                let denom = self.words[d].len() as f64 + k as f64 * alpha;
                (0..k)
                    .map(|t| (self.doc_topic[d * k + t] as f64 + alpha) / denom)
                    .collect()
            })
            .collect();
        let phi = (0..k)
            .map(|t| {
                let denom = self.topic_totals[t] as f64 + v as f64 * beta;
                (0..v)
                    .map(|w| (self.word_topic[w * k + t] as f64 + beta) / denom)
                    .collect()
            })
            .collect();
        TopicModel {
            doc_ids: self.doc_ids,
            unrankable: self.unrankable,
            vocab: self.vocab,
            theta,
            phi,
            assignments: self.assignments,
            config: self.cfg,
        }
    }
}

/// A fitted model. Rows of `theta` follow `doc_ids`; documents without
/// tokens are left out of the fit and listed in `unrankable`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicModel {
    pub doc_ids: Vec<String>,
    pub unrankable: Vec<String>,
    pub vocab: Vec<String>,
    pub theta: Vec<Vec<f64>>,
    pub phi: Vec<Vec<f64>>,
    pub assignments: Vec<Vec<u32>>,
    pub config: LdaConfig,
}

/// Fits LDA on the non-empty documents of `docs`. Deterministic for a fixed
/// document order and config.
pub fn fit_lda(docs: &[Document], cfg: LdaConfig) -> Result<TopicModel, TopicsError> {
    run(GibbsSampler::new(docs, cfg)?)
}

fn run(mut sampler: GibbsSampler) -> Result<TopicModel, TopicsError> {
    for _ in 0..sampler.cfg.iterations {
        sampler.sweep();
    }
    Ok(sampler.into_model())
}

/// Index of the largest entry; the lowest index wins ties.
pub fn argmax_topic(row: &[f64]) -> usize {
    let mut best = 0;
    for (t, &p) in row.iter().enumerate().skip(1) {
        if p > row[best] {
            best = t;
        }
    }
    best
}

impl TopicModel {
    pub fn k(&self) -> usize {
        self.config.k
    }

    /// Most probable topic per fitted document, aligned with `doc_ids`.
    pub fn assign_topics(&self) -> Vec<usize> {
        self.theta.iter().map(|row| argmax_topic(row)).collect()
    }

    /// The `n` most probable words of topic `t`.
    pub fn top_words(&self, t: usize, n: usize) -> Vec<(&str, f64)> {
        let mut words: Vec<(&str, f64)> = self.vocab.iter().map(String::as_str).zip(self.phi[t].iter().copied()).collect();
        words.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        words.truncate(n);
        words
    }

    pub fn rank_candidates(&self, page_size: usize) -> CandidateRanking {
        let mut topics: Vec<Vec<RankedDocument>> = vec![Vec::new(); self.k()];
        for (d, t) in self.assign_topics().into_iter().enumerate() {
            topics[t].push(RankedDocument {
                doc_id: self.doc_ids[d].clone(),
                prob: self.theta[d][t],
            });
        }
        for list in &mut topics {
            sort_ranked(list);
        }
        CandidateRanking {
            page_size: page_size.max(1),
            topics,
            unrankable: self.unrankable.clone(),
        }
    }
}

fn sort_ranked(list: &mut [RankedDocument]) {
    list.sort_by(|a, b| b.prob.total_cmp(&a.prob).then_with(|| a.doc_id.cmp(&b.doc_id)));
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedDocument {
    pub doc_id: String,
    pub prob: f64,
}

/// Per-topic document lists, most probable first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateRanking {
    pub page_size: usize,
    pub topics: Vec<Vec<RankedDocument>>,
    pub unrankable: Vec<String>,
}

impl CandidateRanking {
    /// Entries `[page * page_size, (page + 1) * page_size)` of topic `t`.
    pub fn page(&self, t: usize, page: usize) -> &[RankedDocument] {
        let list = &self.topics[t];
        let start = page.saturating_mul(self.page_size).min(list.len());
        let end = start.saturating_add(self.page_size).min(list.len());
        &list[start..end]
    }

    pub fn first_page(&self, t: usize) -> &[RankedDocument] {
        self.page(t, 0)
    }

    /// Number of pages needed to show the longest topic list.
    pub fn page_count(&self) -> usize {
        let longest = self.topics.iter().map(Vec::len).max().unwrap_or(0);
        longest.div_ceil(self.page_size)
    }

    /// Union of every topic's first page, in topic order.
    pub fn first_page_pool(&self) -> Vec<&str> {
        (0..self.topics.len())
            .flat_map(|t| self.first_page(t).iter().map(|r| r.doc_id.as_str()))
            .collect()
    }
}
