//! Shared helpers and naive reference implementations for the integration
//! tests. The reference code is written for clarity, not speed, and does not
//! call into the library's embedding, classification or search code.

#![allow(dead_code)]

use std::collections::HashMap;

use fewshot::corpus::{dataset_from_records, DocumentRecord};
use fewshot::synthetic::{SyntheticCorpus, SyntheticSpec};
use fewshot::{build_unigram_model, embed_batch, EvalBatch, LabeledDataset, SifConfig, StopWords, UnigramModel, WordVectorTable};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Smooth-inverse-frequency average of the token vectors, straight from the
/// definition: sum over embeddable occurrences of a/(a+p(w)) v_w, divided by
/// the number of such occurrences. `None` when nothing is embeddable.
pub fn naive_sif(tokens: &[String], vectors: &HashMap<String, Vec<f64>>, probs: &HashMap<String, f64>, alpha: f64) -> Option<Vec<f64>> {
    let dim = vectors.values().next()?.len();
    let mut total = vec![0.0; dim];
    let mut n = 0usize;
    for t in tokens {
        if let Some(v) = vectors.get(t) {
            let p = probs.get(t).copied().unwrap_or(0.0);
            let w = alpha / (alpha + p);
            for i in 0..dim {
                total[i] += w * v[i];
            }
            n += 1;
        }
    }
    if n == 0 {
        return None;
    }
    Some(total.into_iter().map(|x| x / n as f64).collect())
}

pub fn naive_cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

/// Word probabilities counted directly from the token lists.
pub fn naive_probs(docs: &[Vec<String>]) -> HashMap<String, f64> {
    let mut counts: HashMap<String, f64> = HashMap::new();
    let mut total = 0.0;
    for d in docs {
        for t in d {
            *counts.entry(t.clone()).or_default() += 1.0;
            total += 1.0;
        }
    }
    counts.values_mut().for_each(|c| *c /= total);
    counts
}

/// Brute-force maximum one-shot accuracy: for every way to pick one
/// document per category (lexicographic in doc ids), re-embed everything,
/// classify every other embeddable document by nearest representative, and
/// keep the first combination with the most correct predictions.
pub struct NaiveBest {
    pub accuracy: f64,
    pub representatives: Vec<String>,
    pub combinations: usize,
}

pub fn naive_search(
    ids: &[String],
    tokens: &[Vec<String>],
    gold: &[String],
    categories: &[String],
    vectors: &HashMap<String, Vec<f64>>,
    alpha: f64,
) -> Option<NaiveBest> {
    let probs = naive_probs(tokens);
    let mut pools: Vec<Vec<usize>> = vec![Vec::new(); categories.len()];
    for i in 0..ids.len() {
        let v = naive_sif(&tokens[i], vectors, &probs, alpha);
        let usable = v.is_some_and(|v| v.iter().any(|&x| x != 0.0));
        if usable {
            let c = categories.iter().position(|c| *c == gold[i]).unwrap();
            pools[c].push(i);
        }
    }
    for p in &mut pools {
        p.sort_by(|&a, &b| ids[a].cmp(&ids[b]));
    }
    if pools.iter().any(Vec::is_empty) {
        return None;
    }
    let mut best: Option<NaiveBest> = None;
    let mut counter = vec![0usize; pools.len()];
    let mut combinations = 0;
    loop {
        combinations += 1;
        let reps: Vec<usize> = counter.iter().zip(&pools).map(|(&i, p)| p[i]).collect();
        // Re-embed from scratch for this combination.
        let embs: Vec<Option<Vec<f64>>> = tokens.iter().map(|t| naive_sif(t, vectors, &probs, alpha)).collect();
        let protos: Vec<&Vec<f64>> = reps.iter().map(|&r| embs[r].as_ref().unwrap()).collect();
        let (mut correct, mut predicted) = (0usize, 0usize);
        for (i, e) in embs.iter().enumerate() {
            let Some(e) = e else { continue };
            if reps.contains(&i) || e.iter().all(|&x| x == 0.0) {
                continue;
            }
            let sims: Vec<f64> = protos.iter().map(|p| naive_cosine(e, p)).collect();
            let mut c = 0;
            for j in 1..sims.len() {
                if sims[j] > sims[c] {
                    c = j;
                }
            }
            predicted += 1;
            if categories[c] == gold[i] {
                correct += 1;
            }
        }
        let acc = correct as f64 / predicted as f64;
        if best.as_ref().is_none_or(|b| acc > b.accuracy) {
            best = Some(NaiveBest {
                accuracy: acc,
                representatives: reps.iter().map(|&r| ids[r].clone()).collect(),
                combinations: 0,
            });
        }
        // Advance the odometer, last category fastest.
        let mut pos = pools.len();
        loop {
            if pos == 0 {
                let mut b = best.unwrap();
                b.combinations = combinations;
                return Some(b);
            }
            pos -= 1;
            counter[pos] += 1;
            if counter[pos] < pools[pos].len() {
                break;
            }
            counter[pos] = 0;
        }
    }
}

/// A small random labeled instance: a handful of words with random
/// vectors (a few tokens are out of vocabulary) and short documents.
pub struct RandomInstance {
    pub records: Vec<DocumentRecord>,
    pub vectors: HashMap<String, Vec<f64>>,
    pub categories: Vec<String>,
}

pub fn random_instance(seed: u64) -> RandomInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = rng.random_range(2..=3usize);
    let dim = rng.random_range(2..=5usize);
    let words: Vec<String> = (0..rng.random_range(6..=14usize)).map(|i| format!("w{}", (b'a' + i as u8) as char).repeat(2)).collect();
    let mut vectors = HashMap::new();
    for w in words.iter().skip(1) {
        vectors.insert(w.clone(), (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect());
    }
    let categories: Vec<String> = (0..k).map(|c| format!("cat{}", (b'a' + c as u8) as char)).collect();
    let per_cat = if k == 2 { rng.random_range(2..=12usize) } else { rng.random_range(2..=6usize) };
    let mut records = Vec::new();
    let mut n = 0;
    for c in &categories {
        for _ in 0..per_cat {
            let len = rng.random_range(1..=6usize);
            let text: Vec<&str> = (0..len).map(|_| words[rng.random_range(0..words.len())].as_str()).collect();
            records.push(DocumentRecord {
                id: format!("doc{:03}", rng.random_range(0..1000) * 10 + n % 10),
                text: text.join(" "),
                label: Some(c.clone()),
            });
            n += 1;
        }
    }
    // Unique ids in a shuffled order.
    let mut seen = std::collections::HashSet::new();
    records.retain(|r| seen.insert(r.id.clone()));
    RandomInstance { records, vectors, categories }
}

impl RandomInstance {
    pub fn table(&self) -> WordVectorTable {
        let mut entries: Vec<_> = self.vectors.iter().map(|(w, v)| (w.clone(), v.clone())).collect();
        entries.sort_by(|a, b| a.0.cmp(&b.0));
        WordVectorTable::from_entries("random", entries).unwrap()
    }

    pub fn dataset(&self) -> LabeledDataset {
        dataset_from_records(self.records.clone(), &StopWords::english())
    }
}

pub fn eval_batch_for(dataset: &LabeledDataset, table: &WordVectorTable, alpha: f64) -> (UnigramModel, EvalBatch) {
    let docs = dataset.docs();
    let unigram = build_unigram_model(&docs).unwrap();
    let embs = embed_batch(&docs, table, &unigram, SifConfig::new(alpha).unwrap());
    let batch = EvalBatch::new("test", dataset, embs.embeddings).unwrap();
    (unigram, batch)
}

pub fn synthetic(spec: &SyntheticSpec) -> (SyntheticCorpus, LabeledDataset, WordVectorTable) {
    let corpus = SyntheticCorpus::generate(spec);
    let dataset = dataset_from_records(corpus.records.clone(), &StopWords::english());
    let table = corpus.table();
    (corpus, dataset, table)
}
