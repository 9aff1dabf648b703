//! Seeded synthetic corpora with matching word vectors.
//!
//! Each category owns a block of pseudo-words whose vectors cluster around a
//! random category direction; a shared block of background words is spread
//! around the origin. Documents mix their category's words with background
//! words, so the usual pipeline separates them well but not perfectly. Used
//! by the examples and tests; nothing here is needed for real data.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Zipf};

use crate::corpus::DocumentRecord;
use crate::wordvec::WordVectorTable;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub categories: Vec<String>,
    pub docs_per_category: usize,
    pub words_per_category: usize,
    pub shared_words: usize,
    pub dim: usize,
    /// Inclusive token-count range per document.
    pub doc_len: (usize, usize),
    /// Probability that a token comes from the document's own category.
    pub purity: f64,
    /// Spread of word vectors around their category direction.
    pub word_noise: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            categories: vec!["autos".into(), "baseball".into()],
            docs_per_category: 20,
            words_per_category: 40,
            shared_words: 60,
            dim: 16,
            doc_len: (8, 40),
            purity: 0.5,
            word_noise: 1.0,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub records: Vec<DocumentRecord>,
    pub vectors: Vec<(String, Vec<f64>)>,
}

/// Deterministic letters-only pseudo-word: a two-letter prefix and the index
/// spelled in base 26. Always at least four letters, so never a stop word.
pub fn pseudo_word(prefix: &str, mut index: usize) -> String {
    let mut tail = Vec::new();
    loop {
        tail.push(b'a' + (index % 26) as u8);
        index /= 26;
        if index == 0 {
            break;
        }
    }
    while tail.len() < 2 {
        tail.push(b'a');
    }
    tail.reverse();
    format!("{prefix}{}", String::from_utf8(tail).expect("ascii"))
}

fn category_prefix(c: usize) -> String {
    let a = (b'a' + (c / 26) as u8 % 26) as char;
    let b = (b'a' + (c % 26) as u8) as char;
    format!("q{a}{b}")
}

impl SyntheticCorpus {
    pub fn generate(spec: &SyntheticSpec) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let normal = Normal::new(0.0, 1.0).expect("unit normal");
        let gauss = |rng: &mut ChaCha8Rng, n: usize, scale: f64| -> Vec<f64> {
            (0..n).map(|_| normal.sample(rng) * scale).collect()
        };

        let mut vectors = Vec::new();
        let mut category_words: Vec<Vec<String>> = Vec::new();
        for c in 0..spec.categories.len() {
            let center = gauss(&mut rng, spec.dim, 1.0);
            let prefix = category_prefix(c);
            let mut words = Vec::new();
            for i in 0..spec.words_per_category {
                let w = pseudo_word(&prefix, i);
                let noise = gauss(&mut rng, spec.dim, spec.word_noise);
                vectors.push((w.clone(), center.iter().zip(noise).map(|(a, b)| a + b).collect()));
                words.push(w);
            }
            category_words.push(words);
        }
        let mut shared = Vec::new();
        for i in 0..spec.shared_words {
            let w = pseudo_word("zz", i);
            vectors.push((w.clone(), gauss(&mut rng, spec.dim, 1.0)));
            shared.push(w);
        }

        let zipf = |n: usize| Zipf::new(n.max(1) as f64, 1.1).expect("valid zipf");
        let own_dist = zipf(spec.words_per_category);
        let shared_dist = zipf(spec.shared_words);
        let mut records = Vec::new();
        for d in 0..spec.docs_per_category {
            for (c, name) in spec.categories.iter().enumerate() {
                let len = rng.random_range(spec.doc_len.0..=spec.doc_len.1.max(spec.doc_len.0));
                let mut words = Vec::with_capacity(len);
                for _ in 0..len {
                    let own = spec.shared_words == 0 || rng.random_bool(spec.purity.clamp(0.0, 1.0));
                    let word = if own {
                        let i = own_dist.sample(&mut rng) as usize - 1;
                        &category_words[c][i.min(spec.words_per_category - 1)]
                    } else {
                        let i = shared_dist.sample(&mut rng) as usize - 1;
                        &shared[i.min(spec.shared_words - 1)]
                    };
                    words.push(word.as_str());
                }
                records.push(DocumentRecord {
                    id: format!("{name}-{d:04}"),
                    text: words.join(" "),
                    label: Some(name.clone()),
                });
            }
        }
        Self { records, vectors }
    }

    pub fn table(&self) -> WordVectorTable {
        WordVectorTable::from_entries("synthetic", self.vectors.iter().cloned()).expect("generated vectors are consistent")
    }

    /// The records in dataset (JSON lines) format.
    pub fn dataset_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("record serializes"));
            out.push('\n');
        }
        out
    }

    /// The vectors in plain (GloVe) text format.
    pub fn vectors_text(&self) -> String {
        let mut out = String::new();
        for (w, v) in &self.vectors {
            out.push_str(w);
            for x in v {
                let _ = write!(out, " {x}");
            }
            out.push('\n');
        }
        out
    }

    /// Writes `dataset.jsonl` and `vectors.txt` into `dir`.
    pub fn write_to(&self, dir: impl AsRef<Path>) -> io::Result<(PathBuf, PathBuf)> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        let data = dir.join("dataset.jsonl");
        let vectors = dir.join("vectors.txt");
        fs::write(&data, self.dataset_jsonl())?;
        fs::write(&vectors, self.vectors_text())?;
        Ok((data, vectors))
    }
}
