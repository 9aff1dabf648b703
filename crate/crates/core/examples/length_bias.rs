//! How much does representative length skew predictions? Correlates each
//! pair's length share with the share of predictions its first category
//! receives.
//!
//!     cargo run --release --example length_bias [-- dataset.jsonl vectors.txt]

use fewshot::eval::{DEFAULT_BUDGET, DEFAULT_EVAL_SEED};
use fewshot::synthetic::{SyntheticCorpus, SyntheticSpec};
use fewshot::{build_unigram_model, embed_batch, length_bias_analysis, load_labeled_dataset, load_vectors, EvalBatch, SifConfig, StopWords, VectorFormat};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let (dataset, table, id) = match args.as_slice() {
        [data, vectors, ..] => (load_labeled_dataset(data, &StopWords::english())?, load_vectors(vectors, VectorFormat::Plain)?, data.clone()),
        _ => {
            // Noisy categories with a wide length range, so length matters.
            let spec = SyntheticSpec { docs_per_category: 60, purity: 0.25, doc_len: (3, 120), ..SyntheticSpec::default() };
            let corpus = SyntheticCorpus::generate(&spec);
            let table = corpus.table();
            (fewshot::corpus::dataset_from_records(corpus.records, &StopWords::english()), table, "synthetic".to_string())
        }
    };
    let docs = dataset.docs();
    let embs = embed_batch(&docs, &table, &build_unigram_model(&docs)?, SifConfig::default());
    let batch = EvalBatch::new(id, &dataset, embs.embeddings)?;

    let report = length_bias_analysis(&batch, DEFAULT_BUDGET, DEFAULT_EVAL_SEED)?;
    println!("{:?}: {:?} over {} combinations", report.categories, report.mode, report.combinations_evaluated);
    println!("pearson(length share, prediction share) = {:.4}", report.correlation);
    let mut rows = report.rows.clone();
    rows.sort_by(|a, b| a.length_share.total_cmp(&b.length_share));
    for r in [rows.first(), rows.get(rows.len() / 2), rows.last()].into_iter().flatten() {
        println!(
            "  {} ({} tokens) vs {} ({} tokens): {} / {} predictions",
            r.rep_a, r.len_a, r.rep_b, r.len_b, r.predicted_a, r.predicted_b
        );
    }
    Ok(())
}
