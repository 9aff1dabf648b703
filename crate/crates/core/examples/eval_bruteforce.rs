//! Maximum achievable one-shot accuracy by trying every pair of
//! representatives (or a seeded sample when there are too many).
//!
//!     cargo run --release --example eval_bruteforce [-- dataset.jsonl vectors.txt]

use fewshot::eval::{render_table, DEFAULT_BUDGET, DEFAULT_EVAL_SEED};
use fewshot::synthetic::{SyntheticCorpus, SyntheticSpec};
use fewshot::{build_unigram_model, embed_batch, load_labeled_dataset, load_vectors, search_max_one_shot, EvalBatch, SifConfig, StopWords, VectorFormat};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let (dataset, table, id) = match args.as_slice() {
        [data, vectors, ..] => (load_labeled_dataset(data, &StopWords::english())?, load_vectors(vectors, VectorFormat::Plain)?, data.clone()),
        _ => {
            let corpus = SyntheticCorpus::generate(&SyntheticSpec { docs_per_category: 60, ..SyntheticSpec::default() });
            let table = corpus.table();
            (fewshot::corpus::dataset_from_records(corpus.records, &StopWords::english()), table, "synthetic".to_string())
        }
    };
    let docs = dataset.docs();
    let embs = embed_batch(&docs, &table, &build_unigram_model(&docs)?, SifConfig::default());
    let batch = EvalBatch::new(id, &dataset, embs.embeddings)?;

    let exhaustive = search_max_one_shot(&batch, DEFAULT_BUDGET, DEFAULT_EVAL_SEED)?;
    let sampled = search_max_one_shot(&batch, 500, DEFAULT_EVAL_SEED)?;
    print!("{}", render_table(&[exhaustive.clone(), sampled]));
    println!("\nbest representatives: {:?}", exhaustive.best_combination);
    Ok(())
}
