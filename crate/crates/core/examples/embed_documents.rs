//! Smooth inverse frequency document embeddings.

use fewshot::corpus::Document;
use fewshot::synthetic::{SyntheticCorpus, SyntheticSpec};
use fewshot::{build_unigram_model, cosine_similarity, embed_batch, embed_document, sif_weight, SifConfig, UnigramModel, WordVectorTable};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = SifConfig::default();
    for p in [0.0, 1e-4, 1e-3, 1e-2, 0.1] {
        println!("weight at p={p:<7} {:.4}", sif_weight(p, cfg));
    }

    // Hand-sized example: "the" is frequent and gets almost no weight.
    let table = WordVectorTable::from_entries(
        "tiny",
        [("engine", vec![1.0, 0.0]), ("inning", vec![0.0, 1.0]), ("the", vec![0.7, 0.7])].map(|(w, v)| (w.to_string(), v)),
    )?;
    let unigram = UnigramModel::from_counts([("engine", 2u64), ("inning", 2), ("the", 96)])?;
    let doc = Document::from_tokens("d", ["the", "engine", "the", "turbo"]);
    let (e, skipped) = embed_document(&doc, &table, &unigram, cfg);
    println!("\n{:?} -> {:?} ({} embedded, {skipped} skipped)", doc.tokens, e.vector, e.embedded_token_count);

    // A seeded synthetic batch.
    let corpus = SyntheticCorpus::generate(&SyntheticSpec::default());
    let dataset = fewshot::corpus::dataset_from_records(corpus.records.clone(), &fewshot::StopWords::english());
    let docs = dataset.docs();
    let batch = embed_batch(&docs, &corpus.table(), &build_unigram_model(&docs)?, cfg);
    println!("\nembedded {} documents, {} empty", batch.embeddings.len(), batch.empty_count());
    let (a, b, c) = (&batch.embeddings[0], &batch.embeddings[2], &batch.embeddings[1]);
    println!("cos({}, {}) = {:.3}", a.doc_id, b.doc_id, cosine_similarity(&a.vector, &b.vector)?);
    println!("cos({}, {}) = {:.3}", a.doc_id, c.doc_id, cosine_similarity(&a.vector, &c.vector)?);
    Ok(())
}
