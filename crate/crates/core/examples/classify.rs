//! Classify a batch from one or two labeled examples per category.

use std::collections::HashMap;

use fewshot::classify::Selection;
use fewshot::synthetic::{SyntheticCorpus, SyntheticSpec};
use fewshot::{accuracy, build_prototypes, build_unigram_model, classify_batch, embed_batch, AccuracyConvention, SifConfig, StopWords};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let corpus = SyntheticCorpus::generate(&SyntheticSpec::default());
    let dataset = fewshot::corpus::dataset_from_records(corpus.records.clone(), &StopWords::english());
    let docs = dataset.docs();
    let embs = embed_batch(&docs, &corpus.table(), &build_unigram_model(&docs)?, SifConfig::default()).embeddings;
    let gold: HashMap<String, String> = dataset.documents.iter().map(|d| (d.doc.id.clone(), d.gold_label.clone().unwrap())).collect();

    let selections: [Selection; 2] = [
        [("autos", vec!["autos-0000"]), ("baseball", vec!["baseball-0000"])],
        [("autos", vec!["autos-0000", "autos-0001"]), ("baseball", vec!["baseball-0000", "baseball-0001"])],
    ]
    .map(|s| s.into_iter().map(|(c, ids)| (c.to_string(), ids.into_iter().map(String::from).collect())).collect());

    for selection in &selections {
        let prototypes = build_prototypes(selection, &embs[..])?;
        let result = classify_batch(&embs, &prototypes, &prototypes.representative_ids());
        let acc = accuracy(&result.predictions, &gold, selection, AccuracyConvention::ExcludeReps)?;
        let with_reps = accuracy(&result.predictions, &gold, selection, AccuracyConvention::IncludeReps)?;
        println!("{selection:?}");
        println!("  {} predictions, accuracy {acc:.4} ({with_reps:.4} counting representatives)", result.predictions.len());
        let least_sure = result.predictions.iter().min_by(|a, b| a.margin.total_cmp(&b.margin)).unwrap();
        println!("  least certain: {} -> {} (score {:.3}, margin {:.4})", least_sure.doc_id, least_sure.category, least_sure.score, least_sure.margin);
    }
    Ok(())
}
