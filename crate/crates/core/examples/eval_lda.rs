//! Maximum one-shot accuracy when representatives may only come from the
//! first page of topic-model candidates, for several topic-model seeds.
//!
//!     cargo run --release --example eval_lda [-- dataset.jsonl vectors.txt]

use fewshot::eval::{render_table, search_ranked, DEFAULT_BUDGET, DEFAULT_EVAL_SEED};
use fewshot::synthetic::{SyntheticCorpus, SyntheticSpec};
use fewshot::topics::{CandidateRanking, RankedDocument};
use fewshot::{
    build_unigram_model, embed_batch, fit_lda, load_labeled_dataset, load_vectors, search_lda_restricted, search_max_one_shot, EvalBatch, LdaConfig,
    SifConfig, StopWords, VectorFormat,
};

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

    let mut reports = vec![search_max_one_shot(&batch, DEFAULT_BUDGET, DEFAULT_EVAL_SEED)?];
    for seed in 42..47 {
        let model = fit_lda(&docs, LdaConfig::new(dataset.categories.len()).with_seed(seed))?;
        reports.push(search_lda_restricted(&batch, &model, 12)?);
    }

    // When the candidate pages miss a category there is no result ("--").
    let one_sided: Vec<RankedDocument> = batch
        .doc_ids
        .iter()
        .zip(&batch.gold)
        .filter(|(_, &g)| g == 0)
        .take(12)
        .map(|(id, _)| RankedDocument { doc_id: id.clone(), prob: 1.0 })
        .collect();
    let ranking = CandidateRanking { page_size: 12, topics: vec![one_sided; 2], unrankable: vec![] };
    reports.push(search_ranked(&batch, &ranking, None)?);

    print!("{}", render_table(&reports));
    Ok(())
}
