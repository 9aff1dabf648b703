//! Fit a topic model with one topic per category and list the first page
//! of candidate representatives for each topic.

use fewshot::synthetic::{SyntheticCorpus, SyntheticSpec};
use fewshot::{fit_lda, LdaConfig, StopWords};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let corpus = SyntheticCorpus::generate(&SyntheticSpec::default());
    let dataset = fewshot::corpus::dataset_from_records(corpus.records, &StopWords::english());
    let gold: std::collections::HashMap<_, _> = dataset.documents.iter().map(|d| (d.doc.id.clone(), d.gold_label.clone().unwrap())).collect();

    let cfg = LdaConfig::new(dataset.categories.len()).with_iterations(300);
    let model = fit_lda(&dataset.docs(), cfg)?;
    let ranking = model.rank_candidates(12);
    println!("k = {}, alpha = {}, beta = {}, {} sweeps, seed {}", cfg.k, cfg.alpha_lda, cfg.beta_lda, cfg.iterations, cfg.seed);
    for t in 0..model.k() {
        let words: Vec<&str> = model.top_words(t, 6).into_iter().map(|(w, _)| w).collect();
        println!("\ntopic {t}: {}", words.join(" "));
        for r in ranking.first_page(t) {
            println!("  {:<14} theta {:.3}  (actually {})", r.doc_id, r.prob, gold[&r.doc_id]);
        }
    }
    println!("\n{} page(s) per topic list", ranking.page_count());
    Ok(())
}
