//! Document cleaning and the batch unigram model.

use fewshot::corpus::{parse_dataset, Document};
use fewshot::{build_unigram_model, clean_tokenize, StopWords};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let stop = StopWords::english();
    let text = "The Yankees' pitcher threw 98-mph fastballs in the 9th inning!";
    println!("{text}\n  -> {:?}", clean_tokenize(text, &stop));
    println!("{} stop words bundled", stop.len());

    let jsonl = r#"{"id": "a1", "text": "New brakes and a new clutch for the old sedan", "label": "autos"}
{"id": "b1", "text": "The pitcher walked two batters in the ninth inning", "label": "baseball"}
{"id": "x9", "text": "It is what it is"}
"#;
    let dataset = parse_dataset(jsonl, &stop)?;
    println!("\ncategories: {:?}, fully labeled: {}", dataset.categories, dataset.is_fully_labeled());
    for d in &dataset.documents {
        println!("  {} [{}] {:?}", d.doc.id, d.gold_label.as_deref().unwrap_or("-"), d.doc.tokens);
    }

    let docs: Vec<Document> = dataset.docs();
    let unigram = build_unigram_model(&docs)?;
    println!("\n{} tokens, {} distinct", unigram.total_tokens(), unigram.vocab_size());
    let mut probs: Vec<(&str, f64)> = unigram.iter().collect();
    probs.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(b.0)));
    for (w, p) in probs.iter().take(5) {
        println!("  p({w}) = {p:.4}");
    }
    Ok(())
}
