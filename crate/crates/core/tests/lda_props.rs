use fewshot::corpus::Document;
use fewshot::topics::{argmax_topic, GibbsSampler, TopicsError};
use fewshot::{fit_lda, LdaConfig};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_docs(seed: u64, n: usize, vocab: usize) -> Vec<Document> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let len = rng.random_range(0..25);
            Document::from_tokens(format!("d{i:02}"), (0..len).map(|_| format!("w{}", rng.random_range(0..vocab))))
        })
        .collect()
}

/// Two groups of 10 documents, 20 tokens each, over disjoint vocabularies.
fn disjoint_groups(seed: u64) -> Vec<Document> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut docs = Vec::new();
    for i in 0..20 {
        let group = if i % 2 == 0 { "left" } else { "right" };
        let tokens: Vec<String> = (0..20).map(|_| format!("{group}{}", rng.random_range(0..15))).collect();
        docs.push(Document::from_tokens(format!("{group}-{i:02}"), tokens));
    }
    docs
}

#[test]
fn counts_are_conserved_after_every_sweep() {
    let docs = random_docs(3, 30, 40);
    let cfg = LdaConfig::new(3).with_seed(9).with_iterations(25);
    let mut sampler = GibbsSampler::new(&docs, cfg).unwrap();
    for _ in 0..25 {
        sampler.sweep();
        for d in 0..sampler.doc_count() {
            let sum: u32 = (0..sampler.k()).map(|t| sampler.doc_topic_count(d, t)).sum();
            assert_eq!(sum as usize, sampler.doc_len(d));
            assert_eq!(sampler.assignments()[d].len(), sampler.doc_len(d));
        }
        for t in 0..sampler.k() {
            let sum: u32 = (0..sampler.vocab_size()).map(|w| sampler.topic_word_count(t, w)).sum();
            assert_eq!(sum, sampler.topic_total(t));
        }
        let total: u32 = (0..sampler.k()).map(|t| sampler.topic_total(t)).sum();
        assert_eq!(total as usize, (0..sampler.doc_count()).map(|d| sampler.doc_len(d)).sum::<usize>());
    }
    assert_eq!(sampler.sweeps_done(), 25);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn rows_are_normalized_and_positive(seed in 0u64..1000, k in 2usize..5, n in 5usize..25) {
        let docs = random_docs(seed, n, 30);
        prop_assume!(docs.iter().filter(|d| d.token_count() > 0).count() >= k);
        let model = fit_lda(&docs, LdaConfig::new(k).with_seed(seed).with_iterations(30)).unwrap();
        prop_assert_eq!(model.doc_ids.len() + model.unrankable.len(), docs.len());
        for row in model.theta.iter().chain(&model.phi) {
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            prop_assert!(row.iter().all(|&p| p > 0.0));
        }
        let ranking = model.rank_candidates(12);
        let listed: usize = ranking.topics.iter().map(Vec::len).sum();
        prop_assert_eq!(listed, model.doc_ids.len());
        for list in &ranking.topics {
            for pair in list.windows(2) {
                prop_assert!(pair[0].prob >= pair[1].prob);
            }
        }
    }

    #[test]
    fn argmax_ignores_positive_rescaling(row in prop::collection::vec(0.001f64..1.0, 2..6), c in 0.01f64..100.0) {
        let scaled: Vec<f64> = row.iter().map(|x| x * c).collect();
        let a = argmax_topic(&row);
        let b = argmax_topic(&scaled);
        // Rescaling can only matter when two entries are within rounding.
        if row.iter().enumerate().all(|(i, &x)| i == a || (row[a] - x).abs() > 1e-12) {
            prop_assert_eq!(a, b);
        }
    }
}

#[test]
fn same_seed_is_bit_identical() {
    let docs = random_docs(5, 25, 30);
    let cfg = LdaConfig::new(3).with_seed(77).with_iterations(60);
    let a = fit_lda(&docs, cfg).unwrap();
    let b = fit_lda(&docs, cfg).unwrap();
    assert_eq!(a, b);
    let bits = |m: &fewshot::TopicModel| m.theta.iter().flatten().map(|x| x.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&a), bits(&b));
    let c = fit_lda(&docs, cfg.with_seed(78)).unwrap();
    assert_ne!(a.assignments, c.assignments);
}

#[test]
fn disjoint_vocabularies_separate() {
    let mut good_seeds = 0;
    for seed in 0..10 {
        let docs = disjoint_groups(100 + seed);
        let model = fit_lda(&docs, LdaConfig::new(2).with_seed(seed)).unwrap();
        let topics = model.assign_topics();
        let agree = model
            .doc_ids
            .iter()
            .zip(&topics)
            .filter(|(id, &t)| (id.starts_with("left") as usize) == t)
            .count();
        let best = agree.max(20 - agree);
        if best >= 18 {
            good_seeds += 1;
        }
    }
    assert!(good_seeds >= 8, "only {good_seeds}/10 seeds separated the groups");
}

#[test]
fn preconditions() {
    let docs = random_docs(1, 5, 10);
    assert_eq!(fit_lda(&docs, LdaConfig::new(1)).unwrap_err(), TopicsError::TooFewTopics(1));
    assert!(matches!(fit_lda(&docs, LdaConfig::new(2).with_iterations(0)), Err(TopicsError::NoIterations)));
    let few = vec![Document::from_tokens("a", ["x"]), Document::from_tokens("b", Vec::<String>::new())];
    assert!(matches!(fit_lda(&few, LdaConfig::new(2)), Err(TopicsError::TooFewDocuments { k: 2, found: 1 })));
}

#[test]
fn empty_documents_are_unrankable() {
    let mut docs = random_docs(2, 10, 12);
    docs.push(Document::from_tokens("blank", Vec::<String>::new()));
    let model = fit_lda(&docs, LdaConfig::new(2).with_iterations(20)).unwrap();
    assert!(model.unrankable.contains(&"blank".to_string()));
    assert!(!model.doc_ids.contains(&"blank".to_string()));
    let ranking = model.rank_candidates(12);
    assert_eq!(ranking.unrankable, model.unrankable);
    assert!(ranking.first_page(0).len() <= 12);
}
