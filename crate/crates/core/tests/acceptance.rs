//! Acceptance gate. Each test prints one `ACCEPTANCE ... PASS|FAIL` line.
//!
//! The three real-data criteria read their inputs from the environment:
//!
//! * `FEWSHOT_ACCEPT_DATA`: the "autos, baseball" dataset as JSON lines
//!   (see `docs/convert_20newsgroups.py`);
//! * `FEWSHOT_ACCEPT_VECTORS`: 300-dimensional pre-trained word vectors;
//! * `FEWSHOT_ACCEPT_VECTOR_FORMAT`: `plain` (default) or `headered`.
//!
//! Without them those criteria report FAIL (blocked) rather than pass.

mod common;

use std::collections::HashMap;
use std::io::Write as _;
use std::path::PathBuf;
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use common::{eval_batch_for, naive_cosine, naive_probs, naive_search, naive_sif, random_instance, synthetic};
use fewshot::corpus::{dataset_from_records, Document, DocumentRecord};
use fewshot::eval::{search_ranked, SearchFailure};
use fewshot::service::{CreateBatchRequest, Engine, EngineConfig};
use fewshot::synthetic::{SyntheticCorpus, SyntheticSpec};
use fewshot::topics::{CandidateRanking, GibbsSampler, RankedDocument};
use fewshot::{
    build_prototypes, build_unigram_model, classify_batch, embed_batch, fit_lda, length_bias_analysis, load_labeled_dataset, load_vectors,
    search_lda_restricted, search_max_one_shot, sif_weight, DocumentEmbedding, EvalBatch, LdaConfig, SearchMode, SifConfig, StopWords,
    VectorFormat,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TABLE1_TARGET: f64 = 0.9703;
const TABLE1_TOL: f64 = 0.03;
const TABLE1_TIME: Duration = Duration::from_secs(600);
const TABLE2_TARGET: f64 = 0.945402;
const TABLE2_TOL: f64 = 0.04;
const TABLE2_SEEDS: u64 = 5;
const BIAS_RANGE: (f64, f64) = (0.65, 0.95);

/// Prints the verdict line outside the test harness' capture and fails the
/// test when the criterion is not met.
fn verdict(name: &str, pass: bool, detail: &str) {
    let line = format!("ACCEPTANCE {name}: {} ({detail})\n", if pass { "PASS" } else { "FAIL" });
    let mut err = std::io::stderr().lock();
    let _ = err.write_all(line.as_bytes());
    let _ = err.flush();
    assert!(pass, "{}", line.trim_end());
}

struct RealData {
    batch: EvalBatch,
    docs: Vec<Document>,
}

fn real_data() -> Result<RealData, String> {
    let data = std::env::var_os("FEWSHOT_ACCEPT_DATA").map(PathBuf::from);
    let vectors = std::env::var_os("FEWSHOT_ACCEPT_VECTORS").map(PathBuf::from);
    let (Some(data), Some(vectors)) = (data, vectors) else {
        return Err("blocked: FEWSHOT_ACCEPT_DATA / FEWSHOT_ACCEPT_VECTORS not set; the 20 Newsgroups subset and 300-d vectors are not bundled".into());
    };
    let format: VectorFormat = std::env::var("FEWSHOT_ACCEPT_VECTOR_FORMAT")
        .unwrap_or_else(|_| "plain".into())
        .parse()
        .map_err(|e: String| e)?;
    let dataset = load_labeled_dataset(&data, &StopWords::english()).map_err(|e| e.to_string())?;
    let table = load_vectors(&vectors, format).map_err(|e| e.to_string())?;
    let docs = dataset.docs();
    let unigram = build_unigram_model(&docs).map_err(|e| e.to_string())?;
    let embs = embed_batch(&docs, &table, &unigram, SifConfig::default());
    let batch = EvalBatch::new("autos_baseball", &dataset, embs.embeddings).map_err(|e| e.to_string())?;
    Ok(RealData { batch, docs })
}

#[test]
fn table1_brute_force_autos_baseball() {
    let name = "table1-bruteforce";
    let data = match real_data() {
        Ok(d) => d,
        Err(why) => return verdict(name, false, &why),
    };
    let start = Instant::now();
    let report = match search_max_one_shot(&data.batch, fewshot::eval::DEFAULT_BUDGET, fewshot::eval::DEFAULT_EVAL_SEED) {
        Ok(r) => r,
        Err(e) => return verdict(name, false, &format!("search error: {e}")),
    };
    let elapsed = start.elapsed();
    let acc = report.max_accuracy.unwrap_or(f64::NAN);
    let pass = (acc - TABLE1_TARGET).abs() <= TABLE1_TOL && elapsed <= TABLE1_TIME;
    verdict(
        name,
        pass,
        &format!(
            "{} docs, mode {:?}, {} combinations, max acc {acc:.4} vs {TABLE1_TARGET} ±{TABLE1_TOL}, {:.1}s (limit {}s)",
            report.doc_count,
            report.mode,
            report.combinations_evaluated,
            elapsed.as_secs_f64(),
            TABLE1_TIME.as_secs()
        ),
    );
}

/// A constructed batch whose candidate pages hold only category A.
fn missing_category_demo() -> bool {
    let records: Vec<DocumentRecord> = [("a1", "A"), ("a2", "A"), ("b1", "B")]
        .iter()
        .map(|(id, l)| DocumentRecord {
            id: id.to_string(),
            text: "text".into(),
            label: Some(l.to_string()),
        })
        .collect();
    let dataset = dataset_from_records(records, &StopWords::english());
    let embs = [("a1", [1.0, 0.0]), ("a2", [0.9, 0.2]), ("b1", [0.0, 1.0])]
        .iter()
        .map(|(id, v)| DocumentEmbedding {
            doc_id: id.to_string(),
            vector: v.to_vec(),
            embedded_token_count: 1,
            is_empty: false,
        })
        .collect();
    let batch = EvalBatch::new("constructed", &dataset, embs).unwrap();
    let ranked = |ids: &[&str]| ids.iter().map(|id| RankedDocument { doc_id: id.to_string(), prob: 0.8 }).collect();
    let ranking = CandidateRanking {
        page_size: 1,
        topics: vec![ranked(&["a1", "b1"]), ranked(&["a2"])],
        unrankable: vec![],
    };
    let report = search_ranked(&batch, &ranking, None).unwrap();
    report.failure == Some(SearchFailure::LdaMissingCategory) && report.max_accuracy.is_none()
}

#[test]
fn table2_lda_restricted_autos_baseball() {
    let name = "table2-lda-restricted";
    let demo = missing_category_demo();
    let data = match real_data() {
        Ok(d) => d,
        Err(why) => return verdict(name, false, &format!("{why}; lda_missing_category demo {}", if demo { "ok" } else { "FAILED" })),
    };
    let mut accs = Vec::new();
    for seed in 0..TABLE2_SEEDS {
        let cfg = LdaConfig::new(2).with_seed(fewshot::topics::DEFAULT_SEED + seed);
        let outcome = fit_lda(&data.docs, cfg)
            .map_err(|e| e.to_string())
            .and_then(|model| search_lda_restricted(&data.batch, &model, 12).map_err(|e| e.to_string()));
        match outcome {
            Ok(report) => accs.push(report.max_accuracy),
            Err(e) => return verdict(name, false, &format!("seed {seed}: {e}")),
        }
    }
    let hit = accs.iter().flatten().any(|a| (a - TABLE2_TARGET).abs() <= TABLE2_TOL);
    let shown: Vec<String> = accs.iter().map(|a| a.map_or("--".into(), |a| format!("{a:.4}"))).collect();
    verdict(
        name,
        hit && demo,
        &format!("per-seed max acc [{}] vs {TABLE2_TARGET} ±{TABLE2_TOL}; lda_missing_category demo {}", shown.join(", "), if demo { "ok" } else { "FAILED" }),
    );
}

#[test]
fn length_bias_autos_baseball() {
    let name = "length-bias-correlation";
    let data = match real_data() {
        Ok(d) => d,
        Err(why) => return verdict(name, false, &why),
    };
    let report = match length_bias_analysis(&data.batch, fewshot::eval::DEFAULT_BUDGET, fewshot::eval::DEFAULT_EVAL_SEED) {
        Ok(r) => r,
        Err(e) => return verdict(name, false, &format!("analysis error: {e}")),
    };
    let r = report.correlation;
    verdict(
        name,
        (BIAS_RANGE.0..=BIAS_RANGE.1).contains(&r),
        &format!("pearson {r:.4} over {} combinations, expected [{}, {}]", report.rows.len(), BIAS_RANGE.0, BIAS_RANGE.1),
    );
}

#[test]
fn oracle_equivalence_50_instances() {
    let name = "oracle-equivalence";
    let (mut compared, mut mismatches, mut seed) = (0, Vec::new(), 1000u64);
    while compared < 50 {
        seed += 1;
        let inst = random_instance(seed);
        let dataset = inst.dataset();
        let (_, batch) = eval_batch_for(&dataset, &inst.table(), 1e-3);
        let ids: Vec<String> = dataset.documents.iter().map(|d| d.doc.id.clone()).collect();
        let tokens: Vec<Vec<String>> = dataset.documents.iter().map(|d| d.doc.tokens.clone()).collect();
        let gold: Vec<String> = dataset.documents.iter().map(|d| d.gold_label.clone().unwrap()).collect();
        let Some(oracle) = naive_search(&ids, &tokens, &gold, &dataset.categories, &inst.vectors, 1e-3) else { continue };
        if oracle.accuracy.is_nan() || oracle.combinations > 1000 {
            continue;
        }
        compared += 1;
        let report = search_max_one_shot(&batch, 1000, 0).unwrap();
        let best: Vec<String> = report.best_combination.values().map(|v| v[0].clone()).collect();
        if report.max_accuracy != Some(oracle.accuracy) || best != oracle.representatives || report.mode != SearchMode::Exhaustive {
            mismatches.push(seed);
        }
    }
    verdict(name, mismatches.is_empty(), &format!("{compared} instances, mismatching seeds {mismatches:?}"));
}

fn check(failures: &mut Vec<&'static str>, label: &'static str, ok: bool) {
    if !ok {
        failures.push(label);
    }
}

#[test]
fn property_suites() {
    let name = "property-suites";
    let mut failures = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);

    // Embedding against the direct-summation oracle.
    let words: Vec<String> = (0..10).map(|i| format!("word{}", (b'a' + i) as char)).collect();
    let mut alg_ok = true;
    for _ in 0..20 {
        let vectors: HashMap<String, Vec<f64>> = words[..8].iter().map(|w| (w.clone(), (0..6).map(|_| rng.random_range(-3.0..3.0)).collect())).collect();
        let tokens: Vec<Vec<String>> = (0..5).map(|_| (0..rng.random_range(0..12)).map(|_| words[rng.random_range(0..10)].clone()).collect()).collect();
        let docs: Vec<Document> = tokens.iter().enumerate().map(|(i, t)| Document::from_tokens(format!("d{i}"), t.clone())).collect();
        if docs.iter().all(|d| d.token_count() == 0) {
            continue;
        }
        let table = fewshot::WordVectorTable::from_entries("t", vectors.iter().map(|(w, v)| (w.clone(), v.clone()))).unwrap();
        let alpha = rng.random_range(1e-4..0.5);
        let batch = embed_batch(&docs, &table, &build_unigram_model(&docs).unwrap(), SifConfig::new(alpha).unwrap());
        let probs = naive_probs(&tokens);
        for (t, e) in tokens.iter().zip(&batch.embeddings) {
            match naive_sif(t, &vectors, &probs, alpha) {
                Some(v) => alg_ok &= v.iter().zip(&e.vector).all(|(a, b)| (a - b).abs() <= 1e-12),
                None => alg_ok &= e.is_empty,
            }
        }
    }
    check(&mut failures, "embedding oracle", alg_ok);

    // Weight anchors and monotonicity.
    let cfg = SifConfig::new(1e-3).unwrap();
    let mut mono = sif_weight(0.0, cfg) == 1.0 && sif_weight(1e-3, cfg) == 0.5;
    for _ in 0..1000 {
        let (a, b) = (rng.random_range(0.0..1.0), rng.random_range(0.0..1.0));
        if a < b {
            mono &= sif_weight(a, cfg) > sif_weight(b, cfg);
        }
    }
    check(&mut failures, "weight monotonicity/anchors", mono);

    // Predicted classes do not change when documents are rescaled.
    let mut scale_ok = true;
    for _ in 0..50 {
        let emb = |id: String, v: Vec<f64>| DocumentEmbedding { doc_id: id, vector: v, embedded_token_count: 1, is_empty: false };
        let mut plain = vec![emb("pa".into(), vec![1.0, 0.2, -0.3]), emb("pb".into(), vec![-0.4, 1.0, 0.5])];
        let mut scaled = plain.clone();
        for i in 0..20 {
            let v: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
            let c = rng.random_range(0.1..10.0);
            scaled.push(emb(format!("x{i}"), v.iter().map(|x| x * c).collect()));
            plain.push(emb(format!("x{i}"), v));
        }
        let sel: fewshot::classify::Selection = [("A".to_string(), vec!["pa".to_string()]), ("B".to_string(), vec!["pb".to_string()])].into_iter().collect();
        let (p1, p2) = (build_prototypes(&sel, &plain[..]).unwrap(), build_prototypes(&sel, &scaled[..]).unwrap());
        let (r1, r2) = (classify_batch(&plain, &p1, &p1.representative_ids()), classify_batch(&scaled, &p2, &p2.representative_ids()));
        scale_ok &= r1.predictions.iter().zip(&r2.predictions).all(|(a, b)| a.margin < 1e-9 || a.category == b.category);
        scale_ok &= r1.predictions.iter().all(|p| {
            let v = &plain.iter().find(|e| e.doc_id == p.doc_id).unwrap().vector;
            (naive_cosine(v, &p1.prototypes.iter().find(|q| q.category == p.category).unwrap().vector) - p.score).abs() < 1e-12
        });
    }
    check(&mut failures, "cosine scale invariance", scale_ok);

    // Topic model: normalization, conservation, determinism, separation.
    let docs: Vec<Document> = (0..30)
        .map(|i| Document::from_tokens(format!("d{i:02}"), (0..rng.random_range(1..30)).map(|_| format!("t{}", rng.random_range(0..40))).collect::<Vec<_>>()))
        .collect();
    let cfg = LdaConfig::new(3).with_seed(5).with_iterations(40);
    let mut sampler = GibbsSampler::new(&docs, cfg).unwrap();
    let mut conserved = true;
    for _ in 0..40 {
        sampler.sweep();
        for d in 0..sampler.doc_count() {
            conserved &= (0..3).map(|t| sampler.doc_topic_count(d, t)).sum::<u32>() as usize == sampler.doc_len(d);
        }
        for t in 0..3 {
            conserved &= (0..sampler.vocab_size()).map(|w| sampler.topic_word_count(t, w)).sum::<u32>() == sampler.topic_total(t);
        }
    }
    check(&mut failures, "gibbs count conservation", conserved);
    let model = fit_lda(&docs, cfg).unwrap();
    let normalized = model.theta.iter().chain(&model.phi).all(|r| (r.iter().sum::<f64>() - 1.0).abs() < 1e-9 && r.iter().all(|&p| p > 0.0));
    check(&mut failures, "theta/phi normalization", normalized);
    check(&mut failures, "lda seed determinism", fit_lda(&docs, cfg).unwrap() == model);
    let mut separated = 0;
    for seed in 0..10u64 {
        let mut g = ChaCha8Rng::seed_from_u64(500 + seed);
        let docs: Vec<Document> = (0..20)
            .map(|i| {
                let side = if i < 10 { "north" } else { "south" };
                Document::from_tokens(format!("{side}{i:02}"), (0..20).map(|_| format!("{side}{}", g.random_range(0..15))).collect::<Vec<_>>())
            })
            .collect();
        let topics = fit_lda(&docs, LdaConfig::new(2).with_seed(seed)).unwrap().assign_topics();
        let agree = topics.iter().enumerate().filter(|&(i, &t)| (i < 10) == (t == 0)).count();
        if agree.max(20 - agree) >= 18 {
            separated += 1;
        }
    }
    check(&mut failures, "disjoint vocabulary separation", separated >= 8);

    // Search results independent of thread count.
    let (_, dataset, table) = synthetic(&SyntheticSpec { docs_per_category: 25, ..SyntheticSpec::default() });
    let (_, batch) = eval_batch_for(&dataset, &table, 1e-3);
    let run = |n: usize, budget: u64| {
        rayon::ThreadPoolBuilder::new().num_threads(n).build().unwrap().install(|| search_max_one_shot(&batch, budget, 3).unwrap())
    };
    let threads_ok = [2, 4, 7].iter().all(|&n| run(n, 1_000_000) == run(1, 1_000_000) && run(n, 100) == run(1, 100));
    check(&mut failures, "thread-count independence", threads_ok);

    // Service: restart round trip and conservation.
    let dir = tempfile::tempdir().unwrap();
    let corpus = SyntheticCorpus::generate(&SyntheticSpec::default());
    let table = Arc::new(corpus.table());
    let open = || {
        let cfg = EngineConfig { data_dir: dir.path().to_path_buf(), lda_iterations: 100, ..EngineConfig::default() };
        Arc::new(Engine::with_table(cfg, table.clone()).unwrap())
    };
    let request = CreateBatchRequest {
        documents: corpus.records.iter().map(|r| DocumentRecord { label: None, ..r.clone() }).collect(),
        categories: vec!["autos".into(), "baseball".into()],
        ..Default::default()
    };
    let id = open().create_batch(request).unwrap().batch_id;
    let snap = |e: &Engine| serde_json::to_string(&*e.state(&id).unwrap()).unwrap();
    let mut persisted = snap(&open()) == snap(&open());
    let sel: fewshot::classify::Selection = [("autos".to_string(), vec!["autos-0000".to_string()]), ("baseball".to_string(), vec!["baseball-0000".to_string()])]
        .into_iter()
        .collect();
    open().submit_labels(&id, sel).unwrap();
    persisted &= snap(&open()) == snap(&open());
    let summary = open().run_classification(&id).unwrap();
    persisted &= snap(&open()) == snap(&open());
    check(&mut failures, "service persistence", persisted);
    let total: usize = summary.per_category.values().sum::<usize>() + summary.unclassifiable.len() + summary.representatives;
    check(&mut failures, "service conservation", total == summary.total_documents);

    verdict(
        name,
        failures.is_empty(),
        &if failures.is_empty() { "all property checks hold".to_string() } else { format!("failed: {}", failures.join(", ")) },
    );
}

#[test]
fn full_workflow_via_cli() {
    let name = "cli-workflow";
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    SyntheticCorpus::generate(&SyntheticSpec::default()).write_to(d).unwrap();
    std::fs::write(d.join("labels.json"), r#"{"autos": ["autos-0001"], "baseball": ["baseball-0002"]}"#).unwrap();
    let steps: [&[&str]; 6] = [
        &["embed", "--data", "dataset.jsonl", "--vectors", "vectors.txt", "--out", "emb.jsonl"],
        &["lda", "--data", "dataset.jsonl", "--out", "topics.json"],
        &["classify", "--data", "dataset.jsonl", "--embeddings", "emb.jsonl", "--labels", "labels.json", "--out", "preds.jsonl"],
        &["eval-bruteforce", "--data", "dataset.jsonl", "--embeddings", "emb.jsonl", "--out", "bf.json"],
        &["eval-lda", "--data", "dataset.jsonl", "--embeddings", "emb.jsonl", "--out", "lda.json"],
        &["eval-lengthbias", "--data", "dataset.jsonl", "--embeddings", "emb.jsonl", "--out", "bias.json"],
    ];
    let mut failed = Vec::new();
    for args in steps {
        let out = Command::new(env!("CARGO_BIN_EXE_fewshot")).args(args).current_dir(d).output().unwrap();
        let artifact = d.join(args[args.len() - 1]);
        if !out.status.success() || !artifact.exists() {
            failed.push(format!("{} ({})", args[0], String::from_utf8_lossy(&out.stderr).trim()));
        }
    }
    let preds = std::fs::read_to_string(d.join("preds.jsonl")).unwrap_or_default();
    if preds.lines().count() != 38 {
        failed.push(format!("classify wrote {} predictions, expected 38", preds.lines().count()));
    }
    verdict(
        name,
        failed.is_empty(),
        &if failed.is_empty() { "embed -> lda -> classify -> eval-bruteforce/eval-lda/eval-lengthbias all succeeded".to_string() } else { failed.join("; ") },
    );
}
