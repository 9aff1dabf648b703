//! The whole human-in-the-loop workflow over HTTP: create a batch, look at
//! candidates, label one per category, classify, read predictions.
//!
//! Starts the engine on a free local port with a synthetic corpus and talks
//! to it with plain HTTP/1.1 requests. `fewshot serve` runs the same engine.

use std::sync::Arc;

use fewshot::service::{self, Engine, EngineConfig};
use fewshot::synthetic::{SyntheticCorpus, SyntheticSpec};
use serde_json::{json, Value};
use tokio::io::{AsyncReadExt, AsyncWriteExt};
use tokio::net::TcpStream;

async fn http(addr: &str, method: &str, path: &str, body: Option<Value>) -> std::io::Result<(u16, Value)> {
    let body = body.map(|b| b.to_string()).unwrap_or_default();
    let request = format!(
        "{method} {path} HTTP/1.1\r\nhost: {addr}\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
        body.len()
    );
    let mut stream = TcpStream::connect(addr).await?;
    stream.write_all(request.as_bytes()).await?;
    let mut raw = Vec::new();
    stream.read_to_end(&mut raw).await?;
    let text = String::from_utf8_lossy(&raw);
    let (head, rest) = text.split_once("\r\n\r\n").unwrap_or((&text, ""));
    let status = head.split_whitespace().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let chunked = head.to_ascii_lowercase().contains("transfer-encoding: chunked");
    let payload = if chunked { dechunk(rest) } else { rest.to_string() };
    Ok((status, serde_json::from_str(&payload).unwrap_or(Value::Null)))
}

fn dechunk(mut s: &str) -> String {
    let mut out = String::new();
    while let Some((size, rest)) = s.split_once("\r\n") {
        let n = usize::from_str_radix(size.trim(), 16).unwrap_or(0);
        if n == 0 {
            break;
        }
        out.push_str(&rest[..n]);
        s = &rest[n + 2..];
    }
    out
}

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let corpus = SyntheticCorpus::generate(&SyntheticSpec::default());
    let data_dir = std::env::temp_dir().join(format!("fewshot-example-{}", std::process::id()));
    let config = EngineConfig { data_dir: data_dir.clone(), lda_iterations: 300, ..EngineConfig::default() };
    let engine = Arc::new(Engine::with_table(config, Arc::new(corpus.table()))?);

    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await?;
    let addr = listener.local_addr()?.to_string();
    tokio::spawn(async move { axum::serve(listener, service::router(engine)).await });
    println!("engine on http://{addr}, state in {}", data_dir.display());

    let documents: Vec<Value> = corpus.records.iter().map(|r| json!({"id": r.id, "text": r.text})).collect();
    let (status, created) = http(&addr, "POST", "/batches", Some(json!({"documents": documents, "categories": ["autos", "baseball"]}))).await?;
    let id = created["batch_id"].as_str().ok_or("no batch id")?.to_string();
    println!("POST /batches -> {status} {created}");

    let (_, page) = http(&addr, "GET", &format!("/batches/{id}/candidates?page=0"), None).await?;
    let mut picks = Vec::new();
    for topic in page["topics"].as_array().ok_or("no topics")? {
        let top = &topic["entries"][0];
        println!("topic {} top words {}: first candidate {} ({} tokens)", topic["topic"], topic["top_words"], top["doc_id"], top["token_count"]);
        picks.push(top["doc_id"].as_str().unwrap_or_default().to_string());
    }

    // A person would read the excerpts; here the synthetic ids give the answer away.
    let mut selections = serde_json::Map::new();
    for pick in &picks {
        let category = pick.split('-').next().unwrap_or_default();
        selections.entry(category).or_insert_with(|| json!([])).as_array_mut().unwrap().push(json!(pick));
    }
    for category in ["autos", "baseball"] {
        selections.entry(category).or_insert_with(|| json!([format!("{category}-0000")]));
    }
    let (status, labeled) = http(&addr, "POST", &format!("/batches/{id}/labels"), Some(json!({"selections": selections}))).await?;
    println!("POST labels -> {status}, warning: {}", labeled["warning"]);

    let (_, summary) = http(&addr, "POST", &format!("/batches/{id}/classify"), None).await?;
    println!("POST classify -> {summary}");

    let (_, preds) = http(&addr, "GET", &format!("/batches/{id}/predictions?category=autos"), None).await?;
    let entries = preds["entries"].as_array().ok_or("no predictions")?;
    let right = entries.iter().filter(|p| p["doc_id"].as_str().unwrap_or("").starts_with("autos")).count();
    println!("{} documents predicted autos, {right} of them really are", entries.len());

    let _ = std::fs::remove_dir_all(&data_dir);
    Ok(())
}
