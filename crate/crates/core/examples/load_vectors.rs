//! Load word vectors in both supported text formats.
//!
//!     cargo run --example load_vectors [-- path/to/vectors.txt [plain|headered]]

use std::fs;

use fewshot::wordvec::read_vectors;
use fewshot::{load_vectors, VectorFormat};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    if let Some(path) = args.first() {
        let format: VectorFormat = args.get(1).map(|f| f.parse()).transpose()?.unwrap_or_default();
        let table = load_vectors(path, format)?;
        println!("{path}: {} tokens, dim {}", table.len(), table.dim());
        return Ok(());
    }

    let plain = "engine 0.9 0.1 0.0\npitcher 0.0 0.8 0.3\ninning 0.1 0.9 0.2\nengine 5 5 5\n";
    let headered = "3 3\nengine 0.9 0.1 0.0\npitcher 0.0 0.8 0.3\ninning 0.1 0.9 0.2\n";

    let (table, report) = read_vectors(plain.as_bytes(), VectorFormat::Plain, "inline-plain")?;
    println!("plain:    {} tokens, dim {}, duplicates skipped {}", report.tokens, report.dim, report.duplicates_skipped);
    println!("  engine -> {:?} (first occurrence wins)", table.lookup("engine").unwrap());

    let dir = std::env::temp_dir().join("fewshot-example-vectors");
    fs::create_dir_all(&dir)?;
    let path = dir.join("vectors.vec");
    fs::write(&path, headered)?;
    let table = load_vectors(&path, VectorFormat::Headered)?;
    println!("headered: {} tokens, dim {}", table.len(), table.dim());
    println!("  unknown word -> {:?}", table.lookup("shortstop"));

    let broken = "engine 0.9 0.1\npitcher 0.0\n";
    match read_vectors(broken.as_bytes(), VectorFormat::Plain, "broken") {
        Ok(_) => println!("unexpectedly loaded"),
        Err(e) => println!("inconsistent file rejected: {e}"),
    }
    Ok(())
}
