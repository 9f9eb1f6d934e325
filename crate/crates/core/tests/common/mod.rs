#![allow(dead_code)]

use std::path::PathBuf;

use medlang::scm::ScmSpec;

pub fn fixture(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(rel)
}

pub fn spec(name: &str) -> ScmSpec {
    ScmSpec::load(&fixture(&format!("scm/{name}.json"))).expect("fixture spec")
}

pub const SPECS: [&str; 4] = ["binary", "two_mediator", "null", "multilevel"];

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

/// Directory listing with file contents, for byte-level comparison.
pub fn snapshot(dir: &std::path::Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

/// Writes a metadata sidecar in the line-per-case form the ingester reads.
pub fn write_metadata(path: &std::path::Path, meta: &medlang::corpus::CaseMetadata) {
    let lines: Vec<String> = meta
        .iter()
        .map(|(case, attrs)| {
            let mut obj = serde_json::Map::new();
            obj.insert("case_id".into(), case.clone().into());
            for (k, v) in attrs {
                obj.insert(k.clone(), v.clone().into());
            }
            serde_json::Value::Object(obj).to_string()
        })
        .collect();
    std::fs::write(path, lines.join("\n") + "\n").unwrap();
}
