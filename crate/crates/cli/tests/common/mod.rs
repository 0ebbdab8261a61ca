#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use latent_treat::data::io::{format_csv, format_steered_corpus};
use latent_treat::data::{derive_stream, FeatureMeta, Matrix};
use latent_treat::simulate::{generate_synthetic_corpus, SyntheticWorld, WorldParams};
use rand::Rng;

pub fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_latent-treat"));
    c.env_remove("LATENT_TREAT_THREADS");
    c
}

pub fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn latent-treat")
}

pub fn run_ok(args: &[&str]) -> Output {
    let o = run(args);
    assert!(
        o.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&o.stderr)
    );
    o
}

pub fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Steered corpus from the synthetic world, one feature.
pub fn write_corpus(dir: &Path, n_base: usize, seed: u64) -> PathBuf {
    let world = SyntheticWorld::new(WorldParams::default(), &derive_stream(seed, &[0])).unwrap();
    let recs = generate_synthetic_corpus(&world, n_base, &derive_stream(seed, &[1])).unwrap();
    let p = dir.join("corpus.jsonl");
    fs::write(&p, format_steered_corpus(&recs)).unwrap();
    p
}

/// Labeled activations where feature 0 separates the classes.
pub fn write_activations(dir: &Path) -> (PathBuf, PathBuf) {
    let mut rng = derive_stream(11, &[]).rng();
    let (n, p) = (200, 6);
    let labels: Vec<u8> = (0..n).map(|i| (i % 2) as u8).collect();
    let x = Matrix::from_fn(n, p, |i, j| {
        let base: f64 = rng.random::<f64>();
        let signal = if j == 0 && labels[i] == 1 { 1.5 } else if j == 1 && labels[i] == 1 { 0.5 } else { 0.0 };
        if rng.random::<f64>() < 0.5 { base + signal } else { signal }
    });
    let feats: Vec<FeatureMeta> = (0..p)
        .map(|j| FeatureMeta { id: format!("f{j}"), layer: Some(12), description: format!("feature {j}") })
        .collect();
    let m = dir.join("acts.csv");
    fs::write(&m, format_csv(&x, None)).unwrap();
    let side = dir.join("acts.json");
    fs::write(&side, serde_json::to_string(&serde_json::json!({"labels": labels, "features": feats})).unwrap()).unwrap();
    (m, side)
}

pub fn manifest(dir: &Path) -> serde_json::Value {
    serde_json::from_slice(&fs::read(dir.join("manifest.json")).unwrap()).unwrap()
}

pub fn artifact_names(dir: &Path) -> Vec<String> {
    manifest(dir)["artifacts"]
        .as_array()
        .unwrap()
        .iter()
        .map(|a| a["path"].as_str().unwrap().to_string())
        .collect()
}
