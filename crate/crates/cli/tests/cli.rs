mod common;

use std::fs;

use common::*;

const SMALL_SIM: &[&str] = &["--set", "n_base=40", "--set", "n_specs=2", "--set", "diagnostics=false"];

#[test]
fn unknown_key_is_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let o = run(&["simulate", "--set", "estimator.lamda=1", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("unknown key: lamda"));
    let cfg = dir.path().join("c.json");
    fs::write(&cfg, r#"{"lamda": 0.1}"#).unwrap();
    let o = run(&["estimate", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("unknown key: lamda"));
    assert!(!out.exists(), "failed stage must not write outputs");
}

#[test]
fn bad_schema_version_and_missing_keys() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["score", "--set", "schema_version=9", "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(1));
    let o = run(&["design", "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("missing required key: corpus"));
}

#[test]
fn missing_input_file_is_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["score", "--set", "corpus=/nonexistent/c.jsonl", "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("/nonexistent/c.jsonl"));
}

#[test]
fn simulate_manifest_and_report_legend() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim");
    let mut args = vec!["simulate", "--out", s(&sim), "--threads", "1"];
    args.extend_from_slice(SMALL_SIM);
    run_ok(&args);
    let names = artifact_names(&sim);
    for want in ["summary.json", "results.csv", "bias_rmse.svg", "resolved_config.json"] {
        assert!(names.iter().any(|n| n == want), "{want} missing from {names:?}");
    }
    for a in manifest(&sim)["artifacts"].as_array().unwrap() {
        let bytes = fs::read(sim.join(a["path"].as_str().unwrap())).unwrap();
        assert_eq!(a["bytes"].as_u64().unwrap(), bytes.len() as u64);
    }
    // resolved config is complete and re-runnable
    let resolved = sim.join("resolved_config.json");
    let again = dir.path().join("again");
    run_ok(&["simulate", "--config", s(&resolved), "--out", s(&again)]);
    assert_eq!(fs::read(sim.join("results.csv")).unwrap(), fs::read(again.join("results.csv")).unwrap());

    let rep = dir.path().join("rep");
    run_ok(&["report", s(&sim), "--out", s(&rep)]);
    let svg = fs::read_to_string(rep.join("m0_bias_rmse.svg")).unwrap();
    assert!(svg.contains(">raw<") && svg.contains(">residualized<"));
    assert!(svg.len() < 2 * 1024 * 1024);
    assert!(fs::read_to_string(rep.join("report.csv")).unwrap().contains("simulate"));
}

#[test]
fn report_requires_manifests() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["report", "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn report_names_missing_artifact_hash() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = write_corpus(dir.path(), 12, 3);
    let sc = dir.path().join("score");
    run_ok(&["score", "--set", &format!("corpus={}", s(&corpus)), "--out", s(&sc)]);
    let m = manifest(&sc);
    let entry = m["artifacts"].as_array().unwrap().iter().find(|a| a["path"] == "curves.csv").unwrap().clone();
    fs::remove_file(sc.join("curves.csv")).unwrap();
    let o = run(&["report", s(&sc.join("manifest.json")), "--out", s(&dir.path().join("rep"))]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains(entry["sha256"].as_str().unwrap()), "{err}");
}

#[test]
fn pipeline_score_design_estimate_report() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let corpus = write_corpus(d, 40, 5);
    let corpus_kv = format!("corpus={}", s(&corpus));

    let sc = d.join("score");
    run_ok(&["score", "--set", &corpus_kv, "--out", s(&sc)]);
    let names = artifact_names(&sc);
    assert!(names.iter().any(|n| n.starts_with("intensity_") && n.ends_with(".svg")));
    let scores: serde_json::Value = serde_json::from_slice(&fs::read(sc.join("scores.json")).unwrap()).unwrap();
    assert!(scores.to_string().contains("\"ic\""), "{scores}");

    let de = d.join("design");
    run_ok(&["design", "--set", &corpus_kv, "--set", "matrix_format=csv", "--seed", "2", "--out", s(&de)]);
    for want in ["design.json", "x.csv", "x_resid.csv", "accuracy.svg", "diagnostics.json"] {
        assert!(de.join(want).exists(), "{want}");
    }

    let es = d.join("est");
    run_ok(&["estimate", "--set", &format!("design={}", s(&de)), "--set", "dgp={}", "--out", s(&es)]);
    let rep: serde_json::Value = serde_json::from_slice(&fs::read(es.join("report.json")).unwrap()).unwrap();
    assert!(rep["report"]["ate_hat"].as_f64().unwrap().is_finite());
    assert!(rep["report"]["cate_rmse"].as_f64().is_some());

    // user-supplied outcomes: y = 2 T + noise-free baseline, truth column given
    let cate = fs::read_to_string(es.join("cate.csv")).unwrap();
    let mut y_csv = String::from("y,tau\n");
    for line in cate.lines().skip(1) {
        let t: f64 = line.split(',').nth(2).unwrap().parse().unwrap();
        y_csv.push_str(&format!("{},2\n", 2.0 * t + 1.0));
    }
    let yp = d.join("y.csv");
    fs::write(&yp, y_csv).unwrap();
    let es2 = d.join("est2");
    run_ok(&[
        "estimate",
        "--set", &format!("design={}", s(&de)),
        "--set", &format!("outcomes.path={}", s(&yp)),
        "--out", s(&es2),
    ]);
    let rep: serde_json::Value = serde_json::from_slice(&fs::read(es2.join("report.json")).unwrap()).unwrap();
    assert!((rep["report"]["ate_hat"].as_f64().unwrap() - 2.0).abs() < 0.05, "{}", rep["report"]["ate_hat"]);

    let both = run(&[
        "estimate",
        "--set", &format!("design={}", s(&de)),
        "--set", &format!("outcomes.path={}", s(&yp)),
        "--set", "dgp={}",
        "--out", s(&d.join("bad")),
    ]);
    assert_eq!(both.status.code(), Some(1));

    let out = d.join("report");
    run_ok(&["report", s(&es), s(&de), s(&sc), "--out", s(&out)]);
    assert!(out.join("m0_cate_density.svg").exists());
    assert!(out.join("m1_accuracy.svg").exists());
    assert!(out.join("report.csv").exists());
}

#[test]
fn probe_ranks_separating_feature() {
    let dir = tempfile::tempdir().unwrap();
    let (m, side) = write_activations(dir.path());
    let out = dir.path().join("probe");
    run_ok(&[
        "probe",
        "--set", &format!("activations={}", s(&m)),
        "--set", &format!("sidecar={}", s(&side)),
        "--set", "filter.train_rate_max=1",
        "--set", "filter.corpus_rate_max=1",
        "--set", "k=4",
        "--out", s(&out),
    ]);
    let board = fs::read_to_string(out.join("leaderboard.csv")).unwrap();
    let first = board.lines().nth(1).unwrap();
    assert!(first.starts_with("f0,"), "{board}");
}

#[test]
fn rerun_is_byte_identical_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let mut args = vec!["simulate", "--seed", "4", "--out", s(&a), "--threads", "1"];
    args.extend_from_slice(SMALL_SIM);
    run_ok(&args);
    let mut args = vec!["simulate", "--seed", "4", "--out", s(&b)];
    args.extend_from_slice(SMALL_SIM);
    let o = bin().args(&args).env("LATENT_TREAT_THREADS", "3").output().unwrap();
    assert!(o.status.success());
    assert_eq!(fs::read(a.join("manifest.json")).unwrap(), fs::read(b.join("manifest.json")).unwrap());
}
