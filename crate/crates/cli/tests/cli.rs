use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../core/fixtures")
        .join(name)
}

fn rxcheck(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rxcheck"))
        .args(args)
        .env_remove("RXCHECK_CONFIG")
        .output()
        .expect("binary runs")
}

fn path(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

fn stdout_json(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("JSON on stdout")
}

fn stderr_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stderr).expect("JSON on stderr")
}

#[test]
fn ingest_raw_sample() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("clean.json");
    let v = stdout_json(&rxcheck(&[
        "ingest",
        "--monographs",
        path(&fixture("monographs_sample.json")),
        "--out",
        path(&out),
    ]));
    assert_eq!(v["stats"]["n_ingredients"], 2);
    assert!(out.exists());
}

#[test]
fn ingest_missing_file_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = rxcheck(&[
        "ingest",
        "--monographs",
        "/does/not/exist.json",
        "--out",
        path(&dir.path().join("x.json")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_json(&out)["error"], "input");
}

#[test]
fn ingest_converts_micrograms() {
    let dir = tempfile::tempdir().unwrap();
    let raw = dir.path().join("raw.json");
    fs::write(
        &raw,
        r#"{"levothyroxine": {"dosage": {"Adults": {"Hypothyroidism": {"Oral": "Initially, 25–50 mcg\tonce daily†."}}}}}"#,
    )
    .unwrap();
    let out = dir.path().join("clean.json");
    stdout_json(&rxcheck(&["ingest", "--monographs", path(&raw), "--out", path(&out)]));
    let text = fs::read_to_string(&out).unwrap();
    assert!(!text.contains("mcg"), "{text}");
    assert!(text.contains("0.025-0.05 mg once daily."), "{text}");
}

#[test]
fn build_kg_rosuvastatin_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let m = fixture("rosuvastatin.json");
    let v = stdout_json(&rxcheck(&["build-kg", "--monographs", path(&m), "--out", path(&a)]));
    assert!(v["nodes"].as_u64().unwrap() >= 3);
    assert!(v["edges"].as_u64().unwrap() >= 2);
    stdout_json(&rxcheck(&["build-kg", "--monographs", path(&m), "--out", path(&b)]));
    for f in ["nodes.json", "relationships.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn build_kg_empty_corpus_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let raw = dir.path().join("empty.json");
    fs::write(&raw, "{}").unwrap();
    let out = rxcheck(&[
        "build-kg",
        "--monographs",
        path(&raw),
        "--out",
        path(&dir.path().join("kg")),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn gateway_config_errors_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("gw.toml");
    fs::write(&cfg, "provider = \"openai-compatible\"\napi_key = \"sk-secret\"\n").unwrap();
    let m = fixture("rosuvastatin.json");
    let out = rxcheck(&[
        "build-kg",
        "--monographs",
        path(&m),
        "--out",
        path(&dir.path().join("kg")),
        "--config",
        path(&cfg),
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(stderr_json(&out)["error"], "gateway");
    let out = rxcheck(&[
        "build-kg",
        "--monographs",
        path(&m),
        "--out",
        path(&dir.path().join("kg")),
        "--provider",
        "openai-compatible",
    ]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn verify_fixture_case_then_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let reports = dir.path().join("reports");
    let (case, monographs) = (fixture("case_sample.txt"), fixture("monographs_case.json"));
    let args = [
        "verify",
        "--case",
        path(&case),
        "--monographs",
        path(&monographs),
        "--out",
        path(&reports),
    ];
    let first = rxcheck(&args);
    let v = stdout_json(&first);
    let items = v["items"].as_array().unwrap();
    assert_eq!(items.len(), 5);
    assert_eq!(rxcheck(&args).stdout, first.stdout);

    let gold: Vec<Value> = items
        .iter()
        .map(|i| serde_json::json!({"case_id": v["case_id"], "ingredient": i["ingredient"], "label": i["verdict"]}))
        .collect();
    let gold_path = dir.path().join("gold.json");
    fs::write(&gold_path, serde_json::to_string(&gold).unwrap()).unwrap();
    let m = stdout_json(&rxcheck(&[
        "evaluate",
        "--reports",
        path(&reports),
        "--gold",
        path(&gold_path),
    ]));
    assert_eq!(m["metrics"]["accuracy"], 100.0);
    assert_eq!(m["metrics"]["f05"], 100.0);
    let text = rxcheck(&[
        "evaluate",
        "--reports",
        path(&reports),
        "--gold",
        path(&gold_path),
        "--pretty",
    ]);
    let text = String::from_utf8(text.stdout).unwrap();
    assert!(text.contains("F0.5        100.00"), "{text}");
}

#[test]
fn verify_batch_directory_in_parallel() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(fixture("case_sample.txt")).unwrap();
    for i in 0..4 {
        fs::write(
            dir.path().join(format!("c{i}.txt")),
            text.replace("rx-24", &format!("rx-{i}")),
        )
        .unwrap();
    }
    let m = fixture("monographs_case.json");
    let one = rxcheck(&["verify", "--case", path(dir.path()), "--monographs", path(&m)]);
    let four = rxcheck(&[
        "verify",
        "--case",
        path(dir.path()),
        "--monographs",
        path(&m),
        "--parallel",
        "4",
    ]);
    assert_eq!(one.stdout, four.stdout);
    assert_eq!(stdout_json(&one).as_array().unwrap().len(), 4);
}

#[test]
fn interactions_top_three() {
    let v = stdout_json(&rxcheck(&[
        "interactions",
        "--interactions",
        path(&fixture("interactions.json")),
        "--query",
        "alfentanil",
        "-k",
        "3",
    ]));
    let results = v["results"].as_array().unwrap();
    assert_eq!(results.len(), 3);
    let scores: Vec<f64> = results.iter().map(|r| r["score"].as_f64().unwrap()).collect();
    assert!(scores.windows(2).all(|w| w[0] >= w[1]), "{scores:?}");
}

#[test]
fn retrieve_dose_from_monographs() {
    let v = stdout_json(&rxcheck(&[
        "retrieve-dose",
        "--monographs",
        path(&fixture("rosuvastatin.json")),
        "--ingredient",
        "rosuvastatin",
        "--disease",
        "heterozygous familial hypercholesterolemia",
        "--age",
        "12",
    ]));
    assert_eq!(v["recommendation"]["status"], "found");
    assert_eq!(v["recommendation"]["dosages"][0]["dosage_text"], "5-20 mg once daily");
}

#[test]
fn help_and_unknown_flags() {
    let help = String::from_utf8(rxcheck(&["verify", "--help"]).stdout).unwrap();
    for flag in [
        "--case",
        "--monographs",
        "--graph",
        "--interactions",
        "--any-overlap",
        "--parallel",
        "--config",
        "--pretty",
    ] {
        assert!(help.contains(flag), "{flag} missing from help");
    }
    assert_eq!(rxcheck(&["verify", "--no-such-flag"]).status.code(), Some(2));
}
