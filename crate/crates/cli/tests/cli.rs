//! Drives the binary through the synth → score → table → train → eval →
//! explain chain on a small planted dataset.

use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn run(args: &[&str]) -> Output {
    let out = Command::new(env!("CARGO_BIN_EXE_guidedrec"))
        .args(args)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "guidedrec {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn planted_pipeline_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let ds = dir.path().join("ds.json");
    let scores = dir.path().join("scores.json");
    let table = dir.path().join("table.json");
    let model = dir.path().join("model.json");

    run(&[
        "synth",
        "--users",
        "30",
        "--items",
        "25",
        "--aspects",
        "6",
        "--seed",
        "3",
        "--out",
        p(&ds),
    ]);
    run(&[
        "score",
        "--dataset",
        p(&ds),
        "--catalog",
        "generic",
        "--aspects",
        "6",
        "--out",
        p(&scores),
    ]);
    run(&[
        "table",
        "--dataset",
        p(&ds),
        "--scores",
        p(&scores),
        "--base-dim",
        "8",
        "--out",
        p(&table),
    ]);
    run(&[
        "train",
        "--dataset",
        p(&ds),
        "--table",
        p(&table),
        "--encoder",
        "gru",
        "--variant",
        "seqref",
        "--epochs",
        "2",
        "--lr",
        "0.01",
        "--out",
        p(&model),
    ]);
    let eval = String::from_utf8(
        run(&[
            "eval",
            "--model",
            p(&model),
            "--dataset",
            p(&ds),
            "--ks",
            "1,5",
        ])
        .stdout,
    )
    .unwrap();
    assert!(eval.contains("MRR"), "{eval}");
    assert!(eval.contains("NDCG@5"), "{eval}");

    let guided: Value = serde_json::from_str(&std::fs::read_to_string(&scores).unwrap()).unwrap();
    let user = guided["users"]
        .as_object()
        .unwrap()
        .keys()
        .next()
        .unwrap()
        .clone();
    let item = guided["items"]
        .as_object()
        .unwrap()
        .keys()
        .next()
        .unwrap()
        .clone();
    let explained = run(&[
        "explain",
        "--scores",
        p(&scores),
        "--user",
        &user,
        "--item",
        &item,
        "--json",
    ])
    .stdout;
    let report: Value = serde_json::from_slice(&explained).unwrap();
    let aspects = report["aspects"].as_array().unwrap();
    assert_eq!(aspects.len(), 6);
    for a in aspects {
        let d = a["normalized_difference"].as_f64().unwrap();
        let expected =
            (a["user_score"].as_f64().unwrap() - a["item_score"].as_f64().unwrap()).abs() / 9.0;
        assert_eq!(d, expected);
    }
}

#[test]
fn bad_input_fails_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_guidedrec"))
        .args(["run", "--config", p(&dir.path().join("missing.toml"))])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(!String::from_utf8_lossy(&out.stderr).is_empty());
}
