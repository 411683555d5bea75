use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use betr_core::corpus::EmbeddingStore;
use betr_core::scaling::{write_runs, LossLawParams, RunRecord, SigmoidParams};
use serde_json::{json, Value};

fn betr(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_betr"))
        .current_dir(dir)
        .env_remove("BETR_SEED")
        .env_remove("BETR_WORKERS")
        .args(args)
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> Value {
    let out = betr(dir, args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

/// 300 documents, every fifth about benchmark `a` or `b`; embeddings point
/// the same way.
fn selection_inputs(dir: &Path) {
    let mut docs = String::new();
    let mut emb = EmbeddingStore::new(4).unwrap();
    for i in 0..300usize {
        let id = format!("doc{i:03}");
        let (text, v) = match i % 10 {
            0 => (
                (0..40)
                    .map(|j| format!("alpha{}", (i + j) % 23))
                    .collect::<Vec<_>>()
                    .join(" "),
                [1.0, 0.05 * (i % 7) as f64, 0.0, 0.1],
            ),
            5 => (
                (0..40)
                    .map(|j| format!("beta{}", (i * 3 + j) % 19))
                    .collect::<Vec<_>>()
                    .join(" "),
                [0.0, 1.0, 0.05 * (i % 5) as f64, 0.1],
            ),
            _ => (
                (0..40)
                    .map(|j| format!("w{}", (i * 7 + j * 13) % 97))
                    .collect::<Vec<_>>()
                    .join(" "),
                [
                    (i as f64).sin(),
                    (i as f64 * 0.7).cos() * 0.3,
                    (i as f64 * 1.3).sin(),
                    1.0,
                ],
            ),
        };
        docs.push_str(&json!({ "id": id, "text": text }).to_string());
        docs.push('\n');
        emb.push(id, &v).unwrap();
    }
    fs::write(dir.join("docs.jsonl"), docs).unwrap();
    emb.save(dir.join("docs.emb")).unwrap();

    let mut bench = String::new();
    let mut bemb = EmbeddingStore::new(4).unwrap();
    for (b, axis) in [("a", 0usize), ("b", 1)] {
        for i in 0..6 {
            let split = if i < 4 { "train" } else { "test" };
            let word = if b == "a" { "alpha" } else { "beta" };
            let q: Vec<String> = (0..10).map(|j| format!("{word}{}", (i + j) % 17)).collect();
            bench.push_str(
                &json!({
                    "benchmark_id": b,
                    "example_id": format!("e{i}"),
                    "split": split,
                    "fields": { "question": q.join(" "), "answer": "yes" },
                })
                .to_string(),
            );
            bench.push('\n');
            let mut v = [0.02 * i as f64; 4];
            v[axis] = 1.0;
            bemb.push(format!("{b}/e{i}"), &v).unwrap();
        }
    }
    fs::write(dir.join("bench.jsonl"), bench).unwrap();
    bemb.save(dir.join("bench.emb")).unwrap();
}

#[test]
fn batch_size_matches_the_law() {
    let dir = tempfile::tempdir().unwrap();
    let v = ok(dir.path(), &["batch-size", "--tokens", "1.1e9"]);
    assert_eq!(v[0]["batch_tokens"], 262144);
}

#[test]
fn selection_chain_runs_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    selection_inputs(d);
    let m = ["--manifest-dir", "manifests", "--seed", "11"];
    let with =
        |args: &[&str]| -> Vec<String> { args.iter().chain(&m).map(|s| s.to_string()).collect() };
    let run = |args: &[&str]| {
        let a = with(args);
        ok(d, &a.iter().map(String::as_str).collect::<Vec<_>>())
    };

    let v = run(&["ingest", "--input", "docs.jsonl", "--out", "corpus.jsonl"]);
    assert_eq!(v["documents"], 300);
    let v = run(&[
        "sample",
        "--input",
        "corpus.jsonl",
        "--n",
        "150",
        "--out",
        "sample.json",
    ]);
    assert_eq!(v["sample_size"], 150);
    let first = fs::read(d.join("sample.json")).unwrap();
    run(&[
        "sample",
        "--input",
        "corpus.jsonl",
        "--n",
        "150",
        "--out",
        "sample.json",
    ]);
    assert_eq!(first, fs::read(d.join("sample.json")).unwrap());

    let v = run(&[
        "build-targets",
        "--benchmarks",
        "bench.jsonl",
        "--embeddings",
        "bench.emb",
        "--per-benchmark",
        "4",
        "--out",
        "targets.json",
    ]);
    assert_eq!(v["targets"], 8);
    let v = run(&[
        "rank",
        "--embeddings",
        "docs.emb",
        "--sample",
        "sample.json",
        "--targets",
        "targets.json",
        "--label-fraction",
        "0.2",
        "--out",
        "scores.jsonl",
    ]);
    assert_eq!(v["positives"], 30);
    run(&[
        "diagnostics",
        "--scores",
        "scores.jsonl",
        "--fraction",
        "0.2",
        "--out-dir",
        "diag",
    ]);
    let header = fs::read_to_string(d.join("diag/diagnostics_rank_percentile.csv")).unwrap();
    assert!(header.starts_with("bin_low,bin_high,count,in_top_fraction\n"));

    let hyper = r#"{"dim": 8, "bucket_count": 1024, "min_count": 1, "epochs": 20, "lr": 0.2}"#;
    let v = run(&[
        "train-scorer",
        "--corpus",
        "corpus.jsonl",
        "--labels",
        "scores.jsonl",
        "--out",
        "model.bin",
        "--hyperparams",
        hyper,
    ]);
    assert_eq!(v["deterministic"], true);
    run(&[
        "score",
        "--model",
        "model.bin",
        "--corpus",
        "corpus.jsonl",
        "--out",
        "pool.jsonl",
    ]);
    let v = run(&[
        "calibrate",
        "--scores",
        "pool.jsonl",
        "--target-fraction",
        "0.2",
        "--holdout",
        "100",
        "--exclude",
        "sample.json",
        "--out",
        "cal.json",
    ]);
    assert!(v["achieved_fraction"].as_f64().unwrap() >= 0.2 - 1e-9);
    let v = run(&[
        "filter",
        "--scores",
        "pool.jsonl",
        "--calibration",
        "cal.json",
        "--corpus",
        "corpus.jsonl",
        "--out",
        "filtered.jsonl",
    ]);
    assert!(v["stats"]["docs_kept"].as_u64().unwrap() > 0);
    let v = run(&[
        "decontam",
        "--benchmarks",
        "bench.jsonl",
        "--corpus",
        "filtered.jsonl",
        "--out",
        "clean.jsonl",
        "--report",
        "decontam.json",
    ]);
    assert!(v["documents_in"].as_u64().unwrap() > 0);

    for name in [
        "ingest",
        "sample",
        "rank",
        "train-scorer",
        "filter",
        "decontam",
    ] {
        let path = d.join(format!("manifests/{name}.json"));
        let m: Value = serde_json::from_slice(&fs::read(&path).unwrap()).unwrap();
        assert_eq!(m["subcommand"], name);
        assert!(d.join(format!("manifests/{name}.timings.json")).is_file());
    }
    let m: Value =
        serde_json::from_slice(&fs::read(d.join("manifests/sample.json")).unwrap()).unwrap();
    assert_eq!(m["seeds"]["sample"], 11);
    assert_eq!(m["inputs"][0]["path"], "corpus.jsonl");
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(
        d.join("dup.jsonl"),
        "{\"id\":\"x\",\"text\":\"a\"}\n{\"id\":\"x\",\"text\":\"b\"}\n",
    )
    .unwrap();
    let out = betr(d, &["ingest", "--input", "dup.jsonl", "--out", "o.jsonl"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));

    let out = betr(
        d,
        &["ingest", "--input", "missing.jsonl", "--out", "o.jsonl"],
    );
    assert_eq!(code(&out), 2);

    fs::create_dir(d.join("adir")).unwrap();
    fs::write(d.join("ok.jsonl"), "{\"id\":\"x\",\"text\":\"a\"}\n").unwrap();
    let out = betr(d, &["ingest", "--input", "ok.jsonl", "--out", "adir"]);
    assert_eq!(code(&out), 3);

    fs::write(
        d.join("pool.jsonl"),
        "{\"id\":\"a\",\"score\":0.9,\"token_count\":90}\n{\"id\":\"b\",\"score\":0.1,\"token_count\":10}\n",
    )
    .unwrap();
    let args = [
        "calibrate",
        "--scores",
        "pool.jsonl",
        "--target-fraction",
        "0.1",
        "--holdout",
        "2",
        "--out",
        "cal.json",
    ];
    assert_eq!(code(&betr(d, &args)), 0);
    let mut strict = args.to_vec();
    strict.push("--strict");
    assert_eq!(code(&betr(d, &strict)), 4);
}

#[test]
fn pipeline_run_from_config() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    selection_inputs(d);
    fs::write(
        d.join("run.toml"),
        r#"[run]
output_dir = "out"
stages = ["ingest", "sample", "build-targets", "rank", "diagnostics"]

[inputs]
documents = "docs.jsonl"
benchmarks = "bench.jsonl"
document_embeddings = "docs.emb"
benchmark_embeddings = "bench.emb"

[sample]
size = 100
"#,
    )
    .unwrap();
    let v = ok(
        d,
        &[
            "run",
            "--config",
            "run.toml",
            "--seed",
            "4",
            "--set",
            "rank.label_fraction=0.2",
        ],
    );
    assert_eq!(v["stages"].as_array().unwrap().len(), 5);
    let m: Value =
        serde_json::from_slice(&fs::read(d.join("out/manifests/rank.json")).unwrap()).unwrap();
    assert_eq!(m["config"]["run"]["seed"], 4);
    assert_eq!(m["config"]["rank"]["label_fraction"], 0.2);
    assert_eq!(m["inputs"][0]["path"], "sample.json");

    let bad = betr(
        d,
        &[
            "run",
            "--config",
            "run.toml",
            "--set",
            "rank.label_fraction=2",
        ],
    );
    assert_eq!(code(&bad), 2);
}

fn planted_runs(dir: &Path) -> PathBuf {
    let law = LossLawParams::from_linear(400.0, 900.0, 1.8, 0.33, 0.28);
    let sig = SigmoidParams {
        c1: 0.7488,
        c2: 0.2520,
        k: -10.01,
        l0: 0.6357,
    };
    let ns = [50e6, 175e6, 790e6, 3.1e9];
    let ds = [1.1e9, 4.7e9, 19e9, 76e9];
    let mut runs = Vec::new();
    for &n in &ns {
        for &d in &ds {
            let loss = law.predict(n, d);
            // Shift losses into the sigmoid's range for the accuracy metric.
            let bench_loss = loss - 1.6;
            runs.push(
                RunRecord::new(format!("n{n}_d{d}"), n, d)
                    .with_loss("val", loss)
                    .with_loss("hs", bench_loss)
                    .with_accuracy("hs", sig.predict(bench_loss)),
            );
        }
    }
    let path = dir.join("runs.csv");
    write_runs(fs::File::create(&path).unwrap(), &runs).unwrap();
    path
}

#[test]
fn scaling_chain() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    planted_runs(d);
    let v = ok(
        d,
        &[
            "fit-loss",
            "--runs",
            "runs.csv",
            "--metric",
            "val",
            "--bootstrap",
            "8",
            "--out",
            "val.json",
        ],
    );
    assert!((v["alpha"].as_f64().unwrap() - 0.33).abs() < 0.01, "{v}");
    ok(
        d,
        &[
            "fit-loss",
            "--runs",
            "runs.csv",
            "--metric",
            "hs",
            "--bootstrap",
            "8",
            "--out",
            "hs_loss.json",
        ],
    );
    let v = ok(
        d,
        &[
            "fit-acc",
            "--runs",
            "runs.csv",
            "--benchmark",
            "hs",
            "--bootstrap",
            "8",
            "--out",
            "hs_acc.json",
        ],
    );
    assert!(
        (v["params"]["L0"].as_f64().unwrap() - 0.6357).abs() < 0.01,
        "{v}"
    );

    let v = ok(
        d,
        &[
            "predict",
            "--loss-fit",
            "hs_loss.json",
            "--acc-fit",
            "hs_acc.json",
            "--n",
            "1e9",
            "--d",
            "2e10",
        ],
    );
    assert!(v["accuracy"].as_f64().unwrap() > 0.25);

    ok(
        d,
        &[
            "curve",
            "--loss-fit",
            "val.json",
            "--points",
            "50",
            "--out",
            "val.csv",
            "--json",
            "val_curve.json",
        ],
    );
    for (name, shift) in [
        ("base", "hs_loss.json,hs_acc.json"),
        ("same", "hs_loss.json,hs_acc.json"),
    ] {
        ok(
            d,
            &[
                "curve",
                "--loss-fit",
                "val.json",
                "--benchmark",
                &format!("hs={shift}"),
                "--name",
                name,
                "--out",
                &format!("{name}.csv"),
                "--json",
                &format!("{name}.json"),
            ],
        );
    }
    let v = ok(
        d,
        &[
            "cm",
            "--curves",
            "base.json",
            "same.json",
            "--out",
            "cm.csv",
        ],
    );
    assert_eq!(v["matrix"][0][0], 1.0);
    assert_eq!(v["matrix"][0][1], 1.0);

    let out = ok(
        d,
        &[
            "report",
            "--curves",
            "base.json",
            "same.json",
            "--fits",
            "val.json",
            "hs_acc.json",
            "--out-dir",
            "report",
        ],
    );
    assert!(!out.as_array().unwrap().is_empty());
    let first = fs::read(d.join("report/compute_multipliers.csv")).unwrap();
    ok(
        d,
        &[
            "report",
            "--curves",
            "base.json",
            "same.json",
            "--fits",
            "val.json",
            "hs_acc.json",
            "--out-dir",
            "report",
        ],
    );
    assert_eq!(
        first,
        fs::read(d.join("report/compute_multipliers.csv")).unwrap()
    );

    let missing = betr(d, &["report", "--fits", "nope.json", "--out-dir", "report"]);
    assert_eq!(code(&missing), 2);
}
