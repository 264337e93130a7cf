use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use curriculum_core::dataset_io::{save_dataset, DataFormat};
use curriculum_core::synthetic::{generate, CorpusSpec};
use serde_json::Value;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_curriculum"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn ok(args: &[&str]) -> Output {
    let o = run(args);
    assert!(o.status.success(), "{args:?} failed: {}", stderr(&o));
    o
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn corpus(dir: &Path, name: &str, size: usize) -> PathBuf {
    let path = dir.join(name);
    let format = DataFormat::from_path(&path).unwrap();
    save_dataset(&generate(&CorpusSpec::graded(size, 0.1), 1), &path, format).unwrap();
    path
}

fn jsonl(path: &Path) -> Vec<Value> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn score_echoes_external_probabilities() {
    let dir = tempfile::tempdir().unwrap();
    let data = corpus(dir.path(), "d.jsonl", 5);
    let scores = dir.path().join("ext.jsonl");
    let probs = [[0.9, 0.1], [0.5, 0.5], [0.2, 0.8], [0.65, 0.35], [0.0, 1.0]];
    let text: Vec<String> = probs
        .iter()
        .enumerate()
        .map(|(id, p)| serde_json::json!({"id": id, "probs": p}).to_string())
        .collect();
    fs::write(&scores, text.join("\n")).unwrap();
    let out = dir.path().join("scores.jsonl");
    ok(&[
        "score",
        "--data",
        p(&data),
        "--classes",
        "2",
        "--scores",
        p(&scores),
        "--out",
        p(&out),
    ]);
    let records = jsonl(&out);
    let hand = [0.8, 0.0, 0.6, 0.3, 1.0];
    for (id, rec) in records.iter().enumerate() {
        assert_eq!(rec["id"], id);
        assert_eq!(rec["probs"], serde_json::json!(probs[id]));
        assert!((rec["score"].as_f64().unwrap() - hand[id]).abs() < 1e-12);
    }
    let manifest = json(&dir.path().join("scores.jsonl.manifest.json"));
    assert_eq!(manifest["command"], "score");
    assert_eq!(manifest["inputs"].as_array().unwrap().len(), 2);
}

#[test]
fn score_with_probe_covers_every_example() {
    let dir = tempfile::tempdir().unwrap();
    let data = corpus(dir.path(), "d.csv", 300);
    let out = dir.path().join("s.jsonl");
    ok(&[
        "score",
        "--data",
        p(&data),
        "--classes",
        "2",
        "--probe-fraction",
        "0.2",
        "--out",
        p(&out),
    ]);
    let records = jsonl(&out);
    assert_eq!(records.len(), 300);
    assert!(records
        .iter()
        .all(|r| (0.0..=1.0).contains(&r["score"].as_f64().unwrap())));
    let again = run(&[
        "score",
        "--data",
        p(&data),
        "--classes",
        "2",
        "--out",
        p(&out),
    ]);
    assert!(!again.status.success());
    assert!(stderr(&again).contains("--force"));
}

#[test]
fn missing_input_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nowhere.jsonl");
    let o = run(&[
        "score",
        "--data",
        p(&missing),
        "--classes",
        "2",
        "--out",
        p(&dir.path().join("o.jsonl")),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("nowhere.jsonl"), "{}", stderr(&o));
}

#[test]
fn train_smoke_and_out_dir_safety() {
    let dir = tempfile::tempdir().unwrap();
    let data = corpus(dir.path(), "d.jsonl", 200);
    let out = dir.path().join("run");
    let args = [
        "train",
        "--data",
        p(&data),
        "--classes",
        "2",
        "--strategy",
        "Random",
        "--seed",
        "66",
        "--epochs",
        "2",
        "--out",
        p(&out),
    ];
    ok(&args);
    for f in [
        "report_Random_seed66.json",
        "checkpoints_Random_seed66.csv",
        "manifest.json",
    ] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    let report = json(&out.join("report_Random_seed66.json"));
    assert_eq!(report["manifest"], "manifest.json");
    assert_eq!(report["checkpoints"].as_array().unwrap().len(), 20);
    let manifest = json(&out.join("manifest.json"));
    assert_eq!(manifest["config"]["train.epochs"], 2);
    assert_eq!(manifest["config"]["train.batch_size"], 16);
    assert_eq!(manifest["inputs"][0]["sha256"].as_str().unwrap().len(), 64);

    let refused = run(&args);
    assert_eq!(refused.status.code(), Some(1));
    assert!(stderr(&refused).contains("--force"));
    let before = fs::read(out.join("report_Random_seed66.json")).unwrap();
    ok(&[&args[..], &["--force"]].concat());
    assert_eq!(
        before,
        fs::read(out.join("report_Random_seed66.json")).unwrap()
    );
}

#[test]
fn unknown_strategy_is_a_usage_error_listing_all_names() {
    let o = run(&[
        "train",
        "--data",
        "x.jsonl",
        "--classes",
        "2",
        "--strategy",
        "Hardest",
        "--out",
        "o",
    ]);
    assert_eq!(o.status.code(), Some(2));
    let msg = stderr(&o);
    for name in ["E2D", "D2E", "SME", "SMD", "PME", "PMD", "Random", "Length"] {
        assert!(msg.contains(name), "{msg}");
    }
}

#[test]
fn config_precedence_and_schema_errors() {
    let dir = tempfile::tempdir().unwrap();
    let data = corpus(dir.path(), "d.jsonl", 120);
    let cfg = dir.path().join("c.toml");
    fs::write(
        &cfg,
        "[train]\nepochs = 2\nbatch_size = 8\nseeds = [5]\n\n[data]\nclass_count = 2\n",
    )
    .unwrap();

    let out = dir.path().join("a");
    ok(&[
        "train",
        "--data",
        p(&data),
        "--config",
        p(&cfg),
        "--epochs",
        "3",
        "--out",
        p(&out),
    ]);
    let m = json(&out.join("manifest.json"));
    assert_eq!(m["config"]["train.epochs"], 3);
    assert_eq!(m["config"]["train.batch_size"], 8);
    assert_eq!(m["config"]["train.checkpoint_fraction"], 0.1);
    assert_eq!(json(&out.join("report_Random_seed5.json"))["epochs"], 3);

    let out = dir.path().join("b");
    ok(&[
        "train",
        "--data",
        p(&data),
        "--config",
        p(&cfg),
        "--out",
        p(&out),
    ]);
    assert_eq!(
        json(&out.join("manifest.json"))["config"]["train.epochs"],
        2
    );

    let bad = dir.path().join("bad.toml");
    fs::write(
        &bad,
        "train.epochs = 0\ntrain.checkpoint_fraction = 3\noptimizer.lr = \"fast\"\n",
    )
    .unwrap();
    let o = run(&[
        "train",
        "--data",
        p(&data),
        "--classes",
        "2",
        "--config",
        p(&bad),
        "--out",
        p(&dir.path().join("c")),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("optimizer.lr"), "{}", stderr(&o));
    fs::write(&bad, "train.epochs = 0\ntrain.checkpoint_fraction = 3\n").unwrap();
    let o = run(&[
        "train",
        "--data",
        p(&data),
        "--classes",
        "2",
        "--config",
        p(&bad),
        "--out",
        p(&dir.path().join("c")),
    ]);
    let msg = stderr(&o);
    assert_eq!(o.status.code(), Some(2));
    assert!(
        msg.contains("train.epochs") && msg.contains("train.checkpoint_fraction"),
        "{msg}"
    );
}

#[test]
fn plan_dumps_every_epoch() {
    let dir = tempfile::tempdir().unwrap();
    let data = corpus(dir.path(), "d.jsonl", 40);
    let out = dir.path().join("plan.jsonl");
    ok(&[
        "plan",
        "--data",
        p(&data),
        "--classes",
        "2",
        "--strategy",
        "PME",
        "--epochs",
        "2",
        "--out",
        p(&out),
    ]);
    let lines = jsonl(&out);
    assert_eq!(lines.len(), 80);
    assert_eq!(lines[0]["epoch"], 1);
    assert_eq!(lines[40]["epoch"], 2);
    let tags: Vec<&str> = lines[..16]
        .iter()
        .map(|l| l["partition_tag"].as_str().unwrap())
        .collect();
    assert_eq!(tags.iter().filter(|t| **t == "B1").count(), 9);
    let mut ids: Vec<u64> = lines[..40]
        .iter()
        .map(|l| l["example_id"].as_u64().unwrap())
        .collect();
    ids.sort_unstable();
    assert_eq!(ids, (0..40).collect::<Vec<_>>());
}

#[test]
fn fewshot_subset_sizes_and_exhaustion() {
    let dir = tempfile::tempdir().unwrap();
    let data = corpus(dir.path(), "d.jsonl", 1250);
    let out = dir.path().join("fs");
    ok(&[
        "fewshot",
        "--data",
        p(&data),
        "--classes",
        "2",
        "--strategy",
        "E2D",
        "--seed",
        "66",
        "--epochs",
        "1",
        "--out",
        p(&out),
    ]);
    assert_eq!(json(&out.join("report_E2D_seed66.json"))["train_size"], 64);
    let sel = json(&out.join("selection_E2D_seed66.json"));
    assert_eq!(sel["parent_ids"].as_array().unwrap().len(), 64);

    // k = N reproduces plain training byte for byte.
    let small = corpus(dir.path(), "s.jsonl", 100);
    let (a, b) = (dir.path().join("few"), dir.path().join("full"));
    let common = [
        "--data",
        p(&small),
        "--classes",
        "2",
        "--strategy",
        "SMD",
        "--seed",
        "3",
        "--epochs",
        "2",
    ];
    ok(&[&["fewshot", "--k", "80", "--out", p(&a)][..], &common].concat());
    ok(&[&["train", "--out", p(&b)][..], &common].concat());
    for f in ["report_SMD_seed3.json", "checkpoints_SMD_seed3.csv"] {
        assert_eq!(
            fs::read(a.join(f)).unwrap(),
            fs::read(b.join(f)).unwrap(),
            "{f}"
        );
    }

    let zero = run(&[
        &["fewshot", "--k", "0", "--out", p(&dir.path().join("z"))][..],
        &common,
    ]
    .concat());
    assert_eq!(zero.status.code(), Some(2));
    let big = run(&[
        &["fewshot", "--k", "81", "--out", p(&dir.path().join("y"))][..],
        &common,
    ]
    .concat());
    assert_ne!(big.status.code(), Some(0));
    assert!(stderr(&big).contains("81"));
}

#[test]
fn analyze_histograms() {
    let dir = tempfile::tempdir().unwrap();
    let data = corpus(dir.path(), "d.jsonl", 50);
    let s0 = dir.path().join("s0.jsonl");
    ok(&[
        "score",
        "--data",
        p(&data),
        "--classes",
        "2",
        "--out",
        p(&s0),
    ]);
    let s1 = dir.path().join("s1.jsonl");
    ok(&[
        "score",
        "--data",
        p(&data),
        "--classes",
        "2",
        "--probe-fraction",
        "1",
        "--probe-epochs",
        "5",
        "--out",
        p(&s1),
    ]);

    let read = |path: &Path| -> Vec<csv::StringRecord> {
        csv::Reader::from_path(path)
            .unwrap()
            .records()
            .map(Result::unwrap)
            .collect()
    };
    let one = dir.path().join("h1.csv");
    ok(&[
        "analyze",
        "--scores",
        p(&s0),
        "--bins",
        "5",
        "--out",
        p(&one),
    ]);
    let rows = read(&one);
    assert_eq!(rows.len(), 5);
    assert_eq!(
        rows.iter()
            .map(|r| r[2].parse::<usize>().unwrap())
            .sum::<usize>(),
        50
    );

    let two = dir.path().join("h2.csv");
    ok(&[
        "analyze",
        "--scores",
        p(&s0),
        "--scores",
        p(&s1),
        "--out",
        p(&two),
    ]);
    let rows = read(&two);
    assert_eq!(rows.len(), 40);
    assert!(rows[..20].iter().all(|r| &r[4] == "0") && rows[20..].iter().all(|r| &r[4] == "1"));

    let preds = dir.path().join("pred.jsonl");
    let lines: Vec<String> = (0..50)
        .map(|id| serde_json::json!({"id": id, "predicted": 0, "label": id % 2}).to_string())
        .collect();
    fs::write(&preds, lines.join("\n")).unwrap();
    let split = dir.path().join("h3.csv");
    ok(&[
        "analyze",
        "--scores",
        p(&s0),
        "--predictions",
        p(&preds),
        "--out",
        p(&split),
    ]);
    let wrong: usize = read(&split)
        .iter()
        .map(|r| r[3].parse::<usize>().unwrap())
        .sum();
    assert_eq!(wrong, 25);

    fs::write(&preds, lines[..49].join("\n")).unwrap();
    let o = run(&[
        "analyze",
        "--scores",
        p(&s0),
        "--predictions",
        p(&preds),
        "--out",
        p(&dir.path().join("h4.csv")),
    ]);
    assert!(stderr(&o).contains("mismatched ids"), "{}", stderr(&o));

    let o = run(&[
        "analyze",
        "--scores",
        p(&s0),
        "--bins",
        "1",
        "--out",
        p(&dir.path().join("h5.csv")),
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn compare_shapes_and_gaps() {
    let dir = tempfile::tempdir().unwrap();
    let data = corpus(dir.path(), "d.jsonl", 200);
    let out = dir.path().join("cmp");
    let o = ok(&[
        "compare",
        "--data",
        p(&data),
        "--classes",
        "2",
        "--strategy",
        "Random,E2D",
        "--seed",
        "66",
        "--epochs",
        "1",
        "--out",
        p(&out),
    ]);
    let rows: Vec<csv::StringRecord> = csv::Reader::from_path(out.join("aggregate.csv"))
        .unwrap()
        .records()
        .map(Result::unwrap)
        .collect();
    assert_eq!(rows.len(), 2);
    assert_eq!((&rows[0][0], &rows[1][0]), ("Random", "E2D"));
    assert!(String::from_utf8_lossy(&o.stdout).contains("E2D"));

    let out = dir.path().join("cmp3");
    ok(&[
        "compare",
        "--data",
        p(&data),
        "--classes",
        "2",
        "--strategy",
        "Length",
        "--epochs",
        "1",
        "--jobs",
        "3",
        "--out",
        p(&out),
    ]);
    let rows: Vec<csv::StringRecord> = csv::Reader::from_path(out.join("aggregate.csv"))
        .unwrap()
        .records()
        .map(Result::unwrap)
        .collect();
    assert_eq!(&rows[0][1], "3");

    let empty = run(&[
        "compare",
        "--data",
        p(&data),
        "--classes",
        "2",
        "--out",
        p(&dir.path().join("e")),
    ]);
    assert_eq!(empty.status.code(), Some(2));
    assert!(stderr(&empty).contains("empty strategy list"));

    // Broken external scores sink the score-driven runs only.
    let bad = dir.path().join("bad.jsonl");
    fs::write(&bad, "{\"id\": 0, \"probs\": [1.0, 0.0]}\n").unwrap();
    let out = dir.path().join("gap");
    let o = run(&[
        "compare",
        "--data",
        p(&data),
        "--classes",
        "2",
        "--strategy",
        "Random,SME",
        "--seed",
        "1",
        "--seed",
        "2",
        "--scores",
        p(&bad),
        "--epochs",
        "1",
        "--out",
        p(&out),
    ]);
    assert_eq!(o.status.code(), Some(1));
    let agg = fs::read_to_string(out.join("aggregate.csv")).unwrap();
    assert!(agg.contains("missing:1|2"), "{agg}");
    assert!(out.join("report_Random_seed2.json").exists());
    assert_eq!(
        json(&out.join("manifest.json"))["failures"]
            .as_array()
            .unwrap()
            .len(),
        2
    );
}
