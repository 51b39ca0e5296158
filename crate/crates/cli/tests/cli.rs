use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fts(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fts")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = fts(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn repo_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn simulate_and_tokenize(dir: &Path, count: usize) -> PathBuf {
    let data = dir.join("data");
    ok(&["simulate", "--count", &count.to_string(), "--seed", "11", "--out", s(&data)]);
    ok(&["tokenize", "--events", s(&data.join("events.jsonl")), "--shards", "3", "--out", s(&data)]);
    data
}

#[test]
fn simulate_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    ok(&["simulate", "--count", "100", "--seed", "5", "--out", s(&a)]);
    ok(&["--jobs", "3", "simulate", "--count", "100", "--seed", "5", "--out", s(&b)]);
    for f in ["events.jsonl", "truth.jsonl", "process.toml"] {
        let x = std::fs::read(a.join(f)).unwrap();
        assert!(!x.is_empty());
        assert_eq!(x, std::fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn federate_demo_scenario_writes_all_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    simulate_and_tokenize(dir.path(), 600);
    let configs = dir.path().join("configs");
    std::fs::create_dir_all(&configs).unwrap();
    let scenario = configs.join("demo-scenario.toml");
    std::fs::copy(repo_root().join("configs/demo-scenario.toml"), &scenario).unwrap();
    let out = dir.path().join("out");
    ok(&["federate", "--config", s(&scenario), "--out", s(&out)]);
    let root = out.join("demo");
    for f in [
        "clients/site-a.ftsg",
        "clients/site-b.ftsg",
        "clients/site-c.ftsg",
        "synthetic.pht1",
        "manifest",
        "global.ftsg",
    ] {
        assert!(root.join(f).metadata().unwrap().len() > 0, "{f}");
    }
    let manifest = std::fs::read_to_string(root.join("manifest")).unwrap();
    assert!(manifest.contains("global_sha256"));

    let again = dir.path().join("again");
    ok(&["--jobs", "1", "federate", "--config", s(&scenario), "--out", s(&again)]);
    assert_eq!(manifest, std::fs::read_to_string(again.join("demo/manifest")).unwrap());
}

#[test]
fn score_reproduces_two_method_example() {
    let dir = tempfile::tempdir().unwrap();
    let metrics = dir.path().join("metrics.csv");
    std::fs::write(
        &metrics,
        "method,metric,value,ci_low,ci_high,higher_is_better\n\
         A,auc,0.8,0.7804,0.8196,true\n\
         B,auc,0.6,0.5804,0.6196,true\n",
    )
    .unwrap();
    let out = dir.path().join("score");
    ok(&["score", "--metrics", s(&metrics), "--out", s(&out)]);
    let md = std::fs::read_to_string(out.join("score.md")).unwrap();
    assert!(md.contains("1.000 [0.902, 1.000]"), "{md}");
    assert!(md.contains("0.000 [0.000, 0.098]"), "{md}");
    let csv = std::fs::read_to_string(out.join("score.csv")).unwrap();
    // Raw, unclamped bounds stay in the CSV.
    let a = csv.lines().find(|l| l.starts_with("A,")).unwrap();
    let high: f64 = a.split(',').nth(4).unwrap().parse().unwrap();
    assert!((high - 1.098).abs() < 1e-9, "{a}");
}

#[test]
fn inference_pipeline_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulate_and_tokenize(dir.path(), 400);
    let model = dir.path().join("model.ftsg");
    let train_cfg = repo_root().join("configs/train-ngram.toml");
    ok(&[
        "train",
        "--corpus",
        s(&data.join("corpus.pht1")),
        "--vocab",
        s(&data.join("vocab.tsv")),
        "--config",
        s(&train_cfg),
        "--out",
        s(&model),
    ]);
    let task = repo_root().join("configs/tasks/icu_or_death.toml");
    let est = dir.path().join("est.csv");
    let infer = |out: &Path| {
        ok(&[
            "infer",
            "--checkpoint",
            s(&model),
            "--vocab",
            s(&data.join("vocab.tsv")),
            "--corpus",
            s(&data.join("corpus.pht1")),
            "--patients",
            s(&data.join("patients.txt")),
            "--config",
            s(&task),
            "--truth",
            s(&data.join("truth.jsonl")),
            "--seed",
            "2",
            "--out",
            s(out),
        ]);
    };
    infer(&est);
    let est2 = dir.path().join("est2.csv");
    infer(&est2);
    assert_eq!(std::fs::read(&est).unwrap(), std::fs::read(&est2).unwrap());
    let text = std::fs::read_to_string(&est).unwrap();
    assert!(text.starts_with("patient_id,estimate,censored_rate,label\nP"));

    let eval = dir.path().join("eval");
    ok(&["evaluate", "--estimates", &format!("ngram={}", s(&est)), "--out", s(&eval)]);
    let metrics = std::fs::read_to_string(eval.join("metrics.csv")).unwrap();
    assert!(metrics.contains("ngram,auc,") && metrics.contains("ngram,brier,"));
    assert!(eval.join("calibration_ngram.csv").exists());
}

#[test]
fn failures_report_a_single_category_line() {
    let dir = tempfile::tempdir().unwrap();
    let out = fts(&["tokenize", "--events", s(&dir.path().join("missing.jsonl")), "--out", s(dir.path())]);
    assert!(!out.status.success());
    let err = String::from_utf8(out.stderr).unwrap();
    assert_eq!(err.lines().count(), 1, "{err}");
    assert!(err.starts_with("error[IoFailure]: "), "{err}");

    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "quantiles = \"ten\"\n").unwrap();
    std::fs::write(dir.path().join("e.jsonl"), "").unwrap();
    let out = fts(&["tokenize", "--events", s(&dir.path().join("e.jsonl")), "--config", s(&bad), "--out", s(dir.path())]);
    assert!(String::from_utf8(out.stderr).unwrap().starts_with("error[BadConfig]: "));

    let metrics = dir.path().join("m.csv");
    std::fs::write(&metrics, "method,metric,value,ci_low,ci_high,higher_is_better\nA,auc,0.8,0.7,0.9,true\n").unwrap();
    let out = fts(&["score", "--metrics", s(&metrics), "--out", s(dir.path())]);
    assert!(String::from_utf8(out.stderr).unwrap().starts_with("error[Evaluation]: "));
}
