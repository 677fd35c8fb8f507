use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use medlda::persistence::load_snapshots;
use medlda::predict::TaskKind;

const BINARY_TOY: &str = "+1 0:3 1:2\n-1 2:3 3:2\n";

fn medlda(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_medlda")).current_dir(dir).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn assert_ok(o: &Output) {
    assert!(o.status.success(), "status {:?}\nstderr: {}", o.status, String::from_utf8_lossy(&o.stderr));
}

fn multiclass_toy() -> String {
    let mut s = String::new();
    for i in 0..12 {
        let c = i % 3;
        s.push_str(&format!("{c} {}:4 {}:3 {}:1\n", 3 * c, 3 * c + 1, (3 * c + 2 + i) % 9));
    }
    s
}

#[test]
fn toy_training_succeeds_and_writes_snapshot_and_log() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "train.txt", BINARY_TOY);
    let o = medlda(dir.path(), &["train", "--task", "binary", "--data", "train.txt", "--topics", "2", "--out", "m.bin"]);
    assert_ok(&o);
    let snaps = load_snapshots(dir.path().join("m.bin")).unwrap();
    assert_eq!(snaps.len(), 1);
    assert_eq!(snaps[0].task_kind, TaskKind::Binary);
    let log = fs::read_to_string(dir.path().join("m.bin.log.tsv")).unwrap();
    let lines: Vec<&str> = log.lines().collect();
    assert_eq!(lines[0], "iteration\tseconds\ttrain_accuracy");
    assert_eq!(lines.len(), 11);
}

#[test]
fn missing_input_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = medlda(dir.path(), &["train", "--task", "binary", "--data", "absent.txt", "--out", "m.bin"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("absent.txt"));
    let o = medlda(dir.path(), &["train", "--data", "absent.txt", "--nonsense"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn bad_hyperparameter_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "train.txt", BINARY_TOY);
    let o = medlda(dir.path(), &["train", "--task", "binary", "--data", "train.txt", "--beta", "-1", "--out", "m.bin"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn malformed_data_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "train.txt", "+1 0:3\nbanana 1:2\n");
    let o = medlda(dir.path(), &["train", "--task", "binary", "--data", "train.txt", "--out", "m.bin"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn fixed_seed_reproduces_the_snapshot() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "train.txt", &multiclass_toy());
    for out in ["a.bin", "b.bin"] {
        assert_ok(&medlda(dir.path(), &["train", "--task", "multiclass", "--data", "train.txt", "--topics", "3", "--seed", "7", "--out", out]));
    }
    let a = fs::read(dir.path().join("a.bin")).unwrap();
    let b = fs::read(dir.path().join("b.bin")).unwrap();
    assert_eq!(a, b);
    assert_ok(&medlda(dir.path(), &["train", "--task", "multiclass", "--data", "train.txt", "--topics", "3", "--seed", "8", "--out", "c.bin"]));
    assert_ne!(a, fs::read(dir.path().join("c.bin")).unwrap());
}

#[test]
fn predict_writes_one_line_per_document() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "train.txt", BINARY_TOY);
    write(dir.path(), "test.txt", "+1 0:2 1:1\n-1 3:4\n+1 0:1\n");
    assert_ok(&medlda(dir.path(), &["train", "--task", "binary", "--data", "train.txt", "--topics", "2", "--out", "m.bin"]));
    assert_ok(&medlda(dir.path(), &["predict", "--model", "m.bin", "--test", "test.txt", "--out", "p.txt"]));
    let preds = fs::read_to_string(dir.path().join("p.txt")).unwrap();
    let lines: Vec<&str> = preds.lines().collect();
    assert_eq!(lines.len(), 3);
    for (i, l) in lines.iter().enumerate() {
        let (id, p) = l.split_once('\t').unwrap();
        assert_eq!(id, i.to_string());
        assert!(p == "+1" || p == "-1");
    }
}

#[test]
fn empty_test_set_gives_empty_predictions() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "train.txt", BINARY_TOY);
    write(dir.path(), "empty.txt", "");
    assert_ok(&medlda(dir.path(), &["train", "--task", "binary", "--data", "train.txt", "--topics", "2", "--out", "m.bin"]));
    let o = medlda(dir.path(), &["predict", "--model", "m.bin", "--test", "empty.txt", "--out", "p.txt"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(fs::read_to_string(dir.path().join("p.txt")).unwrap(), "");
}

#[test]
fn eval_of_perfect_predictions_prints_accuracy_one() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "truth.txt", "+1 0:1\n-1 1:1\n+1 2:1\n");
    write(dir.path(), "p.txt", "0\t+1\n1\t-1\n2\t+1\n");
    let o = medlda(dir.path(), &["eval", "--task", "binary", "--predictions", "p.txt", "--test", "truth.txt"]);
    assert_ok(&o);
    assert_eq!(stdout(&o), "accuracy\t1\n");
}

#[test]
fn eval_rejects_mismatched_line_counts() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "truth.txt", "+1 0:1\n-1 1:1\n+1 2:1\n");
    write(dir.path(), "p.txt", "0\t+1\n1\t-1\n");
    let o = medlda(dir.path(), &["eval", "--task", "binary", "--predictions", "p.txt", "--test", "truth.txt"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("2 predictions but 3"));
}

#[test]
fn regression_pipeline_reports_predictive_r2() {
    let dir = tempfile::tempdir().unwrap();
    let mut data = String::new();
    for i in 0..16 {
        let (y, a) = if i % 2 == 0 { (1.0 + 0.01 * i as f64, 0) } else { (-1.0 - 0.01 * i as f64, 4) };
        data.push_str(&format!("{y} {}:5 {}:4 {}:1\n", a, a + 1, (i % 3) + 2));
    }
    write(dir.path(), "train.txt", &data);
    assert_ok(&medlda(dir.path(), &["train", "--task", "regression", "--data", "train.txt", "--topics", "2", "--out", "m.bin"]));
    assert_ok(&medlda(dir.path(), &["predict", "--model", "m.bin", "--test", "train.txt", "--out", "p.txt"]));
    let o = medlda(dir.path(), &["eval", "--task", "regression", "--predictions", "p.txt", "--test", "train.txt"]);
    assert_ok(&o);
    let out = stdout(&o);
    let value: f64 = out.strip_prefix("predictive_r2\t").expect("pR² line").trim().parse().unwrap();
    assert!(value.is_finite() && value <= 1.0);
}

#[test]
fn multilabel_predictions_use_the_label_set_format() {
    let dir = tempfile::tempdir().unwrap();
    let mut data = String::new();
    for i in 0..12 {
        let labels = ["0", "1", "0,1", "-"][i % 4];
        data.push_str(&format!("{labels} {}:3 {}:2\n", i % 4, 4 + i % 3));
    }
    write(dir.path(), "train.txt", &data);
    assert_ok(&medlda(dir.path(), &["train", "--task", "multilabel", "--data", "train.txt", "--topics", "3", "--burnin", "5", "--out", "m.bin"]));
    assert_ok(&medlda(dir.path(), &["predict", "--model", "m.bin", "--test", "train.txt", "--out", "p.txt"]));
    let preds = fs::read_to_string(dir.path().join("p.txt")).unwrap();
    assert_eq!(preds.lines().count(), 12);
    for l in preds.lines() {
        let p = l.split('\t').nth(1).unwrap();
        assert!(p == "-" || p.split(',').all(|x| x == "0" || x == "1"), "bad label set {p:?}");
    }
    let o = medlda(dir.path(), &["eval", "--task", "multilabel", "--predictions", "p.txt", "--test", "train.txt"]);
    assert_ok(&o);
    assert!(stdout(&o).contains("f1\t"));
}

#[test]
fn one_vs_all_writes_one_snapshot_per_class_independent_of_workers() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "train.txt", &multiclass_toy());
    for (w, out) in [("1", "w1.bin"), ("3", "w3.bin")] {
        assert_ok(&medlda(
            dir.path(),
            &["train", "--task", "multiclass", "--driver", "one-vs-all", "--data", "train.txt", "--topics", "3", "--workers", w, "--out", out],
        ));
    }
    let snaps = load_snapshots(dir.path().join("w1.bin")).unwrap();
    assert_eq!(snaps.len(), 3);
    assert!(snaps.iter().all(|s| s.task_kind == TaskKind::Multiclass));
    assert_eq!(fs::read(dir.path().join("w1.bin")).unwrap(), fs::read(dir.path().join("w3.bin")).unwrap());
    assert_ok(&medlda(dir.path(), &["predict", "--model", "w1.bin", "--test", "train.txt", "--out", "p.txt"]));
    let o = medlda(dir.path(), &["eval", "--task", "multiclass", "--predictions", "p.txt", "--test", "train.txt"]);
    assert_ok(&o);
    assert!(stdout(&o).starts_with("accuracy\t"));
}

#[test]
fn config_file_sits_between_flags_and_defaults() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "train.txt", BINARY_TOY);
    write(dir.path(), "run.conf", "task = binary\ndata = train.txt\ntopics = 3\nc = 0.5\nburnin = 4\n");
    assert_ok(&medlda(dir.path(), &["train", "--config", "run.conf", "--c", "2", "--out", "m.bin"]));
    let s = &load_snapshots(dir.path().join("m.bin")).unwrap()[0];
    assert_eq!(s.num_topics(), 3);
    assert_eq!(s.hyper.c, 2.0);
    assert_eq!(s.hyper.ell, 164.0);
    assert_eq!(s.burn_in, 4);
    write(dir.path(), "bad.conf", "topicz = 3\n");
    let o = medlda(dir.path(), &["train", "--config", "bad.conf", "--out", "m.bin"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn multiple_runs_report_mean_and_std() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "train.txt", BINARY_TOY);
    let o = medlda(
        dir.path(),
        &["train", "--task", "binary", "--data", "train.txt", "--test", "train.txt", "--topics", "2", "--runs", "3", "--seed", "5", "--out", "m.bin"],
    );
    assert_ok(&o);
    let out = stdout(&o);
    for r in 0..3 {
        assert!(out.contains(&format!("run\t{r}\tseed={}", 5 + r)));
        assert!(dir.path().join(format!("m.bin.run{r}")).is_file());
    }
    assert!(out.lines().any(|l| l.starts_with("summary\taccuracy\t") && l.contains(" ± ")));
}

#[test]
fn bench_prints_a_parseable_table() {
    let dir = tempfile::tempdir().unwrap();
    let o = medlda(dir.path(), &["bench", "--sizes", "40,80", "--topics", "3,4", "--tasks", "2", "--workers", "2", "--iters", "1"]);
    assert_ok(&o);
    let out = stdout(&o);
    let mut lines = out.lines();
    let header: Vec<&str> = lines.next().unwrap().split('\t').collect();
    assert_eq!(header, ["kind", "docs", "tokens", "topics", "tasks", "workers", "seconds"]);
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split('\t').collect()).collect();
    assert_eq!(rows.len(), 2 * 2 * 2 + 2);
    for r in &rows {
        assert_eq!(r.len(), header.len());
        assert!(r[1..6].iter().all(|c| c.parse::<usize>().is_ok()));
        assert!(r[6].parse::<f64>().unwrap() >= 0.0);
    }
}
