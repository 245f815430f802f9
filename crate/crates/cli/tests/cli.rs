use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn manifest() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

fn data_dir() -> PathBuf {
    manifest().join("../../data")
}

fn conntra(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_conntra"))
        .args(args)
        .env("CONNTRA_DATA_DIR", data_dir())
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = conntra(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

/// Exit code and the parsed single-line error.
fn fails(args: &[&str]) -> (i32, Value) {
    let out = conntra(args);
    assert!(!out.status.success(), "{args:?} succeeded");
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert_eq!(stderr.trim_end().lines().count(), 1, "{stderr}");
    let v: Value = serde_json::from_str(stderr.trim_end()).expect("machine-readable error line");
    assert_eq!(v["exit_code"], out.status.code().unwrap());
    (out.status.code().unwrap(), v)
}

fn schema(name: &str) -> jsonschema::Validator {
    let text = std::fs::read_to_string(manifest().join("schemas").join(format!("{name}.schema.json"))).unwrap();
    jsonschema::validator_for(&serde_json::from_str(&text).unwrap()).unwrap()
}

fn valid(path: &Path, name: &str) -> Value {
    let doc: Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    let errors: Vec<String> = schema(name).iter_errors(&doc).map(|e| format!("{} at {}", e, e.instance_path)).collect();
    assert!(errors.is_empty(), "{}: {errors:#?}", path.display());
    for key in ["config", "seed", "wall_seconds"] {
        assert!(doc.get(key).is_some(), "{key}");
    }
    doc
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const IRIS: &[&str] = &["--model", "mlp", "--dataset", "iris", "--seed", "3", "--epochs", "20", "--iterations-T", "2"];

#[test]
fn pretrain_writes_weights_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("p");
    let mut args = vec!["pretrain"];
    args.extend_from_slice(IRIS);
    args.extend(["--out", s(&out)]);
    ok(&args);
    let doc = valid(&out.join("pretrain_report.json"), "pretrain_report");
    assert_eq!(doc["pretrain"]["epochs"].as_array().unwrap().len(), 21);
    assert_eq!(doc["memory"]["float64_kb_rounded"], 1.88);
    assert_eq!(doc["config"]["pretrain"]["epochs"], 20);
    let w = conntra::weights::load_weights(out.join("pretrained.wts")).unwrap();
    assert_eq!(w.len(), 235);
}

#[test]
fn train_evaluate_report_round() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("iris");
    let mut args = vec!["train"];
    args.extend_from_slice(IRIS);
    args.extend(["--out", s(&run)]);
    let line = ok(&args);
    assert!(line.contains("0.06 KB packed vs 1.88 KB float64"), "{line}");

    let doc = valid(&run.join("train_report.json"), "train_report");
    assert_eq!(doc["search"]["loss_evaluations"], 2 * 235 * 3);
    assert_eq!(doc["memory"]["ratio"], 32.0);
    let curve = doc["search"]["curve"].as_array().unwrap();
    let losses: Vec<f64> = curve.iter().map(|p| p["optimal_loss"].as_f64().unwrap()).collect();
    assert!(losses.windows(2).all(|w| w[1] <= w[0]));

    let csv = std::fs::read_to_string(run.join("curve.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "percent_training_complete,training_error_pct,validation_error_pct");
    assert_eq!(csv.lines().count(), curve.len() + 1);
    assert!(csv.lines().last().unwrap().starts_with("100.0,"));

    let codes = conntra::domain::PackedCodes::read_from(std::fs::File::open(run.join("weights.cntrapk")).unwrap()).unwrap();
    assert_eq!(codes.len(), 235);
    assert!(codes.unpack().unwrap().iter().all(|v| [-1.0, 0.0, 1.0].contains(v)));

    let eval_dir = dir.path().join("eval");
    let packed = run.join("weights.cntrapk");
    ok(&["evaluate", "--model", "mlp", "--dataset", "iris", "--weights", s(&packed), "--out", s(&eval_dir)]);
    let ev = valid(&eval_dir.join("evaluate_report.json"), "evaluate_report");
    assert_eq!(ev["weights"]["format"], "packed");
    assert_eq!(ev["result"]["training_error_pct"], doc["result"]["training_error_pct"]);
    assert_eq!(ev["result"]["validation_error_pct"], doc["result"]["validation_error_pct"]);
    assert_eq!((ev["memory"]["packed_kb_rounded"].as_f64(), ev["memory"]["float64_kb_rounded"].as_f64()), (Some(0.06), Some(1.88)));

    let float = run.join("pretrained.wts");
    ok(&["evaluate", "--model", "mlp", "--dataset", "iris", "--weights", s(&float), "--out", s(&eval_dir)]);
    let ev = valid(&eval_dir.join("evaluate_report.json"), "evaluate_report");
    assert_eq!(ev["weights"]["format"], "float64");
    assert_eq!(ev["result"]["training_error_pct"], doc["backprop"]["training_error_pct"]);

    let rep = dir.path().join("rep");
    ok(&["report", "--run", s(&run), "--out", s(&rep)]);
    let r = valid(&rep.join("report.json"), "report");
    let rows = r["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!((rows[0]["method"].as_str(), rows[1]["method"].as_str()), (Some("backprop"), Some("conntra")));
    assert_eq!((rows[0]["memory_kb"].as_f64(), rows[1]["memory_kb"].as_f64()), (Some(1.88), Some(0.06)));
    let table = std::fs::read_to_string(rep.join("comparison.md")).unwrap();
    assert_eq!(table.lines().count(), 4);
    let curves = std::fs::read_to_string(rep.join("curves.csv")).unwrap();
    assert!(curves.starts_with("run,method,percent_training_complete,training_error_pct,validation_error_pct\n"));
    assert_eq!(curves.lines().count(), 1 + 21 + curve.len());
}

#[test]
fn reduce_qubo_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let fixture = manifest().join("fixtures/qubo-2x2.txt");
    let line = ok(&["reduce-qubo", "--input", s(&fixture), "--out", s(dir.path())]);
    assert_eq!(line.trim(), "argmin match: true");
    let doc = valid(&dir.path().join("qubo_report.json"), "qubo_report");
    assert_eq!(doc["qubo_argmin"], serde_json::json!([[1, 0]]));
    assert!(doc["max_value_gap"].as_f64().unwrap() < 1e-9);
    let t = conntra::qubo::parse_training_instance(&std::fs::read_to_string(dir.path().join("training_instance.txt")).unwrap())
        .unwrap();
    assert_eq!((t.samples(), t.dim()), (2, 2));
}

#[test]
fn synthetic_full_and_incremental_agree() {
    let dir = tempfile::tempdir().unwrap();
    let mut weights = Vec::new();
    for mode in ["full", "incremental"] {
        let out = dir.path().join(mode);
        ok(&["train", "--model", "logreg", "--dataset", "synthetic", "--epochs", "3", "--eval-mode", mode, "--out", s(&out)]);
        valid(&out.join("train_report.json"), "train_report");
        weights.push(std::fs::read(out.join("weights.cntrapk")).unwrap());
    }
    assert_eq!(weights[0], weights[1]);
}

#[test]
fn config_file_is_echoed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "model = \"logreg\"\ndataset = \"synthetic\"\nseed = 11\nomega = [-0.5, 0.5]\n[pretrain]\nepochs = 2\n").unwrap();
    let out = dir.path().join("o");
    ok(&["train", "--config", s(&cfg), "--out", s(&out)]);
    let doc = valid(&out.join("train_report.json"), "train_report");
    assert_eq!(doc["seed"], 11);
    assert_eq!(doc["config"]["omega"], serde_json::json!([-0.5, 0.5]));
    assert_eq!(doc["memory"]["packed_bits"], 1);
    assert_eq!(doc["memory"]["ratio"], 64.0);
}

#[test]
fn errors_have_distinct_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = d.join("o");

    let (code, v) = fails(&["train", "--model", "perceptron"]);
    assert_eq!((code, v["error"].as_str()), (2, Some("usage")));

    let bad_cfg = d.join("bad.toml");
    std::fs::write(&bad_cfg, "modle = \"mlp\"\n").unwrap();
    let (code, v) = fails(&["train", "--config", s(&bad_cfg), "--out", s(&out)]);
    assert_eq!((code, v["error"].as_str()), (3, Some("config")));

    let (code, v) = fails(&["reduce-qubo", "--input", s(&d.join("nope.txt")), "--out", s(&out)]);
    assert_eq!((code, v["error"].as_str()), (4, Some("missing-file")));

    let empty = d.join("empty");
    std::fs::create_dir(&empty).unwrap();
    let (code, v) = fails(&["train", "--model", "logreg", "--dataset", "mnist", "--data-dir", s(&empty), "--out", s(&out)]);
    assert_eq!(code, 4);
    assert!(v["message"].as_str().unwrap().contains("scripts/fetch-mnist.sh"));

    let junk = d.join("junk.wts");
    std::fs::write(&junk, b"CNTRAWTS\x01").unwrap();
    let (code, v) = fails(&["evaluate", "--model", "mlp", "--dataset", "iris", "--weights", s(&junk), "--out", s(&out)]);
    assert_eq!((code, v["error"].as_str()), (6, Some("format")));

    let (code, _) = fails(&["train", "--dataset", "synthetic", "--omega", "1,1", "--out", s(&out)]);
    assert_eq!(code, 7);

    let indefinite = d.join("indefinite.txt");
    std::fs::write(&indefinite, "2\n1 2\n2 1\n0 0\n0\n").unwrap();
    let (code, v) = fails(&["reduce-qubo", "--input", s(&indefinite), "--out", s(&out)]);
    assert_eq!((code, v["error"].as_str()), (10, Some("not-positive-definite")));

    let big = d.join("big.txt");
    let n = 25;
    let mut text = format!("{n}\n");
    for i in 0..n {
        let row: Vec<&str> = (0..n).map(|j| if i == j { "1" } else { "0" }).collect();
        text.push_str(&row.join(" "));
        text.push('\n');
    }
    text.push_str(&vec!["0"; n].join(" "));
    text.push_str("\n0\n");
    std::fs::write(&big, text).unwrap();
    let (code, v) = fails(&["reduce-qubo", "--input", s(&big), "--out", s(&out)]);
    assert_eq!((code, v["error"].as_str()), (11, Some("capacity")));

    let (code, _) = fails(&["evaluate", "--model", "mlp", "--dataset", "iris", "--out", s(&out)]);
    assert_eq!(code, 2);
}

/// Two runs of one command: identical weights and curves, and reports
/// equal once wall times are dropped.
#[test]
fn same_seed_same_bytes() {
    fn strip(v: &mut Value) {
        match v {
            Value::Object(m) => {
                m.remove("wall_seconds");
                m.values_mut().for_each(strip);
            }
            Value::Array(a) => a.iter_mut().for_each(strip),
            _ => {}
        }
    }
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let mut args = vec!["train"];
    args.extend_from_slice(IRIS);
    args.extend(["--out", s(&out)]);
    let files = ["weights.cntrapk", "curve.csv", "pretrained.wts", "pretrain_curve.csv", "train_report.json"];
    let mut snapshots = Vec::new();
    for _ in 0..2 {
        ok(&args);
        snapshots.push(files.map(|f| std::fs::read(out.join(f)).unwrap()));
    }
    for (i, f) in files.iter().enumerate().take(4) {
        assert_eq!(snapshots[0][i], snapshots[1][i], "{f}");
    }
    let mut reports: Vec<Value> = snapshots.iter().map(|s| serde_json::from_slice(&s[4]).unwrap()).collect();
    reports.iter_mut().for_each(strip);
    assert_eq!(reports[0], reports[1]);

    let mut other = args.clone();
    other[6] = "4";
    ok(&other);
    assert_ne!(std::fs::read(out.join("weights.cntrapk")).unwrap(), snapshots[0][0]);
}
