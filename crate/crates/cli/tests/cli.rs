use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn flowxai(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_flowxai")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = flowxai(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Small, fast settings for end-to-end runs.
const FAST: [&str; 10] = [
    "--epochs",
    "30",
    "--shap-samples",
    "64",
    "--importance-rows",
    "20",
    "--background-size",
    "20",
    "--permutation-repeats",
    "2",
];

fn small_csv(dir: &Path) -> PathBuf {
    let csv = dir.join("small.csv");
    ok(&["synth", "--benign", "150", "--attack", "150", "--seed", "3", "--out", s(&csv)]);
    csv
}

#[test]
fn synth_writes_header_plus_rows_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("nested/b.csv");
    let printed = ok(&["synth", "--preset", "ddos-like", "--out", s(&a)]);
    assert_eq!(printed.trim(), s(&a));
    ok(&["synth", "--out", s(&b)]);
    let text = std::fs::read_to_string(&a).unwrap();
    assert_eq!(text.lines().count(), 2001);
    assert_eq!(text, std::fs::read_to_string(&b).unwrap());
}

#[test]
fn synth_bad_spec_fails_with_message() {
    let dir = tempfile::tempdir().unwrap();
    let out = flowxai(&["synth", "--spec", "/no/such/spec.json", "--out", s(&dir.path().join("x.csv"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("spec.json"));
    let out = flowxai(&["synth", "--preset", "nope", "--out", s(&dir.path().join("x.csv"))]);
    assert_ne!(out.status.code(), Some(0));
}

#[test]
fn missing_input_is_a_load_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = flowxai(&["pipeline", "--input", "/no/such/flows.csv", "--output", s(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("stage load"));
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let csv = small_csv(dir.path());
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"no_such_field": 1}"#).unwrap();
    let out = flowxai(&["pipeline", "--config", s(&bad), "--input", s(&csv), "--output", s(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("stage config"));
    let out = flowxai(&["pipeline", "--input", s(&csv), "--output", s(dir.path()), "--top-k", "0"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn one_to_one_needs_a_single_attack_label() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("multi.csv");
    std::fs::write(&csv, "a,b,Label\n1,2,BENIGN\n3,4,DrDoS_DNS\n5,6,DrDoS_LDAP\n").unwrap();
    let out = flowxai(&["preprocess", "--input", s(&csv), "--output", s(&dir.path().join("o"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("attack-label"));
}

#[test]
fn pipeline_saturates_when_top_k_exceeds_features() {
    let dir = tempfile::tempdir().unwrap();
    let csv = small_csv(dir.path());
    let out = dir.path().join("run");
    let mut args = vec!["pipeline", "--input", s(&csv), "--output", s(&out), "--top-k", "100"];
    args.extend(FAST);
    let printed = ok(&args);
    let report = json(&out.join("report.json"));
    assert_eq!(report["scenario"], "one-to-one");
    assert_eq!(report["feature_count_before"], 24);
    assert_eq!(report["feature_count_after"], 24);
    assert_eq!(report["selected_features"].as_array().unwrap().len(), 24);
    for key in ["accuracy", "precision", "recall", "f1", "auc"] {
        assert!(report["metrics"][key].as_f64().unwrap() > 0.9, "{key}");
    }
    assert!(report["per_class"]["benign"]["support"].as_u64().unwrap() > 0);

    // Every artifact is printed and listed in the manifest with its digest.
    let manifest = json(&out.join("manifest.json"));
    let listed = manifest["artifacts"].as_array().unwrap();
    for entry in listed {
        let path = out.join(entry["path"].as_str().unwrap());
        assert!(printed.contains(s(&path)));
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(entry["bytes"].as_u64().unwrap(), bytes.len() as u64);
    }
    assert!(printed.contains("manifest.json"));
    for svg in ["bar", "summary", "dependence", "force"] {
        let name = format!("{svg}_one-to-one.svg");
        assert!(listed.iter().any(|e| e["path"] == name.as_str()), "{name}");
    }
}

#[test]
fn one_to_all_pools_attack_types() {
    let dir = tempfile::tempdir().unwrap();
    let csv = small_csv(dir.path());
    // Relabel half the attacks as a second type.
    let text = std::fs::read_to_string(&csv).unwrap();
    let mut n = 0;
    let relabeled: Vec<String> = text
        .lines()
        .map(|l| {
            if l.ends_with(",ATTACK") {
                n += 1;
                if n % 2 == 0 {
                    return l.replace(",ATTACK", ",OTHER");
                }
            }
            l.to_string()
        })
        .collect();
    std::fs::write(&csv, relabeled.join("\n") + "\n").unwrap();
    let out = dir.path().join("all");
    let mut args = vec!["pipeline", "--scenario", "one-to-all", "--input", s(&csv), "--output", s(&out)];
    args.extend(FAST);
    ok(&args);
    assert_eq!(json(&out.join("report.json"))["scenario"], "one-to-all");
    for group in ["ATTACK", "OTHER"] {
        assert!(out.join(format!("gbt_{group}.json")).exists());
        assert!(out.join(format!("ranking_shap_{group}.json")).exists());
    }
    let test = std::fs::read_to_string(out.join("test.csv")).unwrap();
    assert!(test.contains(",OTHER") && test.contains(",ATTACK"));
}

#[test]
fn staged_commands_chain() {
    let dir = tempfile::tempdir().unwrap();
    let csv = small_csv(dir.path());
    let d = |name: &str| dir.path().join(name);
    ok(&["preprocess", "--input", s(&csv), "--output", s(&d("pre"))]);
    let (train_csv, sel_dir) = (d("pre/train.csv"), d("sel"));
    let mut args = vec!["select-features", "--input", s(&train_csv), "--output", s(&sel_dir), "--top-k", "8"];
    args.extend(FAST);
    ok(&args);
    let selection = json(&d("sel/selection.json"));
    assert_eq!(selection["features"].as_array().unwrap().len(), 8);
    ok(&[
        "train",
        "--input",
        s(&d("pre/train.csv")),
        "--selection",
        s(&d("sel/selection.json")),
        "--output",
        s(&d("model")),
        "--epochs",
        "30",
    ]);
    let model = d("model/model.json");
    let scaler = d("model/scaler.json");
    ok(&[
        "evaluate",
        "--model",
        s(&model),
        "--scaler",
        s(&scaler),
        "--input",
        s(&d("pre/test.csv")),
        "--output",
        s(&d("eval")),
    ]);
    let report = json(&d("eval/report.json"));
    assert_eq!(report["feature_count_after"], 8);
    assert!(report["metrics"]["accuracy"].as_f64().unwrap() > 0.9);
    ok(&[
        "explain-global",
        "--model",
        s(&model),
        "--scaler",
        s(&scaler),
        "--input",
        s(&d("pre/test.csv")),
        "--background",
        s(&d("pre/train.csv")),
        "--output",
        s(&d("global")),
        "--shap-samples",
        "64",
        "--background-size",
        "10",
    ]);
    for f in ["explanations.json", "summary.json", "bar_one-to-one.svg", "dependence_one-to-one.svg"] {
        assert!(d("global").join(f).exists(), "{f}");
    }
    let explanations = json(&d("global/explanations.json"));
    for e in explanations["explanations"].as_array().unwrap() {
        let phi: f64 = e["phi"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).sum();
        let residual = e["base_value"].as_f64().unwrap() + phi - e["prediction"].as_f64().unwrap();
        assert!(residual.abs() < 1e-6);
    }
}

fn local(dir: &Path, run: &Path, row: usize, extra: &[&str]) -> Output {
    let files = ["model.json", "scaler.json", "background.csv", "test.csv"].map(|f| run.join(f));
    let row = row.to_string();
    let mut args = vec![
        "explain-local",
        "--model",
        s(&files[0]),
        "--scaler",
        s(&files[1]),
        "--background",
        s(&files[2]),
        "--input",
        s(&files[3]),
        "--row",
        &row,
        "--output",
        s(dir),
    ];
    args.extend(extra);
    flowxai(&args)
}

#[test]
fn explain_local_records_outcome() {
    let dir = tempfile::tempdir().unwrap();
    let csv = small_csv(dir.path());
    let run = dir.path().join("run");
    let mut args = vec!["pipeline", "--input", s(&csv), "--output", s(&run)];
    args.extend(FAST);
    ok(&args);
    let test = std::fs::read_to_string(run.join("test.csv")).unwrap();
    let labels: Vec<&str> = test.lines().skip(1).map(|l| l.rsplit(',').next().unwrap()).collect();
    let attack_row = labels.iter().position(|l| *l == "ATTACK").unwrap();
    let benign_row = labels.iter().position(|l| *l == "BENIGN").unwrap();

    let out_dir = dir.path().join("local");
    let out = local(&out_dir, &run, attack_row, &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let force = json(&out_dir.join("force_one-to-one.json"));
    assert_eq!(force["outcome"], "malicious_predicted_malicious");
    assert_eq!(force["row"], attack_row);
    assert!(out_dir.join("force_one-to-one.svg").exists());
    let phi: Vec<f64> = force["contributions"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| c["phi"].as_f64().unwrap())
        .collect();
    assert!(phi.windows(2).all(|w| w[0].abs() >= w[1].abs()));
    let total = force["base_value"].as_f64().unwrap() + phi.iter().sum::<f64>();
    assert!((total - force["benign_probability"].as_f64().unwrap()).abs() < 1e-6);

    // A threshold of 1 calls every flow malicious, so a benign row is a miss.
    let out = local(&out_dir, &run, benign_row, &["--threshold", "1"]);
    assert!(out.status.success());
    assert_eq!(json(&out_dir.join("force_one-to-one.json"))["outcome"], "benign_predicted_malicious");

    let out = local(&out_dir, &run, labels.len(), &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("out of range"));
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let csv = small_csv(dir.path());
    let cfg = dir.path().join("run.json");
    std::fs::write(
        &cfg,
        format!(
            r#"{{"input": {:?}, "top_k": 5, "seed": 11, "mlp": {{"epochs": 20}}, "shap_samples": 64, "importance_rows": 20, "background_size": 20}}"#,
            s(&csv)
        ),
    )
    .unwrap();
    let out = dir.path().join("run");
    ok(&["pipeline", "--config", s(&cfg), "--output", s(&out), "--top-k", "6"]);
    let report = json(&out.join("report.json"));
    assert_eq!(report["feature_count_after"], 6);
    let saved = json(&out.join("config.json"));
    assert_eq!(saved["seed"], 11);
    assert_eq!(saved["mlp"]["epochs"], 20);
    assert_eq!(saved["top_k"], 6);
}
