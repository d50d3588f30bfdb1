use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn dish_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/dish.json")
}

fn hcc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hcc"))
        .args(args)
        .env_remove("HCC_ALPHA")
        .env_remove("HCC_THREADS")
        .output()
        .expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn json(bytes: &[u8]) -> serde_json::Value {
    serde_json::from_slice(bytes).expect("json output")
}

/// Synthetic labelled table on the dish taxonomy.
fn scores(dir: &TempDir, n: usize) -> PathBuf {
    let path = dir.path().join("scores.csv");
    let out = hcc(&[
        "synth",
        "--taxonomy",
        s(&dish_path()),
        "--n",
        &n.to_string(),
        "--seed",
        "5",
        "--output",
        s(&path),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    path
}

#[test]
fn validate_reports_the_taxonomy() {
    let out = hcc(&["validate", "--taxonomy", s(&dish_path())]);
    assert!(out.status.success());
    let v = json(&out.stdout);
    assert_eq!(v["taxonomy"]["leaves"], 7);
    assert_eq!(v["taxonomy"]["depth"], 3);
    assert!((v["taxonomy"]["default_beta"].as_f64().unwrap() - 1.0 / 3.0).abs() < 1e-12);
}

#[test]
fn covers_lists_eleven_for_the_dish() {
    let out = hcc(&["covers", "--taxonomy", s(&dish_path())]);
    assert!(out.status.success());
    let v = json(&out.stdout);
    assert_eq!(v["n_covers"], 11);
    assert_eq!(v["covers"][0]["members"][0], "dish");
}

#[test]
fn alpha_out_of_range_exits_with_validation_code() {
    let dir = tempfile::tempdir().unwrap();
    let sc = scores(&dir, 50);
    let outdir = dir.path().join("run");
    let out = hcc(&[
        "evaluate",
        "--taxonomy",
        s(&dish_path()),
        "--scores",
        s(&sc),
        "--alpha",
        "1.2",
        "--output",
        s(&outdir),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let err = json(&out.stderr);
    assert_eq!(err["error"]["kind"], "validation");
    assert!(err["error"]["message"].as_str().unwrap().contains("alpha"));
    assert!(!outdir.exists());
}

#[test]
fn usage_errors_exit_with_validation_code() {
    let out = hcc(&["evaluate", "--taxonomy"]);
    assert_eq!(out.status.code(), Some(1));
    let out = hcc(&["covers", "--taxonomy", "x.json", "--cover-mode", "fancy"]);
    assert_eq!(out.status.code(), Some(1));
    let out = hcc(&["--help"]);
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn missing_file_is_a_runtime_error() {
    let out = hcc(&["validate", "--taxonomy", "/nonexistent/t.json"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(json(&out.stderr)["error"]["kind"], "runtime");
}

#[test]
fn failed_run_leaves_no_partial_files() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    fs::write(
        &bad,
        "instance_id,true_leaf,omelette,pancakes,Greek salad,Caesar salad,cheese sandwich,ham sandwich,tuna sandwich\n\
         a,omelette,0.4,0.1,0.1,0.1,0.1,0.1,0.1\n\
         b,omelette,0.9,0.1,0.1,0.1,0.1,0.1,0.1\n",
    )
    .unwrap();
    let outdir = dir.path().join("run");
    fs::create_dir(&outdir).unwrap();
    let out = hcc(&[
        "evaluate",
        "--taxonomy",
        s(&dish_path()),
        "--scores",
        s(&bad),
        "--output",
        s(&outdir),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));
    assert_eq!(fs::read_dir(&outdir).unwrap().count(), 0);
}

#[test]
fn evaluate_writes_all_outputs_and_echoes_auto_beta() {
    let dir = tempfile::tempdir().unwrap();
    let sc = scores(&dir, 400);
    let outdir = dir.path().join("run");
    let out = hcc(&[
        "evaluate",
        "--taxonomy",
        s(&dish_path()),
        "--scores",
        s(&sc),
        "--output",
        s(&outdir),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    for f in [
        "model.json",
        "predictions.csv",
        "metrics.json",
        "metrics.csv",
    ] {
        assert!(outdir.join(f).exists(), "{f}");
    }
    let summary = json(&fs::read(outdir.join("metrics.json")).unwrap());
    assert_eq!(summary["beta_source"], "auto");
    assert!((summary["beta"].as_f64().unwrap() - 1.0 / 3.0).abs() < 1e-12);
    assert_eq!(summary["n_calibration"], 320);
    assert_eq!(summary["n_test"], 80);
    let preds = fs::read_to_string(outdir.join("predictions.csv")).unwrap();
    assert_eq!(preds.lines().count(), 81);
}

#[test]
fn lca_predicts_one_node_per_instance() {
    let dir = tempfile::tempdir().unwrap();
    let sc = scores(&dir, 300);
    let outdir = dir.path().join("run");
    let out = hcc(&[
        "evaluate",
        "--taxonomy",
        s(&dish_path()),
        "--scores",
        s(&sc),
        "--method",
        "lca",
        "--output",
        s(&outdir),
    ]);
    assert!(out.status.success());
    let v = json(&out.stdout);
    assert_eq!(v["metrics"]["ps_size"]["mean"], 1.0);
    assert_eq!(v["metrics"]["ps_size"]["sd"], 0.0);
}

#[test]
fn environment_variables_configure_runs() {
    let dir = tempfile::tempdir().unwrap();
    let sc = scores(&dir, 200);
    let out = Command::new(env!("CARGO_BIN_EXE_hcc"))
        .args(["evaluate", "--output", s(&dir.path().join("run"))])
        .env("HCC_TAXONOMY", dish_path())
        .env("HCC_SCORES", &sc)
        .env("HCC_ALPHA", "0.2")
        .env("HCC_BETA", "0.5")
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let v = json(&out.stdout);
    assert_eq!(v["alpha"], 0.2);
    assert_eq!(v["beta"], 0.5);
    assert_eq!(v["beta_source"], "configured");
}

#[test]
fn calibrate_then_predict_matches_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let sc = scores(&dir, 500);
    let model = dir.path().join("model.json");
    let out = hcc(&[
        "calibrate",
        "--taxonomy",
        s(&dish_path()),
        "--scores",
        s(&sc),
        "--method",
        "hcc-crc",
        "--output",
        s(&model),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let mut outputs = Vec::new();
    for threads in ["1", "4"] {
        let p = dir.path().join(format!("p{threads}.csv"));
        for method in ["hcc", "hcc-crc"] {
            let out = hcc(&[
                "predict",
                "--threads",
                threads,
                "--taxonomy",
                s(&dish_path()),
                "--scores",
                s(&sc),
                "--model",
                s(&model),
                "--method",
                method,
                "--output",
                s(&p),
            ]);
            assert!(
                out.status.success(),
                "{}",
                String::from_utf8_lossy(&out.stderr)
            );
            outputs.push(fs::read(&p).unwrap());
        }
    }
    assert_eq!(outputs[0], outputs[2]);
    assert_eq!(outputs[1], outputs[3]);
}

#[test]
fn predict_without_risk_control_asks_for_recalibration() {
    let dir = tempfile::tempdir().unwrap();
    let sc = scores(&dir, 100);
    let model = dir.path().join("model.json");
    assert!(hcc(&[
        "calibrate",
        "--taxonomy",
        s(&dish_path()),
        "--scores",
        s(&sc),
        "--output",
        s(&model),
    ])
    .status
    .success());
    let out = hcc(&[
        "predict",
        "--taxonomy",
        s(&dish_path()),
        "--scores",
        s(&sc),
        "--model",
        s(&model),
        "--method",
        "hcc-crc",
        "--output",
        s(&dir.path().join("p.csv")),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!dir.path().join("p.csv").exists());
}

#[test]
fn sweep_writes_one_row_per_beta() {
    let dir = tempfile::tempdir().unwrap();
    let sc = scores(&dir, 300);
    let out = hcc(&[
        "sweep-beta",
        "--taxonomy",
        s(&dish_path()),
        "--scores",
        s(&sc),
        "--betas",
        "0,0.25,1",
    ]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 4);
    assert!(lines[1].starts_with("hcc,0.1,0,"));
}
