use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

fn data(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name).display().to_string()
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_maskbc")).args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn eval_running_example() {
    let out = run(&["eval", &data("scalar_spec.json"), &data("scalar_strategy.json")]);
    assert_eq!(code(&out), 0);
    let v = stdout_json(&out);
    assert_eq!(v["unit"], "nats");
    assert!((v["R1"].as_f64().unwrap() - 0.2027).abs() < 1e-4);
    assert_eq!(v["feasibility"]["passed"], true);
}

#[test]
fn bits_are_nats_over_ln2() {
    let nats = stdout_json(&run(&["eval", &data("scalar_spec.json"), &data("scalar_strategy.json")]));
    let bits = stdout_json(&run(&["--unit", "bits", "eval", &data("scalar_spec.json"), &data("scalar_strategy.json")]));
    assert_eq!(bits["unit"], "bits");
    for key in ["R1", "R2", "E1", "E2"] {
        let n = nats[key].as_f64().unwrap();
        assert_eq!(bits[key].as_f64().unwrap(), n / std::f64::consts::LN_2, "{key}");
    }
    assert!((bits["R1"].as_f64().unwrap() - 0.2925).abs() < 1e-4);
}

#[test]
fn non_symmetric_matrix_is_a_parse_error() {
    let out = run(&["eval", &data("asymmetric_spec.json"), &data("mimo_strategy.json")]);
    assert_eq!(code(&out), 1);
    let err = stderr(&out);
    assert!(err.contains("K:") && err.contains("[0][1]"), "{err}");
}

#[test]
fn infeasible_strategy_reports_margin() {
    let out = run(&["eval", &data("scalar_spec.json"), &data("infeasible_strategy.json")]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("margin -1.5"), "{}", stderr(&out));
    assert_eq!(stdout_json(&out)["feasibility"]["passed"], false);
}

#[test]
fn missing_file_and_bad_flags_exit_one() {
    assert_eq!(code(&run(&["eval", "/nonexistent.json", &data("scalar_strategy.json")])), 1);
    assert_eq!(code(&run(&["frobnicate"])), 1);
    assert_eq!(code(&run(&["eval"])), 1);
    assert_eq!(code(&run(&["--help"])), 0);
}

#[test]
fn verify_passes_on_correct_pipeline() {
    let out = run(&[
        "verify",
        &data("mimo_spec.json"),
        &data("mimo_strategy.json"),
        "--trials",
        "5",
        "--seed",
        "3",
        "--extremal",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stdout));
    let v = stdout_json(&out);
    assert_eq!(v["passed"], true);
    let checks = v["checks"].as_array().unwrap();
    assert!(checks.iter().all(|c| c["status"] == "PASS"));
    assert!(checks.iter().any(|c| c["name"].as_str().unwrap().starts_with("trial 4: ")));
    assert!(checks.iter().any(|c| c["name"].as_str().unwrap().contains("preservation")));
}

#[test]
fn injected_fault_fails_wdp() {
    let out = run(&["verify", &data("scalar_spec.json"), &data("scalar_strategy.json"), "--inject-fault", "a21"]);
    assert_eq!(code(&out), 3);
    let v = stdout_json(&out);
    let failed: Vec<&str> = v["checks"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|c| c["status"] == "FAIL")
        .map(|c| c["name"].as_str().unwrap())
        .collect();
    assert!(failed.iter().any(|n| n.starts_with("wdp:")), "{failed:?}");
}

#[test]
fn unknown_fault_is_usage_error() {
    let out = run(&["verify", &data("scalar_spec.json"), &data("scalar_strategy.json"), "--inject-fault", "b7"]);
    assert_eq!(code(&out), 1);
}

#[test]
fn extremal_on_non_degraded_is_skipped() {
    let out = run(&["verify", &data("nondegraded_spec.json"), &data("mimo_strategy.json"), "--extremal"]);
    assert_eq!(code(&out), 0);
    let v = stdout_json(&out);
    let skip = v["checks"].as_array().unwrap().iter().find(|c| c["status"] == "SKIP").expect("skip entry");
    assert!(skip["note"].as_str().unwrap().contains("degraded"));
}

fn csv_rows(text: &str) -> Vec<Vec<String>> {
    text.lines().skip(1).map(|l| l.split(',').map(str::to_string).collect()).collect()
}

#[test]
fn frontier_mu_sweep_csv() {
    let out = run(&["frontier", &data("scalar_spec.json"), "--mu-list", "1,1.5,2,3", "--out", "csv"]);
    assert_eq!(code(&out), 0);
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().next().unwrap(), "mu,e1_budget,e2_budget,R1,R2,E1,E2,objective,kkt_residual");
    let rows = csv_rows(&text);
    assert_eq!(rows.len(), 4);
    let obj: Vec<f64> = rows.iter().map(|r| r[7].parse().unwrap()).collect();
    assert!(obj.windows(2).all(|w| w[1] >= w[0] - 1e-9), "{obj:?}");
    assert_eq!(rows.iter().map(|r| r[0].as_str()).collect::<Vec<_>>(), ["1", "1.5", "2", "3"]);
}

#[test]
fn frontier_zero_budget_rows() {
    let out = run(&["frontier", &data("scalar_spec.json"), "--mu-list", "1.5,2", "--e1", "0", "--out", "csv"]);
    assert_eq!(code(&out), 0);
    for r in csv_rows(&String::from_utf8(out.stdout).unwrap()) {
        assert_eq!(r[1], "0");
        assert!(r[5].parse::<f64>().unwrap() <= 1e-6, "{r:?}");
    }
}

#[test]
fn frontier_all_infeasible_exits_two() {
    let out = run(&["frontier", &data("scalar_spec.json"), "--mu-list", "2", "--e1", "0", "--e2", "0", "--out", "csv"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8(out.stdout).unwrap().contains("infeasible"));
}

#[test]
fn frontier_empty_mu_list_is_usage_error() {
    assert_eq!(code(&run(&["frontier", &data("scalar_spec.json"), "--mu-list", ""])), 1);
    assert_eq!(code(&run(&["frontier", &data("scalar_spec.json")])), 1);
    assert_eq!(code(&run(&["frontier", &data("scalar_spec.json"), "--mu-list", "0.5"])), 1);
}

#[test]
fn frontier_json_is_byte_deterministic() {
    let args = ["frontier", &data("mimo_spec.json"), "--mu-list", "1.2,2", "--e2", "0.1", "--seed", "5"];
    let a = run(&args);
    let b = run(&args);
    assert_eq!(code(&a), 0);
    assert_eq!(a.stdout, b.stdout);
    let v: Value = serde_json::from_slice(&a.stdout).unwrap();
    assert_eq!(v["rows"][0]["e1_budget"], Value::Null);
    assert!(v["rows"][1]["E2"].as_f64().unwrap() <= 0.1 + 1e-6);
}

#[test]
fn frontier_budgets_follow_the_unit() {
    let bits = run(&["--unit", "bits", "frontier", &data("scalar_spec.json"), "--mu-list", "2", "--e2", "0.1"]);
    let v = stdout_json(&bits);
    assert_eq!(v["rows"][0]["e2_budget"].as_f64().unwrap(), 0.1);
    assert!(v["rows"][0]["E2"].as_f64().unwrap() <= 0.1 + 1e-5);
}

#[test]
fn mc_full_run_passes() {
    let out = run(&["mc", &data("scalar_spec.json"), &data("scalar_strategy.json"), "--n", "1000000", "--seed", "1"]);
    assert_eq!(code(&out), 0);
    let v = stdout_json(&out);
    assert_eq!(v["passed"], true);
    assert_eq!(v["low_sample"], false);
    assert_eq!(v["terms"].as_object().unwrap().len(), 7);
}

#[test]
fn mc_small_run_is_flagged_and_deterministic() {
    let args = ["mc", &data("mimo_spec.json"), &data("mimo_strategy.json"), "--n", "100", "--seed", "9"];
    let a = run(&args);
    let b = run(&args);
    assert_eq!(a.stdout, b.stdout);
    let v = stdout_json(&a);
    assert_eq!(v["low_sample"], true);
    let big = stdout_json(&run(&["mc", &data("mimo_spec.json"), &data("mimo_strategy.json"), "--n", "100000"]));
    let se = |v: &Value| v["terms"]["I(S;Y1)"]["std_error"].as_f64().unwrap();
    assert!(se(&v) > 5.0 * se(&big));
}

#[test]
fn extremal_test_with_candidates() {
    let out = run(&[
        "extremal-test",
        &data("scalar_spec.json"),
        "--mu",
        "3",
        "--candidates",
        &data("candidates.json"),
        "--random",
        "4",
        "--seed",
        "2",
    ]);
    assert_eq!(code(&out), 0);
    let v = stdout_json(&out);
    assert_eq!(v["candidates"].as_array().unwrap().len(), 6);
    assert!((v["k_zt1"][0][0].as_f64().unwrap() - 2.0 / 3.0).abs() < 1e-12);
}

#[test]
fn extremal_test_rejects_non_degraded_and_vector_candidates() {
    assert_eq!(code(&run(&["extremal-test", &data("nondegraded_spec.json"), "--mu", "2"])), 1);
    assert_eq!(code(&run(&["extremal-test", &data("mimo_spec.json"), "--mu", "2", "--random", "3"])), 1);
    assert_eq!(code(&run(&["extremal-test", &data("mimo_spec.json"), "--mu", "2"])), 0);
}

#[test]
fn self_test_subset() {
    let out = run(&["self-test", "--only", "3,5"]);
    assert_eq!(code(&out), 0);
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines.iter().all(|l| l.starts_with("PASS")));
    assert_eq!(code(&run(&["self-test", "--only", "42"])), 1);
}

#[test]
fn output_flag_writes_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("region.json");
    let out = run(&["eval", &data("scalar_spec.json"), &data("scalar_strategy.json"), "-o", path.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    assert!(out.stdout.is_empty());
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert!(v["R1"].is_number());
}
