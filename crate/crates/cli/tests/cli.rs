use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn qcomb(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qcomb")).args(args).env("QCOMB_THREADS", "2").output().expect("spawn qcomb")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn csv_rows(text: &str) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    r.records().map(|x| x.unwrap().iter().map(String::from).collect()).collect()
}

#[test]
fn solve_sdp_invert_d3_n2() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.json");
    let o = qcomb(&["solve", "--task", "invert", "--d", "3", "--n", "2", "--method", "sdp", "--output", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r = read_json(&out);
    assert_eq!(r["status"], "ok");
    assert_eq!(r["schema_version"], 1);
    let f = r["sdp"]["fidelity"].as_f64().unwrap();
    assert!((f - 1.0 / 3.0).abs() < 1e-5);
    assert!(r["sdp"]["duality_gap"].as_f64().unwrap().abs() < 1e-6);
    assert!(r["param_counts"]["symmetric"].as_u64().is_some());
    assert!(!r["blocks"].as_array().unwrap().is_empty());
}

#[test]
fn nlopt_and_both_methods() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.json");
    let o = qcomb(&["solve", "--task", "invert", "--d", "3", "--n", "2", "--method", "both", "--output", out.to_str().unwrap()]);
    assert!(o.status.success());
    let r = read_json(&out);
    let sdp = r["sdp"]["fidelity"].as_f64().unwrap();
    let nl = r["nlopt"]["fidelity"].as_f64().unwrap();
    assert!(nl >= 1.0 / 3.0 - 1e-4);
    assert!((r["method_gap"].as_f64().unwrap() - (nl - sdp)).abs() < 1e-15);
    assert!(r["nlopt"]["gradient_norm"].as_f64().is_some());
}

#[test]
fn identical_runs_give_identical_records() {
    let dir = tempfile::tempdir().unwrap();
    let mut records = Vec::new();
    for i in 0..2 {
        let out = dir.path().join(format!("r{i}.json"));
        let o = qcomb(&[
            "solve", "--task", "transpose", "--d", "2", "--n", "2", "--method", "both", "--restarts", "4", "--verify",
            "--mc-samples", "200", "--seed", "5", "--output", out.to_str().unwrap(),
        ]);
        assert!(o.status.success());
        let mut r = read_json(&out);
        r.as_object_mut().unwrap().remove("timing");
        records.push(serde_json::to_string(&r).unwrap());
    }
    assert_eq!(records[0], records[1]);
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "task = \"transpose\"\nd = 2\nn = 3\nmethod = \"sdp\"\n").unwrap();
    let out = dir.path().join("r.json");
    let o = qcomb(&["solve", "--config", cfg.to_str().unwrap(), "--n", "1", "--output", out.to_str().unwrap()]);
    assert!(o.status.success());
    let r = read_json(&out);
    assert_eq!(r["config"]["n"], 1);
    assert_eq!(r["config"]["task"], "transpose");
    assert!((r["sdp"]["fidelity"].as_f64().unwrap() - 0.5).abs() < 1e-6);
}

#[test]
fn invalid_config_is_rejected() {
    assert!(!qcomb(&["solve", "--task", "invert", "--d", "1", "--n", "2"]).status.success());
    assert!(!qcomb(&["solve", "--task", "rotate", "--d", "2", "--n", "2"]).status.success());
}

#[test]
fn failure_still_writes_a_partial_record() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.json");
    let bad = dir.path().join("missing").join("x.dat-s");
    let o = qcomb(&[
        "solve", "--task", "invert", "--d", "2", "--n", "1", "--export-sdpa", bad.to_str().unwrap(), "--output",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
    let r = read_json(&out);
    assert_eq!(r["status"], "error");
    assert!(r["error"].as_str().unwrap().contains("x.dat-s"));
    assert_eq!(r["config"]["d"], 2);
}

#[test]
fn table_transpose_d2() {
    let o = qcomb(&["table", "--task", "transpose", "--d", "2", "--n", "1..4"]);
    assert!(o.status.success());
    let rows = csv_rows(&stdout(&o));
    let fids: Vec<&str> = rows.iter().map(|r| r[4].as_str()).collect();
    assert_eq!(fids, ["0.500000", "0.750000", "0.933013", "1.000000"]);
    assert!(rows.iter().all(|r| !r[5].is_empty()));
}

#[test]
fn table_invert_d5() {
    let o = qcomb(&["table", "--task", "invert", "--d", "5", "--n", "1..4"]);
    assert!(o.status.success());
    let fids: Vec<String> = csv_rows(&stdout(&o)).into_iter().map(|r| r[4].clone()).collect();
    assert_eq!(fids, ["0.080000", "0.120000", "0.160000", "0.200000"]);
}

#[test]
fn empty_table_has_only_a_header() {
    let o = qcomb(&["table", "--task", "invert", "--d", "3", "--n", "4..2"]);
    assert!(o.status.success());
    assert_eq!(stdout(&o).trim(), "task,d,n,method,fidelity,error_bound,status");
}

#[test]
fn verify_round_trip_and_mc_section() {
    let dir = tempfile::tempdir().unwrap();
    let blocks = dir.path().join("b.json");
    let o = qcomb(&["solve", "--task", "transpose", "--d", "2", "--n", "1", "--blocks-out", blocks.to_str().unwrap()]);
    assert!(o.status.success());
    let report = dir.path().join("v.json");
    let o = qcomb(&["verify", "--blocks", blocks.to_str().unwrap(), "--mc-samples", "10000", "--output", report.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v = read_json(&report);
    assert_eq!(v["verification"]["passed"], true);
    assert_eq!(v["verification"]["mc"]["samples"], 10000);
    for check in v["verification"]["checks"].as_array().unwrap() {
        assert_eq!(check["status"], "pass", "{check}");
    }
}

#[test]
fn corrupted_blocks_name_the_failed_check() {
    let dir = tempfile::tempdir().unwrap();
    let blocks = dir.path().join("b.json");
    assert!(qcomb(&["solve", "--task", "transpose", "--d", "2", "--n", "1", "--blocks-out", blocks.to_str().unwrap()])
        .status
        .success());
    let mut file = read_json(&blocks);
    let first = &mut file["blocks"][0]["re"][0];
    *first = Value::from(-1.0);
    std::fs::write(&blocks, serde_json::to_string(&file).unwrap()).unwrap();
    let o = qcomb(&["verify", "--blocks", blocks.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    let failed: Vec<&str> = v["verification"]["failed_checks"].as_array().unwrap().iter().map(|x| x.as_str().unwrap()).collect();
    assert!(failed.contains(&"positivity"), "{failed:?}");
    assert!(String::from_utf8_lossy(&o.stderr).contains("positivity"));
}

#[test]
fn malformed_blocks_file_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let blocks = dir.path().join("b.json");
    std::fs::write(&blocks, "{\"schema_version\": 1, \"blocks\": 3}").unwrap();
    let o = qcomb(&["verify", "--blocks", blocks.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("malformed"));
}

#[test]
fn count_params_columns() {
    let o = qcomb(&["count-params", "--task", "transpose", "--d", "2,3", "--n", "1..2"]);
    assert!(o.status.success());
    let rows = csv_rows(&stdout(&o));
    assert_eq!(rows.len(), 4);
    for r in &rows {
        let (d, n): (usize, usize) = (r[1].parse().unwrap(), r[2].parse().unwrap());
        let sym = qcomb::param_comb::count_parameters(qcomb::Task::Transpose, d, n).unwrap();
        assert_eq!(r[3], sym.to_string());
        let naive: f64 = r[4].parse().unwrap();
        let ratio: f64 = r[5].parse().unwrap();
        assert!((ratio - naive / sym as f64).abs() < 1e-6 * ratio);
    }
    assert_eq!(rows[0][4], "272");
}

#[test]
fn export_sdpa_is_readable() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p.dat-s");
    let o = qcomb(&["export-sdpa", "--task", "invert", "--d", "3", "--n", "2", "--output", path.to_str().unwrap()]);
    assert!(o.status.success());
    let p = qcomb::sdp_solver::sdpa::import_sdpa(&path).unwrap();
    let model = qcomb::CombModel::new(qcomb::Task::Invert, 3, 2).unwrap();
    assert_eq!(p, model.assemble_sdp().unwrap());
}

#[test]
fn large_cells_skip_full_space_checks() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.json");
    let o = qcomb(&["solve", "--task", "invert", "--d", "3", "--n", "3", "--verify", "--output", out.to_str().unwrap()]);
    assert!(o.status.success());
    let r = read_json(&out);
    let checks = r["verification"]["checks"].as_array().unwrap();
    let skipped: Vec<&str> =
        checks.iter().filter(|c| c["status"] == "skipped").map(|c| c["name"].as_str().unwrap()).collect();
    assert!(skipped.contains(&"reconstruction") && skipped.contains(&"oracle_fidelity"), "{skipped:?}");
    assert_eq!(r["verification"]["full_space_dim"], 6561);
}
