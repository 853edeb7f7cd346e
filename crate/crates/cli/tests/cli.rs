use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn dlr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dlr"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

/// Drops every `wall_ms` field.
fn strip_wall(v: &mut Value) {
    match v {
        Value::Object(m) => {
            m.remove("wall_ms");
            m.values_mut().for_each(strip_wall);
        }
        Value::Array(a) => a.iter_mut().for_each(strip_wall),
        _ => {}
    }
}

#[test]
fn solve_writes_report_and_trace() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.json");
    let trace = dir.path().join("t.jsonl");
    let o = dlr(&[
        "solve",
        "--case",
        "wscc9-step-change-3",
        "--scheme",
        "dlr-ss",
        "--out",
        out.to_str().unwrap(),
        "--trace",
        trace.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = read_json(&out);
    assert!(r["objective"].as_f64().unwrap() > 0.0);
    assert_eq!(r["status"], "converged");
    let lines: Vec<Value> = std::fs::read_to_string(&trace)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), r["inner_iterations"].as_u64().unwrap() as usize);
    assert!(lines.iter().all(|l| l["consensus_l2"].is_number()));
}

#[test]
fn identical_runs_give_identical_reports() {
    let dir = tempfile::tempdir().unwrap();
    let mut reports = Vec::new();
    for i in 0..2 {
        let out = dir.path().join(format!("r{i}.json"));
        let o = dlr(&["--workers", "2", "solve", "--case", "wscc9-step-change-3", "--scheme", "dlr-trans", "--out", out.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0));
        let mut v = read_json(&out);
        strip_wall(&mut v);
        reports.push(serde_json::to_string(&v).unwrap());
    }
    assert_eq!(reports[0], reports[1]);
}

#[test]
fn malformed_case_reports_schema_path() {
    let dir = tempfile::tempdir().unwrap();
    let case = dir.path().join("bad.json");
    let text = r#"{"schema_version":1,"name":"bad","base_mva":100,"dt_seconds":300,"horizon":1,"buses":[{"id":"one"}],"branches":[],"generators":[]}"#;
    std::fs::write(&case, text).unwrap();
    let o = dlr(&["solve", "--case", case.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("buses[0].id"), "{err}");
}

#[test]
fn outer_cap_exits_with_two() {
    let o = dlr(&["solve", "--case", "wscc9-step-change-3", "--outer-max", "1"]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
    let r: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(r["status"], "outer-max-iter");
}

#[test]
fn verify_accepts_stored_report_and_rejects_tampering() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.json");
    let o = dlr(&["solve", "--case", "wscc9-step-change-3", "--scheme", "dlr-trans", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let o = dlr(&["verify", "--report", out.to_str().unwrap(), "--case", "wscc9-step-change-3"]);
    let text = String::from_utf8_lossy(&o.stdout);
    assert_eq!(o.status.code(), Some(0), "{text}");
    assert!(text.contains("PASS dual_ascent_identity"));
    assert!(!text.contains("FAIL"));

    let mut r = read_json(&out);
    let v = r["protocol"]["last"]["v"][0].as_f64().unwrap();
    r["protocol"]["last"]["v"][0] = Value::from(v + 1.0);
    std::fs::write(&out, r.to_string()).unwrap();
    let o = dlr(&["verify", "--report", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stdout).contains("FAIL dual_ascent_identity"));
}

#[test]
fn compare_against_itself_has_zero_deltas() {
    let o = dlr(&["compare", "--case", "twobus-windy-cool-2", "--schemes", "slr,slr", "--format", "json"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let rows: Vec<Value> = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(rows.len(), 2);
    for r in &rows {
        for k in ["capacity_pct", "cost_pct", "renewable_pct"] {
            assert_eq!(r[k].as_f64().unwrap(), 0.0);
        }
    }
}

#[test]
fn compare_orders_costs_in_windy_weather() {
    let o = dlr(&[
        "compare",
        "--case",
        "wscc9-windy-cool-3",
        "--schemes",
        "slr,aar,dlr-ss,dlr-trans",
        "--method",
        "monolithic",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8(o.stdout).unwrap();
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let headers = rdr.headers().unwrap().clone();
    let col = |name: &str| headers.iter().position(|h| h == name).unwrap();
    let rows: Vec<_> = rdr.records().map(|r| r.unwrap()).collect();
    let cost: Vec<f64> = rows.iter().map(|r| r[col("objective")].parse().unwrap()).collect();
    assert!(cost[2] <= cost[1] && cost[1] <= cost[0], "{cost:?}");
    assert!(cost[3] <= cost[2] * (1.0 + 1e-6), "{cost:?}");
    let cap: Vec<f64> = rows.iter().map(|r| r[col("capacity_pct")].parse().unwrap()).collect();
    assert_eq!(cap[0], 0.0);
    assert!(cap[1] >= 0.0 && cap[2] >= cap[1], "{cap:?}");
}

#[test]
fn screen_lists_lines() {
    let o = dlr(&["screen", "--case", "wscc9-step-change-6"]);
    assert_eq!(o.status.code(), Some(0));
    let lines: Vec<Value> = serde_json::from_slice(&o.stdout).unwrap();
    assert!(lines.iter().any(|l| l["id"] == "L89"));
    assert!(lines.iter().all(|l| l["peak_temp_k"].is_number() && l["initial_temp_k"].is_number()));

    let o = dlr(&["screen", "--case", "twobus-windy-cool-2"]);
    assert_eq!(o.status.code(), Some(0));
    let lines: Vec<Value> = serde_json::from_slice(&o.stdout).unwrap();
    assert!(lines.is_empty());
}

#[test]
fn thermal_sim_emits_csv() {
    let o = dlr(&["thermal-sim", "--currents", "400,900,900", "--substeps", "4", "--initial", "320"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8(o.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("period,time_s,temp_K,temp_ss_K"));
    assert_eq!(lines.count(), 13);

    let o = dlr(&["thermal-sim", "--case", "wscc9-step-change-3", "--line", "L89", "--currents", "500,500"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let o = dlr(&["thermal-sim", "--case", "wscc9-step-change-3", "--line", "T14", "--currents", "500"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn unknown_case_is_an_error() {
    let o = dlr(&["solve", "--case", "no-such-thing"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("neither a case file nor a fixture"));
}

#[test]
fn solve_accepts_a_case_file_with_overrides() {
    let case = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/wscc9-windy-cool-3.json");
    let o = dlr(&["solve", "--case", case.to_str().unwrap(), "--horizon", "2", "--scheme", "slr", "--season", "winter"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(r["periods"].as_array().unwrap().len(), 2);
    assert_eq!(r["scheme"]["season"], "winter");
}
