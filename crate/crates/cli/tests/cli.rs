use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn hitstat(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hitstat"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn write_chain(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_string()
}

fn cycle_trap(dir: &Path) -> String {
    let o = hitstat(&["construct", "--family", "cycle-trap", "--n", "5", "--t", "9"]);
    assert_eq!(o.status.code(), Some(0));
    write_chain(dir, "c.json", &stdout(&o))
}

#[test]
fn construct_reports_closed_forms() {
    let o = hitstat(&["construct", "--family", "cycle-trap", "--n", "5", "--t", "9"]);
    assert_eq!(o.status.code(), Some(0));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["closed_forms"]["hit_prob"].as_f64(), Some(0.125));
}

#[test]
fn hitting_csv_has_one_row_per_time() {
    let dir = tempfile::tempdir().unwrap();
    let c = cycle_trap(dir.path());
    let o = hitstat(&["hitting", "--chain", &c, "--from", "0", "--to", "3", "--horizon", "100"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("t,p,tail_flag"));
    assert_eq!(lines.count(), 101);
}

#[test]
fn out_flag_writes_file() {
    let dir = tempfile::tempdir().unwrap();
    let c = cycle_trap(dir.path());
    let out = dir.path().join("pi.csv");
    let o = hitstat(&["stationary", "--chain", &c, "--format", "csv", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert!(o.stdout.is_empty());
    let text = std::fs::read_to_string(out).unwrap();
    assert!(text.starts_with("state,pi\ns1,0.125"));
}

#[test]
fn verify_random_corpus_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.csv");
    let o = hitstat(&[
        "verify", "--corpus", "random", "--kinds", "general", "--n", "8", "--tmax", "200", "--count", "20",
        "--out", out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(out).unwrap();
    assert!(text.starts_with("family,params,x,y,t,exact,kind,bound,slack,pass\n"));
}

#[test]
fn invalid_chain_fails_validation() {
    let dir = tempfile::tempdir().unwrap();
    let c = write_chain(dir.path(), "bad.json", r#"{"n":2,"states":["a","b"],"rows":[[[0,0.5]],[[1,1.0]]]}"#);
    let o = hitstat(&["validate", "--chain", &c]);
    assert_eq!(o.status.code(), Some(1));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["valid"], Value::Bool(false));
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(hitstat(&["nonsense"]).status.code(), Some(2));
    assert_eq!(hitstat(&["hitting", "--from", "0"]).status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let c = cycle_trap(dir.path());
    let o = hitstat(&["hitting", "--chain", &c, "--from", "0", "--to", "nowhere", "--horizon", "5"]);
    assert_eq!(o.status.code(), Some(2));
    let broken = write_chain(dir.path(), "x.json", "{not json");
    assert_eq!(hitstat(&["validate", "--chain", &broken]).status.code(), Some(2));
}

#[test]
fn failing_assertion_exits_one() {
    // Too short a horizon to reach 1/4 of stationarity on a periodic chain.
    let dir = tempfile::tempdir().unwrap();
    let c = cycle_trap(dir.path());
    let o = hitstat(&["mix", "--chain", &c, "--horizon", "10"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("FAIL"));
}

#[test]
fn spectral_json_shape() {
    let o = hitstat(&["construct", "--family", "random-reversible", "--n", "6", "--seed", "3"]);
    let dir = tempfile::tempdir().unwrap();
    let c = write_chain(dir.path(), "r.json", &stdout(&o));
    let o = hitstat(&["spectral", "--chain", &c, "--from", "0", "--kill", "5", "--horizon", "40"]);
    assert_eq!(o.status.code(), Some(0));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["terms"].as_array().unwrap().len(), 5);
    assert!(v["nonneg_eigen"].is_boolean());
}

#[test]
fn locator_defaults_from_family() {
    let o = hitstat(&["locate-surprise", "--family", "pure-birth-tail", "--n", "16"]);
    assert_eq!(o.status.code(), Some(0));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["pass"], Value::Bool(true));
    assert_eq!(v["ez_exact"], Value::Bool(true));
}

#[test]
fn experiment_output_is_thread_independent() {
    let run = |threads: &str| {
        Command::new(env!("CARGO_BIN_EXE_hitstat"))
            .args(["experiment", "gm-scaling", "--m", "2,3", "--samples", "200", "--seed", "5"])
            .env("HITSTAT_THREADS", threads)
            .output()
            .unwrap()
    };
    let a = run("1");
    let b = run("3");
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn geom_bracket_holds() {
    let o = hitstat(&["geom", "bracket", "--n", "5", "--m", "7"]);
    assert_eq!(o.status.code(), Some(0));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    let (lo, val, hi) = (v["lower"].as_f64().unwrap(), v["value"].as_f64().unwrap(), v["upper"].as_f64().unwrap());
    assert!(lo <= val && val <= hi);
}
