use std::collections::BTreeSet;

use hitstat::constructions::{cycle_trap, random_chain, random_reversible, FamilyInstance};
use hitstat::harness::{verify_family, BoundKind, CampaignSpec};
use hitstat::{hitting_pmf, killed_spectrum, maximal_row, mc_hitting_moments, ChainSpec};
use serde_json::Value;

#[test]
fn chain_json_carries_17_digits() {
    let c = random_chain(4, 7).unwrap().chain;
    let text = c.to_json_string();
    let v: Value = serde_json::from_str(&text).unwrap();
    for row in v["rows"].as_array().unwrap() {
        for entry in row.as_array().unwrap() {
            let raw = entry[1].to_string();
            let mantissa = raw.split(['e', 'E']).next().unwrap();
            let digits = mantissa.chars().filter(char::is_ascii_digit).count();
            assert!(digits >= 17, "{raw}");
        }
    }
    assert_eq!(ChainSpec::from_json_str(&text).unwrap(), c);
}

#[test]
fn pmf_csv_layout() {
    let c = cycle_trap(5, 9).unwrap().chain;
    let csv = hitting_pmf(&c, 0, 3, 100).to_csv();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("t,p,tail_flag"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 101);
    assert!(rows[3].starts_with("3,1,"));
}

#[test]
fn maxprob_csv_layout() {
    let c = random_reversible(5, 2).unwrap().chain;
    let csv = maximal_row(&c, 0, 50).to_csv();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("y,pstar,argmax_t,certified,tail_eps"));
    assert_eq!(lines.count(), 5);
}

#[test]
fn report_csv_layout() {
    let insts: Vec<FamilyInstance> = (0..3).map(|s| random_chain(4, s).unwrap()).collect();
    let spec = CampaignSpec::new(BTreeSet::from([BoundKind::General]), 30);
    let report = verify_family(&insts, &spec).unwrap();
    let csv = report.to_csv();
    assert!(csv.starts_with("family,params,x,y,t,exact,kind,bound,slack,pass\n"));
    for line in csv.lines().skip(1) {
        assert_eq!(line.split(',').count(), 10, "{line}");
    }
    let v: Value = serde_json::from_str(&report.to_json()).unwrap();
    assert!(v.is_object());
}

#[test]
fn moment_estimate_json_keys() {
    let c = cycle_trap(5, 9).unwrap().chain;
    let m = mc_hitting_moments(&c, 0, 4, 200, 11, 1_000_000).unwrap();
    let v = serde_json::to_value(&m).unwrap();
    let keys: BTreeSet<&str> = v.as_object().unwrap().keys().map(String::as_str).collect();
    assert_eq!(keys, BTreeSet::from(["mean", "variance", "samples", "ci95_mean", "seed"]));
    assert_eq!(v["seed"], 11);
}

#[test]
fn spectral_json_layout() {
    let c = random_reversible(6, 4).unwrap().chain;
    let v: Value = serde_json::from_str(&killed_spectrum(&c, 0, &[5]).unwrap().to_json()).unwrap();
    let terms = v["terms"].as_array().unwrap();
    assert_eq!(terms.len(), 5);
    assert!(terms.iter().all(|t| t.as_array().unwrap().len() == 2));
    assert!(v["nonneg_eigen"].is_boolean());
}
