//! Verification reports and their CSV/JSON renderings.
//!
//! Numbers are printed with Rust's shortest round-trip formatting, so equal
//! inputs give byte-identical output. Reports carry no timestamps.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::bounds::BoundKind;

/// Absolute slack forgiven on every bound comparison.
pub const SLACK_TOL: f64 = 1e-12;

pub const CSV_HEADER: &str = "family,params,x,y,t,exact,kind,bound,slack,pass";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub family: String,
    pub params: String,
    /// A state label or `pi` for the stationary start.
    pub x: String,
    /// A state label, or `*` for quantities summed over targets.
    pub y: String,
    pub t: Option<usize>,
    pub exact: f64,
    pub kind: BoundKind,
    /// `None` when the bound is not applicable.
    pub bound: Option<f64>,
}

impl ReportRow {
    pub fn slack(&self) -> Option<f64> {
        self.bound.map(|b| b - self.exact)
    }

    pub fn pass(&self) -> Option<bool> {
        self.bound.map(|b| self.exact <= b + SLACK_TOL)
    }

    pub fn to_csv_line(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let pass = match self.pass() {
            Some(true) => "true",
            Some(false) => "false",
            None => "na",
        };
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            csv_field(&self.family),
            csv_field(&self.params),
            csv_field(&self.x),
            csv_field(&self.y),
            self.t.map(|t| t.to_string()).unwrap_or_default(),
            self.exact,
            self.kind,
            opt(self.bound),
            opt(self.slack()),
            pass
        )
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct KindSummary {
    pub checked: u64,
    pub violations: u64,
    pub not_applicable: u64,
    pub min_slack: Option<f64>,
}

impl KindSummary {
    pub fn record(&mut self, row: &ReportRow) {
        match row.slack() {
            None => self.not_applicable += 1,
            Some(s) => {
                self.checked += 1;
                if row.pass() == Some(false) {
                    self.violations += 1;
                }
                self.min_slack = Some(self.min_slack.map_or(s, |m| m.min(s)));
            }
        }
    }

    pub fn merge(&mut self, other: &KindSummary) {
        self.checked += other.checked;
        self.violations += other.violations;
        self.not_applicable += other.not_applicable;
        self.min_slack = match (self.min_slack, other.min_slack) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        };
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    /// Kept rows: the tightest row per `(chain, x, y, kind)` plus every
    /// violation.
    pub rows: Vec<ReportRow>,
    pub summary: BTreeMap<BoundKind, KindSummary>,
    pub chains: usize,
    pub seeds: Vec<u64>,
    pub grid: String,
    pub notes: Vec<String>,
    pub version: String,
}

impl VerificationReport {
    pub fn violations(&self) -> u64 {
        self.summary.values().map(|s| s.violations).sum()
    }

    pub fn passed(&self) -> bool {
        self.violations() == 0
    }

    pub fn checked(&self, kind: BoundKind) -> u64 {
        self.summary.get(&kind).map_or(0, |s| s.checked)
    }

    pub fn failing_rows(&self) -> impl Iterator<Item = &ReportRow> {
        self.rows.iter().filter(|r| r.pass() == Some(false))
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(64 * (self.rows.len() + 1));
        out.push_str(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&r.to_csv_line());
            out.push('\n');
        }
        out
    }

    /// Summary, metadata and kept rows as JSON.
    pub fn to_json(&self) -> String {
        let summary: serde_json::Map<String, serde_json::Value> = self
            .summary
            .iter()
            .map(|(k, s)| (k.name().to_string(), serde_json::to_value(s).expect("summary serializes")))
            .collect();
        let rows: Vec<serde_json::Value> = self
            .rows
            .iter()
            .map(|r| {
                serde_json::json!({
                    "family": r.family,
                    "params": r.params,
                    "x": r.x,
                    "y": r.y,
                    "t": r.t,
                    "exact": r.exact,
                    "kind": r.kind.name(),
                    "bound": r.bound,
                    "slack": r.slack(),
                    "pass": r.pass(),
                })
            })
            .collect();
        let doc = serde_json::json!({
            "version": self.version,
            "chains": self.chains,
            "seeds": self.seeds,
            "grid": self.grid,
            "notes": self.notes,
            "violations": self.violations(),
            "summary": summary,
            "rows": rows,
        });
        let mut s = serde_json::to_string_pretty(&doc).expect("report serializes");
        s.push('\n');
        s
    }

    /// One line per kind: counts and the smallest slack seen.
    pub fn summary_text(&self) -> String {
        let mut out = String::new();
        for (k, s) in &self.summary {
            let _ = writeln!(
                out,
                "{k:<20} checked {:>9}  violations {:>3}  n/a {:>8}  min slack {}",
                s.checked,
                s.violations,
                s.not_applicable,
                s.min_slack.map_or("-".into(), |v| format!("{v:.3e}"))
            );
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(exact: f64, bound: Option<f64>) -> ReportRow {
        ReportRow {
            family: "random-chain".into(),
            params: "n=3;seed=1".into(),
            x: "0".into(),
            y: "1".into(),
            t: Some(5),
            exact,
            kind: BoundKind::General,
            bound,
        }
    }

    #[test]
    fn pass_uses_tolerance() {
        assert_eq!(row(0.5, Some(0.5 - 1e-13)).pass(), Some(true));
        assert_eq!(row(0.5, Some(0.4)).pass(), Some(false));
        assert_eq!(row(0.5, None).pass(), None);
    }

    #[test]
    fn csv_line_shape() {
        let line = row(0.25, Some(0.6)).to_csv_line();
        assert_eq!(line.split(',').count(), 10);
        assert!(line.ends_with(",true"));
        let na = row(0.25, None).to_csv_line();
        assert!(na.ends_with(",general,,,na"));
    }

    #[test]
    fn summary_counts() {
        let mut s = KindSummary::default();
        s.record(&row(0.1, Some(0.2)));
        s.record(&row(0.3, Some(0.2)));
        s.record(&row(0.3, None));
        assert_eq!((s.checked, s.violations, s.not_applicable), (2, 1, 1));
        assert!((s.min_slack.unwrap() + 0.1).abs() < 1e-15);
    }
}
