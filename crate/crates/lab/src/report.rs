//! Verification reports: one record per enabled check.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    /// Fitted constants the theory leaves unspecified; never fails a run.
    ReportOnly,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckRecord {
    pub name: String,
    /// The statement being checked, as written in the theory.
    pub anchor: String,
    pub status: Status,
    /// Measured value; `None` when it is not finite.
    pub value: Option<f64>,
    pub tolerance: Option<f64>,
    pub runtime_s: f64,
    /// Check-specific details: fits, worst cases, margins.
    #[serde(default)]
    pub detail: serde_json::Value,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub scenario: String,
    pub checks: Vec<CheckRecord>,
}

impl VerificationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.status != Status::Fail)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckRecord> {
        self.checks.iter().filter(|c| c.status == Status::Fail)
    }

    /// Fixed-width table for `summary.txt`.
    pub fn summary(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "scenario: {}", self.scenario);
        let _ = writeln!(s, "{:<22} {:<11} {:>14} {:>12} {:>9}", "check", "status", "value", "tolerance", "time[s]");
        for c in &self.checks {
            let status = match c.status {
                Status::Pass => "pass",
                Status::Fail => "FAIL",
                Status::ReportOnly => "report-only",
            };
            let num = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.6e}"));
            let _ = writeln!(
                s,
                "{:<22} {:<11} {:>14} {:>12} {:>9.2}",
                c.name,
                status,
                num(c.value),
                c.tolerance.map_or("-".to_string(), |t| format!("{t:.3e}")),
                c.runtime_s
            );
        }
        let fails = self.failures().count();
        let _ = writeln!(
            s,
            "{} checks, {} failed: {}",
            self.checks.len(),
            fails,
            if fails == 0 { "PASS" } else { "FAIL" }
        );
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(name: &str, status: Status) -> CheckRecord {
        CheckRecord {
            name: name.into(),
            anchor: "a".into(),
            status,
            value: Some(1.0),
            tolerance: None,
            runtime_s: 0.0,
            detail: serde_json::Value::Null,
        }
    }

    #[test]
    fn report_only_never_fails() {
        let mut r = VerificationReport {
            scenario: "s".into(),
            checks: vec![record("a", Status::Pass), record("b", Status::ReportOnly)],
        };
        assert!(r.passed());
        assert!(r.summary().contains("PASS"));
        r.checks.push(record("c", Status::Fail));
        assert!(!r.passed());
        let json = serde_json::to_string(&r).unwrap();
        assert!(json.contains("\"report_only\""));
        assert_eq!(serde_json::from_str::<VerificationReport>(&json).unwrap(), r);
    }
}
