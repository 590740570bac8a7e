//! The `report.json` layout. Wall-clock timings live only under
//! `suites[].timing`; everything else is a deterministic function of the
//! configuration.

use serde::{Deserialize, Serialize};

use pphi2_schwinger::Check;

use crate::config::{RunConfig, SCHEMA_VERSION};

/// The schema shipped with the binary.
pub const REPORT_SCHEMA: &str = include_str!("../report.schema.json");

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub seconds: f64,
    pub budget_seconds: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub name: String,
    pub pass: bool,
    /// Set when the suite could not be evaluated.
    pub error: Option<String>,
    pub tests: Vec<Check>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub timing: Option<Timing>,
}

impl SuiteReport {
    pub fn from_checks(name: impl Into<String>, result: std::result::Result<Vec<Check>, String>) -> Self {
        let name = name.into();
        match result {
            Ok(tests) => SuiteReport {
                pass: !tests.is_empty() && tests.iter().all(|c| c.pass),
                name,
                error: None,
                tests,
                timing: None,
            },
            Err(e) => SuiteReport {
                name,
                pass: false,
                error: Some(e),
                tests: Vec::new(),
                timing: None,
            },
        }
    }

    pub fn failures(&self) -> Vec<String> {
        let mut out: Vec<String> = self.error.iter().map(|e| format!("{}: error: {e}", self.name)).collect();
        out.extend(self.tests.iter().filter(|c| !c.pass).map(|c| format!("{}: {}", self.name, c.name)));
        if let Some(t) = self.timing.filter(|t| !t.pass) {
            out.push(format!("{}: runtime {:.1} s over budget {:.0} s", self.name, t.seconds, t.budget_seconds));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    pub tool: String,
    pub version: String,
    /// The resolved configuration; feeding it back to `run` repeats the
    /// experiment.
    pub config: RunConfig,
    pub pass: bool,
    pub failing: Vec<String>,
    pub suites: Vec<SuiteReport>,
    /// File names of the CSV tables written next to the report.
    pub tables: Vec<String>,
}

impl Report {
    pub fn new(config: RunConfig, suites: Vec<SuiteReport>, tables: Vec<String>) -> Self {
        let failing: Vec<String> = suites.iter().flat_map(|s| s.failures()).collect();
        Report {
            schema_version: SCHEMA_VERSION,
            tool: "pphi2".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            config,
            pass: failing.is_empty() && !suites.is_empty(),
            failing,
            suites,
            tables,
        }
    }

    pub fn to_json(&self) -> serde_json::Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn failures_list_errors_checks_and_budgets() {
        let mut s = SuiteReport::from_checks("x", Ok(vec![Check::absolute("a", 1.0, 2.0, 0.1), Check::absolute("b", 1.0, 1.0, 0.1)]));
        s.timing = Some(Timing {
            seconds: 5.0,
            budget_seconds: 1.0,
            pass: false,
        });
        assert_eq!(s.failures().len(), 2);
        let e = SuiteReport::from_checks("y", Err("boom".into()));
        assert!(!e.pass);
        let r = Report::new(RunConfig::default(), vec![s, e], vec![]);
        assert_eq!(r.failing.len(), 3);
        assert!(!r.pass);
        assert!(!Report::new(RunConfig::default(), vec![], vec![]).pass);
    }
}
