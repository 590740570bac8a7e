//! Uniform pass/fail records shared by every check.

use serde::{Deserialize, Serialize};

/// How `score` is compared with `tolerance`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    /// `|lhs - rhs| ≤ tolerance`.
    Absolute,
    /// `|lhs - rhs| ≤ tolerance · |rhs|`.
    Relative,
    /// `|lhs - rhs| / stderr ≤ tolerance`.
    Pulls,
    /// `lhs ≤ rhs · (1 + tolerance)`.
    Bound,
    /// `lhs ≥ rhs - tolerance`.
    AtLeast,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub stderr: Option<f64>,
    pub criterion: Criterion,
    pub score: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl Check {
    fn build(name: impl Into<String>, lhs: f64, rhs: f64, stderr: Option<f64>, criterion: Criterion, score: f64, tolerance: f64, pass: bool) -> Self {
        Check {
            name: name.into(),
            lhs,
            rhs,
            stderr,
            criterion,
            score,
            tolerance,
            // NaN never passes.
            pass: pass && score.is_finite(),
        }
    }

    pub fn absolute(name: impl Into<String>, lhs: f64, rhs: f64, tolerance: f64) -> Self {
        let d = (lhs - rhs).abs();
        Self::build(name, lhs, rhs, None, Criterion::Absolute, d, tolerance, d <= tolerance)
    }

    pub fn relative(name: impl Into<String>, lhs: f64, rhs: f64, tolerance: f64) -> Self {
        let d = (lhs - rhs).abs() / rhs.abs().max(f64::MIN_POSITIVE);
        Self::build(name, lhs, rhs, None, Criterion::Relative, d, tolerance, d <= tolerance)
    }

    pub fn pulls(name: impl Into<String>, lhs: f64, stderr: f64, rhs: f64, max_pulls: f64) -> Self {
        let p = pphi2_core::stats::pull(lhs - rhs, stderr);
        Self::build(name, lhs, rhs, Some(stderr), Criterion::Pulls, p, max_pulls, p <= max_pulls)
    }

    pub fn bound(name: impl Into<String>, lhs: f64, bound: f64, slack: f64) -> Self {
        let ratio = lhs / bound;
        Self::build(name, lhs, bound, None, Criterion::Bound, ratio, slack, lhs <= bound * (1.0 + slack))
    }

    /// `lhs ≥ floor - tolerance`; `score` is `lhs - floor`.
    pub fn at_least(name: impl Into<String>, lhs: f64, floor: f64, tolerance: f64) -> Self {
        let margin = lhs - floor;
        Self::build(name, lhs, floor, None, Criterion::AtLeast, margin, tolerance, margin >= -tolerance)
    }

    pub fn with_stderr(mut self, stderr: f64) -> Self {
        self.stderr = Some(stderr);
        self
    }
}

pub fn all_pass(checks: &[Check]) -> bool {
    !checks.is_empty() && checks.iter().all(|c| c.pass)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn criteria() {
        assert!(Check::absolute("a", 1.0, 1.0 + 1e-9, 1e-6).pass);
        assert!(!Check::relative("r", 1.1, 1.0, 0.05).pass);
        assert!(Check::pulls("p", 1.0, 0.1, 1.3, 4.0).pass);
        assert!(!Check::pulls("p", 1.0, 0.0, 1.3, 4.0).pass);
        assert!(Check::bound("b", 1.04, 1.0, 0.05).pass);
        assert!(Check::at_least("l", -0.01, 0.0, 0.03).pass);
        assert!(!Check::absolute("nan", f64::NAN, 0.0, 1.0).pass);
        assert!(!all_pass(&[]));
    }
}
