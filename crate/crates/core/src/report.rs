//! A common report shape for identity checks and statistical tests, so the
//! command-line tool and the test suites can serialize every result the
//! same way.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

/// How a check ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    /// All residuals within tolerance (or the statistic within its band).
    Pass,
    /// At least one residual out of tolerance.
    Fail,
    /// The run could not decide (for example, too few retained paths).
    Inconclusive,
    /// The check does not apply to this model or configuration.
    NotApplicable,
}

impl Verdict {
    /// Whether this verdict should count as success for exit-code purposes.
    pub fn is_pass(self) -> bool {
        matches!(self, Verdict::Pass | Verdict::NotApplicable)
    }
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Verdict::Pass => "pass",
            Verdict::Fail => "FAIL",
            Verdict::Inconclusive => "inconclusive",
            Verdict::NotApplicable => "not applicable",
        };
        f.write_str(s)
    }
}

/// Result of one named check on one model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckReport {
    /// Which check ran (for example `"intertwining"`).
    pub check: String,
    /// Model name.
    pub model: String,
    /// Free-form subject: what was compared.
    pub kind: String,
    /// Metric parameters the check swept, if any.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub eps: Vec<f64>,
    /// How many sampled configurations entered the worst-case.
    pub sample_count: usize,
    /// Seed used for the sampled configurations.
    pub seed: u64,
    /// Tolerance the verdict was graded against.
    pub tolerance: f64,
    /// Worst residual (or the decisive statistic).
    pub worst: f64,
    /// Optional per-configuration residuals for diagnostics.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub residuals: Vec<f64>,
    pub verdict: Verdict,
    /// Extra key-value context (estimates, standard errors, parameters).
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub details: BTreeMap<String, String>,
}

impl CheckReport {
    /// New report graded as `worst <= tolerance`.
    pub fn graded(
        check: impl Into<String>,
        model: impl Into<String>,
        kind: impl Into<String>,
        tolerance: f64,
        worst: f64,
    ) -> Self {
        CheckReport {
            check: check.into(),
            model: model.into(),
            kind: kind.into(),
            eps: Vec::new(),
            sample_count: 0,
            seed: 0,
            tolerance,
            worst,
            residuals: Vec::new(),
            verdict: if worst <= tolerance {
                Verdict::Pass
            } else {
                Verdict::Fail
            },
            details: BTreeMap::new(),
        }
    }

    pub fn with_eps(mut self, eps: &[f64]) -> Self {
        self.eps = eps.to_vec();
        self
    }

    pub fn with_samples(mut self, sample_count: usize, seed: u64) -> Self {
        self.sample_count = sample_count;
        self.seed = seed;
        self
    }

    pub fn with_detail(mut self, key: impl Into<String>, value: impl std::fmt::Display) -> Self {
        self.details.insert(key.into(), value.to_string());
        self
    }

    /// One-line human-readable summary.
    pub fn summary(&self) -> String {
        format!(
            "{:<22} {:<18} worst {:>12.3e}  tol {:>9.1e}  {}",
            self.check, self.model, self.worst, self.tolerance, self.verdict
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grading_and_serialization() {
        let r = CheckReport::graded("intertwining", "heisenberg-1", "dLf vs box(df)", 1e-8, 3e-9)
            .with_eps(&[0.25, 1.0, 4.0])
            .with_samples(20, 42)
            .with_detail("fields", 20);
        assert_eq!(r.verdict, Verdict::Pass);
        assert!(r.verdict.is_pass());
        let text = serde_json::to_string(&r).unwrap();
        let back: CheckReport = serde_json::from_str(&text).unwrap();
        assert_eq!(back.check, "intertwining");
        assert_eq!(back.eps, vec![0.25, 1.0, 4.0]);
        assert_eq!(back.details["fields"], "20");

        let bad = CheckReport::graded("x", "m", "k", 1e-10, 1.0);
        assert_eq!(bad.verdict, Verdict::Fail);
        assert!(!bad.verdict.is_pass());
    }

    #[test]
    fn display_lines_are_stable() {
        assert_eq!(Verdict::Pass.to_string(), "pass");
        assert_eq!(Verdict::Fail.to_string(), "FAIL");
        assert!(Verdict::NotApplicable.is_pass());
        assert!(!Verdict::Inconclusive.is_pass());
    }
}
