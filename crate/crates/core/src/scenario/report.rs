use std::fmt::Write as _;

use serde::Serialize;

use super::ScenarioConfig;
use crate::fimsm::{validate_model, Finding, FimsmModel, Severity};
use crate::simnet::AuditLog;
use crate::Tick;

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct StepReport {
    /// One-based position in the script.
    pub index: usize,
    pub kind: String,
    pub summary: String,
    pub outcome: String,
    pub expected: Option<String>,
    pub passed: bool,
    pub clock: Tick,
    /// Password checks across all identity providers after this step.
    pub password_verifications: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ModelReport {
    pub entity: String,
    pub findings: Vec<Finding>,
}

impl ModelReport {
    pub fn gaps(&self) -> impl Iterator<Item = &Finding> {
        self.findings.iter().filter(|f| f.severity == Severity::Gap)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct VerificationCount {
    pub idp: String,
    pub username: String,
    pub count: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ScenarioReport {
    pub scenario: String,
    pub seed: u64,
    pub steps: Vec<StepReport>,
    pub models: Vec<ModelReport>,
    pub verifications: Vec<VerificationCount>,
    #[serde(skip)]
    pub trace: AuditLog,
    pub trace_path: Option<String>,
}

impl ScenarioReport {
    pub fn failures(&self) -> Vec<&StepReport> {
        self.steps.iter().filter(|s| !s.passed).collect()
    }

    pub fn all_expectations_passed(&self) -> bool {
        self.steps.iter().all(|s| s.passed)
    }

    pub fn has_violation(&self) -> bool {
        self.models
            .iter()
            .flat_map(|m| &m.findings)
            .any(|f| f.severity == Severity::Violation)
    }

    /// 0 when every expectation holds and no model has a violation, else 2.
    pub fn exit_code(&self) -> i32 {
        if self.all_expectations_passed() && !self.has_violation() {
            0
        } else {
            2
        }
    }

    pub fn verifications_for(&self, idp: &str, username: &str) -> u64 {
        self.verifications
            .iter()
            .find(|v| v.idp == idp && v.username == username)
            .map_or(0, |v| v.count)
    }

    pub fn step(&self, index: usize) -> Option<&StepReport> {
        self.steps.iter().find(|s| s.index == index)
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "scenario {} (seed {})", self.scenario, self.seed);
        for s in &self.steps {
            let mark = match (&s.expected, s.passed) {
                (None, _) => "    ",
                (Some(_), true) => "PASS",
                (Some(_), false) => "FAIL",
            };
            let _ = write!(out, "{mark} {:>2} t={:<5} {:<56} => {}", s.index, s.clock.0, s.summary, s.outcome);
            if let (Some(expected), false) = (&s.expected, s.passed) {
                let _ = write!(out, " (expected {expected})");
            }
            out.push('\n');
        }
        for m in &self.models {
            let _ = writeln!(out, "model {}: {} finding(s)", m.entity, m.findings.len());
            for f in &m.findings {
                let _ = writeln!(out, "  {}", f.summary_line());
            }
        }
        for v in &self.verifications {
            let _ = writeln!(out, "password checks {}@{}: {}", v.username, v.idp, v.count);
        }
        let checked = self.steps.iter().filter(|s| s.expected.is_some()).count();
        let failed = self.failures().len();
        let _ = writeln!(
            out,
            "{} step(s), {} expectation(s), {} failed, {} trace record(s)",
            self.steps.len(),
            checked,
            failed,
            self.trace.len()
        );
        if let Some(path) = &self.trace_path {
            let _ = writeln!(out, "trace: {path}");
        }
        out
    }
}

/// True when `outcome` equals `expected` or begins with it followed by a
/// space.
pub fn expectation_matches(outcome: &str, expected: &str) -> bool {
    let expected = expected.trim();
    outcome == expected || outcome.strip_prefix(expected).is_some_and(|rest| rest.starts_with(' '))
}

pub fn model_not_provided() -> Finding {
    Finding {
        severity: Severity::Info,
        rule_id: "M1".into(),
        message: "model not provided".into(),
        element_id: None,
        layer: None,
        suggestion: Some("reference a layer model with the `model` key".into()),
    }
}

fn findings_for(model: Option<&FimsmModel>) -> Vec<Finding> {
    model.map_or_else(|| vec![model_not_provided()], validate_model)
}

/// Validates every entity's layer model, in declaration order. The key
/// distribution center of a `[kerberos]` section counts as an entity.
pub fn emit_model_reports(config: &ScenarioConfig) -> Vec<ModelReport> {
    let mut reports: Vec<ModelReport> = config
        .entities
        .iter()
        .map(|e| ModelReport {
            entity: e.id.clone(),
            findings: findings_for(e.parsed_model.as_ref()),
        })
        .collect();
    if let Some(k) = &config.kerberos {
        reports.push(ModelReport {
            entity: k.kdc.clone(),
            findings: findings_for(k.parsed_model.as_ref()),
        });
    }
    reports
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn expectation_prefix_is_word_aligned() {
        assert!(expectation_matches("granted read at basic", "granted read"));
        assert!(expectation_matches("granted read at basic", "granted read at basic"));
        assert!(!expectation_matches("granted read,write at basic", "granted read"));
        assert!(!expectation_matches("denied expired", "denied exp"));
        assert!(expectation_matches("ok", " ok "));
    }
}
