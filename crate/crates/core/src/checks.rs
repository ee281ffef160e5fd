//! Named pass/fail checks collected into reports.

use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckReport {
    pub checks: Vec<Check>,
}

impl CheckReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub fn get(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn push(&mut self, name: impl Into<String>, passed: bool, detail: impl Into<String>) {
        self.checks.push(Check {
            name: name.into(),
            passed,
            detail: detail.into(),
        });
    }

    pub fn push_eq<T: PartialEq + std::fmt::Display>(&mut self, name: impl Into<String>, lhs: &T, rhs: &T) {
        self.push(name, lhs == rhs, format!("{lhs} vs {rhs}"));
    }

    pub fn push_ge<T: PartialOrd + std::fmt::Display>(&mut self, name: impl Into<String>, lhs: &T, rhs: &T) {
        self.push(name, lhs >= rhs, format!("{lhs} >= {rhs}"));
    }

    pub fn push_le<T: PartialOrd + std::fmt::Display>(&mut self, name: impl Into<String>, lhs: &T, rhs: &T) {
        self.push(name, lhs <= rhs, format!("{lhs} <= {rhs}"));
    }

    /// One-line summary of failing check names.
    pub fn failure_summary(&self) -> String {
        self.failures()
            .map(|c| format!("{} ({})", c.name, c.detail))
            .collect::<Vec<_>>()
            .join("; ")
    }
}
