//! Machine-readable run reports: one entry per check, JSON output, CSV
//! convergence tables.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckEntry {
    pub name: String,
    /// Stable identity slug naming what the check verifies.
    pub anchor: String,
    /// Measured value (residual, order, count defect, ...).
    pub value: f64,
    pub tolerance: f64,
    pub pass: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<serde_json::Value>,
}

impl CheckEntry {
    /// Pass when `value <= tolerance`.
    pub fn residual(name: &str, anchor: &str, value: f64, tolerance: f64) -> Self {
        CheckEntry {
            name: name.into(),
            anchor: anchor.into(),
            value,
            tolerance,
            pass: value <= tolerance,
            detail: None,
        }
    }

    /// Pass when `value >= tolerance` (orders, slopes with flipped sign).
    pub fn at_least(name: &str, anchor: &str, value: f64, tolerance: f64) -> Self {
        CheckEntry {
            name: name.into(),
            anchor: anchor.into(),
            value,
            tolerance,
            pass: value >= tolerance,
            detail: None,
        }
    }

    pub fn with_detail(mut self, detail: serde_json::Value) -> Self {
        self.detail = Some(detail);
        self
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Report {
    pub scenario: String,
    pub seed: u64,
    pub timestamp: String,
    pub derivative_scheme: String,
    pub checks: Vec<CheckEntry>,
    pub total: usize,
    pub passed: usize,
}

impl Report {
    pub fn new(scenario: &str, seed: u64, mut checks: Vec<CheckEntry>) -> Self {
        checks.sort_by(|a, b| a.name.cmp(&b.name));
        let total = checks.len();
        let passed = checks.iter().filter(|c| c.pass).count();
        let timestamp = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| format!("{}", d.as_secs()))
            .unwrap_or_default();
        Report {
            scenario: scenario.into(),
            seed,
            timestamp,
            derivative_scheme: "centered-4".into(),
            checks,
            total,
            passed,
        }
    }

    pub fn all_pass(&self) -> bool {
        self.passed == self.total
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization")
    }
}

/// Generic CSV table with a header row.
pub struct CsvTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn render(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}
