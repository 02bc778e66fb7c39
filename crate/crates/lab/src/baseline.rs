//! Pinned scalar outcomes with tolerances.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineEntry {
    pub name: String,
    pub value: f64,
    /// Absolute tolerance.
    pub tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionBaseline {
    pub config_hash: String,
    pub entries: Vec<BaselineEntry>,
}

impl RegressionBaseline {
    pub fn new(config_hash: String) -> Self {
        Self {
            config_hash,
            entries: Vec::new(),
        }
    }

    /// Adds an entry with a relative tolerance `rel · |value|` (at least `1e-12`).
    pub fn push(&mut self, name: impl Into<String>, value: f64, rel: f64) {
        self.entries.push(BaselineEntry {
            name: name.into(),
            value,
            tolerance: (rel * value.abs()).max(1e-12),
        });
    }

    /// Differences of `current` against this baseline; empty when it matches.
    pub fn compare(&self, current: &RegressionBaseline) -> Vec<String> {
        let mut out = Vec::new();
        if self.config_hash != current.config_hash {
            out.push(format!(
                "config hash {} differs from baseline {}",
                current.config_hash, self.config_hash
            ));
        }
        for e in &self.entries {
            match current.entries.iter().find(|c| c.name == e.name) {
                None => out.push(format!("{} missing", e.name)),
                Some(c) if !((c.value - e.value).abs() <= e.tolerance) => out.push(format!(
                    "{} = {} outside {} ± {}",
                    e.name, c.value, e.value, e.tolerance
                )),
                Some(_) => {}
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compare_flags_drift_and_missing_entries() {
        let mut a = RegressionBaseline::new("h".into());
        a.push("d_star", 0.04, 0.01);
        a.push("points", 2.0, 0.0);
        let mut b = a.clone();
        assert!(a.compare(&b).is_empty());
        b.entries[0].value = 0.0403;
        assert!(a.compare(&b).is_empty());
        b.entries[0].value = 0.041;
        assert_eq!(a.compare(&b).len(), 1);
        b.entries.pop();
        b.config_hash = "g".into();
        assert_eq!(a.compare(&b).len(), 3);
    }
}
