//! Plain-text `key = value` run configuration.

use std::path::PathBuf;

use lorenz_core::flow::GeometricLorenzParams;
use lorenz_core::specification::ExperimentConfig;
use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("key `{0}` given twice")]
    Duplicate(String),
    #[error("bad value for `{key}`: {msg}")]
    Value { key: String, msg: String },
    #[error("{0}")]
    Params(String),
    #[error("cannot read config: {0}")]
    Io(String),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub params: GeometricLorenzParams,
    pub seed: u64,
    pub t_sweep: Vec<f64>,
    pub eps_sweep: Vec<f64>,
    pub sanity_factor: Option<f64>,
    pub segment: f64,
    pub segment_sensitivity: Vec<f64>,
    pub mu: f64,
    pub chart_grid: usize,
    pub injectivity_grid: usize,
    pub h_gap: f64,
    pub h_search: f64,
    pub gap_t: f64,
    pub hyperbolic_returns: usize,
    pub mixing_intervals: usize,
    pub cat_boxes: usize,
    pub mixing_n_max: usize,
    pub cat_instances: usize,
    pub cat_eps: f64,
    pub cat_segment: usize,
    #[serde(skip)]
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        let e = ExperimentConfig::default();
        Self {
            params: GeometricLorenzParams::default(),
            seed: 7,
            t_sweep: e.t_sweep,
            eps_sweep: e.eps_fractions,
            sanity_factor: e.sanity_factor,
            segment: e.segment,
            segment_sensitivity: e.segment_sensitivity,
            mu: e.mu,
            chart_grid: e.chart_grid,
            injectivity_grid: 200,
            h_gap: e.h_gap,
            h_search: e.h_search,
            gap_t: 50.0,
            hyperbolic_returns: 10_000,
            mixing_intervals: 1 << 10,
            cat_boxes: 64,
            mixing_n_max: 200,
            cat_instances: 20,
            cat_eps: 0.05,
            cat_segment: 10,
            output_dir: PathBuf::from("run"),
        }
    }
}

const KEYS: &[&str] = &[
    "lambda1",
    "lambda2",
    "lambda3",
    "k",
    "b",
    "c",
    "tau_tube",
    "seed",
    "T_sweep",
    "eps_sweep",
    "sanity_factor",
    "segment",
    "segment_sensitivity",
    "mu",
    "chart_grid",
    "injectivity_grid",
    "h_gap",
    "h_search",
    "gap_T",
    "hyperbolic_returns",
    "mixing_intervals",
    "cat_boxes",
    "mixing_n_max",
    "cat_instances",
    "cat_eps",
    "cat_segment",
    "output_dir",
];

fn list(v: &[f64]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

impl RunConfig {
    pub fn load(path: &std::path::Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Parses `key = value` lines; `#` starts a comment. Missing keys keep
    /// their defaults.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut pairs = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(ConfigError::Syntax {
                    line: i + 1,
                    msg: format!("expected `key = value`, got `{line}`"),
                });
            };
            pairs.push((k.trim().to_string(), v.trim().to_string()));
        }
        let mut seen = std::collections::HashSet::new();
        for (k, _) in &pairs {
            if !seen.insert(k.clone()) {
                return Err(ConfigError::Duplicate(k.clone()));
            }
        }
        let mut cfg = Self::default();
        cfg.apply(&pairs)?;
        Ok(cfg)
    }

    /// Applies overrides, then re-validates.
    pub fn apply(&mut self, pairs: &[(String, String)]) -> Result<(), ConfigError> {
        for (k, v) in pairs {
            self.set(k, v)?;
        }
        self.params.a = self.params.lambda3 / self.params.lambda1;
        self.validate()
    }

    fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let bad = |msg: String| ConfigError::Value {
            key: key.to_string(),
            msg,
        };
        let float = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|e| bad(format!("`{s}`: {e}")))
        };
        let int = |s: &str| {
            s.trim()
                .parse::<usize>()
                .map_err(|e| bad(format!("`{s}`: {e}")))
        };
        let floats = |s: &str| -> Result<Vec<f64>, ConfigError> {
            if s.trim().is_empty() {
                return Ok(Vec::new());
            }
            s.split(',').map(float).collect()
        };
        let p = &mut self.params;
        match key {
            "lambda1" => p.lambda1 = float(value)?,
            "lambda2" => p.lambda2 = float(value)?,
            "lambda3" => p.lambda3 = float(value)?,
            "k" => p.k = float(value)?,
            "b" => p.b = float(value)?,
            "c" => p.c = float(value)?,
            "tau_tube" => p.tau_tube = float(value)?,
            "seed" => self.seed = value.parse().map_err(|e| bad(format!("`{value}`: {e}")))?,
            "T_sweep" => self.t_sweep = floats(value)?,
            "eps_sweep" => self.eps_sweep = floats(value)?,
            "sanity_factor" => {
                self.sanity_factor = if value == "none" {
                    None
                } else {
                    Some(float(value)?)
                };
            }
            "segment" => self.segment = float(value)?,
            "segment_sensitivity" => self.segment_sensitivity = floats(value)?,
            "mu" => self.mu = float(value)?,
            "chart_grid" => self.chart_grid = int(value)?,
            "injectivity_grid" => self.injectivity_grid = int(value)?,
            "h_gap" => self.h_gap = float(value)?,
            "h_search" => self.h_search = float(value)?,
            "gap_T" => self.gap_t = float(value)?,
            "hyperbolic_returns" => self.hyperbolic_returns = int(value)?,
            "mixing_intervals" => self.mixing_intervals = int(value)?,
            "cat_boxes" => self.cat_boxes = int(value)?,
            "mixing_n_max" => self.mixing_n_max = int(value)?,
            "cat_instances" => self.cat_instances = int(value)?,
            "cat_eps" => self.cat_eps = float(value)?,
            "cat_segment" => self.cat_segment = int(value)?,
            "output_dir" => self.output_dir = PathBuf::from(value),
            _ => return Err(ConfigError::UnknownKey(key.to_string())),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.params
            .validate()
            .map_err(|e| ConfigError::Params(e.to_string()))?;
        let positive = |key: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(ConfigError::Value {
                    key: key.into(),
                    msg: format!("{v} must be positive"),
                })
            }
        };
        for (key, v) in [
            ("segment", self.segment),
            ("mu", self.mu),
            ("h_gap", self.h_gap),
            ("h_search", self.h_search),
            ("gap_T", self.gap_t),
            ("cat_eps", self.cat_eps),
        ] {
            positive(key, v)?;
        }
        for &t in &self.t_sweep {
            positive("T_sweep", t)?;
        }
        for &e in &self.eps_sweep {
            positive("eps_sweep", e)?;
        }
        for &s in &self.segment_sensitivity {
            positive("segment_sensitivity", s)?;
        }
        if let Some(f) = self.sanity_factor {
            positive("sanity_factor", f)?;
        }
        if self.t_sweep.is_empty() {
            return Err(ConfigError::Value {
                key: "T_sweep".into(),
                msg: "empty".into(),
            });
        }
        for (key, v) in [
            ("chart_grid", self.chart_grid),
            ("injectivity_grid", self.injectivity_grid),
            ("mixing_intervals", self.mixing_intervals),
            ("cat_boxes", self.cat_boxes),
            ("cat_segment", self.cat_segment),
        ] {
            if v < 2 {
                return Err(ConfigError::Value {
                    key: key.into(),
                    msg: format!("{v} is below 2"),
                });
            }
        }
        Ok(())
    }

    /// Canonical text form; every key in a fixed order.
    pub fn to_text(&self) -> String {
        let p = &self.params;
        let values = [
            p.lambda1.to_string(),
            p.lambda2.to_string(),
            p.lambda3.to_string(),
            p.k.to_string(),
            p.b.to_string(),
            p.c.to_string(),
            p.tau_tube.to_string(),
            self.seed.to_string(),
            list(&self.t_sweep),
            list(&self.eps_sweep),
            self.sanity_factor.map_or("none".into(), |f| f.to_string()),
            self.segment.to_string(),
            list(&self.segment_sensitivity),
            self.mu.to_string(),
            self.chart_grid.to_string(),
            self.injectivity_grid.to_string(),
            self.h_gap.to_string(),
            self.h_search.to_string(),
            self.gap_t.to_string(),
            self.hyperbolic_returns.to_string(),
            self.mixing_intervals.to_string(),
            self.cat_boxes.to_string(),
            self.mixing_n_max.to_string(),
            self.cat_instances.to_string(),
            self.cat_eps.to_string(),
            self.cat_segment.to_string(),
            self.output_dir.display().to_string(),
        ];
        KEYS.iter()
            .zip(values)
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    /// SHA-256 of the canonical text without the output directory.
    pub fn hash(&self) -> String {
        let text: String = self
            .to_text()
            .lines()
            .filter(|l| !l.starts_with("output_dir"))
            .map(|l| format!("{l}\n"))
            .collect();
        hex::encode(Sha256::digest(text.as_bytes()))
    }

    pub fn experiment(&self) -> ExperimentConfig {
        ExperimentConfig {
            t_sweep: self.t_sweep.clone(),
            eps_fractions: self.eps_sweep.clone(),
            sanity_factor: self.sanity_factor,
            mu: self.mu,
            chart_grid: self.chart_grid,
            h_gap: self.h_gap,
            h_search: self.h_search,
            max_period: 8,
            segment: self.segment,
            segment_sensitivity: self.segment_sensitivity.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_text_round_trips() {
        let c = RunConfig {
            t_sweep: vec![30.0, 55.5],
            sanity_factor: None,
            segment_sensitivity: vec![],
            ..RunConfig::default()
        };
        let back = RunConfig::parse(&c.to_text()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.hash(), c.hash());
    }

    #[test]
    fn comments_and_blank_lines() {
        let c = RunConfig::parse("# run\n\nk = 1.8   # steeper\nT_sweep = 30, 50\n").unwrap();
        assert_eq!(c.params.k, 1.8);
        assert_eq!(c.t_sweep, vec![30.0, 50.0]);
    }

    #[test]
    fn bad_configs_are_rejected() {
        assert!(matches!(
            RunConfig::parse("k 1.9"),
            Err(ConfigError::Syntax { line: 1, .. })
        ));
        assert!(matches!(
            RunConfig::parse("kk = 1"),
            Err(ConfigError::UnknownKey(_))
        ));
        assert!(matches!(
            RunConfig::parse("k = 1\nk = 2"),
            Err(ConfigError::Duplicate(_))
        ));
        assert!(matches!(
            RunConfig::parse("b = x"),
            Err(ConfigError::Value { .. })
        ));
        // k·a must exceed √2.
        assert!(matches!(
            RunConfig::parse("k = 1.2"),
            Err(ConfigError::Params(_))
        ));
        assert!(matches!(
            RunConfig::parse("h_search = -1"),
            Err(ConfigError::Value { .. })
        ));
    }

    #[test]
    fn hash_ignores_output_dir_only() {
        let a = RunConfig::default();
        let mut b = a.clone();
        b.output_dir = PathBuf::from("elsewhere");
        assert_eq!(a.hash(), b.hash());
        b.seed = 8;
        assert_ne!(a.hash(), b.hash());
    }
}
