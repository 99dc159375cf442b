//! Experiment configuration, read from a single JSON file.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

pub const SCHEMA_VERSION: u32 = 1;

/// Parameters shared by all suites. Unknown keys are rejected and every
/// numeric range is checked by [`ExperimentConfig::validate`].
#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    /// Fractional orders in `(0, 1)`.
    pub s: Vec<f64>,
    /// Thin dimension for the solver suite.
    #[serde(default = "default_n")]
    pub n: usize,
    /// Grid spacings for the convergence study, coarse to fine.
    #[serde(default = "default_h")]
    pub h: Vec<f64>,
    /// Solver tolerance.
    #[serde(default = "default_tol")]
    pub tol: f64,
    /// Cells of the angular eigenvalue oracle.
    #[serde(default = "default_grid")]
    pub grid: usize,
    /// Number of angular eigenvalues.
    #[serde(default = "default_modes")]
    pub modes: usize,
    /// Barrier exponents.
    #[serde(default = "default_tau")]
    pub tau: Vec<f64>,
    /// Random sample points per check.
    #[serde(default = "default_samples")]
    pub samples: usize,
    /// Random triples for the quasi-triangle constant.
    #[serde(default = "default_triples")]
    pub triples: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Output directory (overridden by the environment and `--out`).
    #[serde(default)]
    pub out: Option<String>,
}

fn default_n() -> usize {
    1
}
fn default_h() -> Vec<f64> {
    vec![1.0 / 32.0, 1.0 / 64.0, 1.0 / 128.0]
}
fn default_tol() -> f64 {
    1e-10
}
fn default_grid() -> usize {
    2000
}
fn default_modes() -> usize {
    5
}
fn default_tau() -> Vec<f64> {
    vec![0.1, 0.25]
}
fn default_samples() -> usize {
    1000
}
fn default_triples() -> usize {
    100_000
}
fn default_seed() -> u64 {
    7
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            schema_version: SCHEMA_VERSION,
            s: vec![0.3, 0.5, 0.7],
            n: default_n(),
            h: default_h(),
            tol: default_tol(),
            grid: default_grid(),
            modes: default_modes(),
            tau: default_tau(),
            samples: default_samples(),
            triples: default_triples(),
            seed: default_seed(),
            out: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| CliError::ConfigInvalid(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::ConfigInvalid(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, why: String| Err(CliError::ConfigInvalid(format!("field `{field}`: {why}")));
        if self.schema_version != SCHEMA_VERSION {
            return bad("schema_version", format!("{} unsupported, expected {SCHEMA_VERSION}", self.schema_version));
        }
        if self.s.is_empty() {
            return bad("s", "empty list".into());
        }
        if let Some(v) = self.s.iter().find(|v| !(**v > 0.0 && **v < 1.0)) {
            return bad("s", format!("{v} not in (0, 1)"));
        }
        if !(1..=2).contains(&self.n) {
            return bad("n", format!("{} not in 1..=2", self.n));
        }
        if self.h.len() < 2 {
            return bad("h", "need at least two spacings".into());
        }
        for h in &self.h {
            let cells = 1.0 / h;
            if !(*h > 0.0 && *h <= 0.25) || (cells - cells.round()).abs() > 1e-9 {
                return bad("h", format!("{h} must be 1/m with m >= 4"));
            }
        }
        if self.h.windows(2).any(|w| w[1] >= w[0]) {
            return bad("h", "spacings must decrease".into());
        }
        if !(self.tol > 0.0 && self.tol < 1e-2) {
            return bad("tol", format!("{} not in (0, 1e-2)", self.tol));
        }
        if self.grid < 100 {
            return bad("grid", format!("{} < 100", self.grid));
        }
        if !(1..=10).contains(&self.modes) {
            return bad("modes", format!("{} not in 1..=10", self.modes));
        }
        if self.tau.is_empty() || self.tau.iter().any(|t| !(*t > 0.0 && *t < 1.0)) {
            return bad("tau", "values must lie in (0, 1)".into());
        }
        if self.samples < 10 {
            return bad("samples", format!("{} < 10", self.samples));
        }
        if self.triples == 0 {
            return bad("triples", "must be positive".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_uses_defaults() {
        let cfg = ExperimentConfig::from_json(r#"{"schema_version": 1, "s": [0.5]}"#).unwrap();
        assert_eq!(cfg.h, default_h());
        assert_eq!(cfg.n, 1);
    }

    #[test]
    fn missing_s_is_named() {
        let err = ExperimentConfig::from_json(r#"{"schema_version": 1}"#).unwrap_err();
        assert!(matches!(&err, CliError::ConfigInvalid(m) if m.contains("`s`")), "{err}");
    }

    #[test]
    fn rejects_unknown_keys_and_ranges() {
        assert!(ExperimentConfig::from_json(r#"{"schema_version": 1, "s": [0.5], "speed": 3}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"schema_version": 1, "s": [1.5]}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"schema_version": 2, "s": [0.5]}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"schema_version": 1, "s": [0.5], "h": [0.15, 0.05]}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"schema_version": 1, "s": [0.5], "h": [0.0625, 0.125]}"#).is_err());
        ExperimentConfig::default().validate().unwrap();
    }
}
