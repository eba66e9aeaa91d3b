//! Run configuration: a TOML file with `[model]`, `[run]`, `[output]`,
//! `[curve]` and `[sweep]` sections. Every key is optional; unknown keys are
//! rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sps_core::dynamics::{DynamicsError, ModelParams};
use sps_core::experiment::{default_h_grid, ExperimentError, RunControl, SweepCase};
use thiserror::Error;

#[derive(Debug, Error)]
#[error("config error at `{path}`: {reason}")]
pub struct ConfigError {
    pub path: String,
    pub reason: String,
}

impl ConfigError {
    fn new(path: impl Into<String>, reason: impl Into<String>) -> Self {
        Self {
            path: path.into(),
            reason: reason.into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    /// Directory receiving CSV, JSON and SVG files.
    pub dir: PathBuf,
    /// Also render an SVG next to each table.
    pub plot: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            plot: false,
        }
    }
}

/// Pumping-time grid of the deterministic curve.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CurveSection {
    pub t_end: f64,
    pub t_step: f64,
}

impl Default for CurveSection {
    fn default() -> Self {
        Self {
            t_end: 40.0,
            t_step: 0.1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub omegas: Vec<f64>,
    pub cases: Vec<SweepCase>,
    /// CUSUM thresholds to scan; ten per decade over `[0.01, 100]` when absent.
    pub h_grid: Option<Vec<f64>>,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            omegas: (1..=10).map(|i| i as f64 / 100.0).collect(),
            cases: vec![
                SweepCase::deterministic(1.0),
                SweepCase::cusum(10.0, 1.0),
                SweepCase::cusum(1.0, 1.0),
                SweepCase::cusum(0.1, 1.0),
            ],
            h_grid: None,
        }
    }
}

impl SweepSection {
    pub fn thresholds(&self) -> Vec<f64> {
        self.h_grid.clone().unwrap_or_else(default_h_grid)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub model: ModelParams<f64>,
    pub run: RunControl,
    pub output: OutputSection,
    pub curve: CurveSection,
    pub sweep: SweepSection,
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: Config = toml::from_str(text).map_err(|e| {
            let path = e
                .span()
                .map(|s| format!("bytes {}..{}", s.start, s.end))
                .unwrap_or_else(|| "<input>".into());
            ConfigError::new(path, e.message().trim())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let cfg: Config = serde_json::from_str(text).map_err(|e| ConfigError::new("<json>", e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| ConfigError::new(path.display().to_string(), e.to_string()))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.model.validate().map_err(|e| match e {
            DynamicsError::InvalidParams { name, reason } => ConfigError::new(format!("model.{name}"), reason),
            other => ConfigError::new("model", other.to_string()),
        })?;
        self.run.validate().map_err(|e| match e {
            ExperimentError::InvalidControl { name, reason } => ConfigError::new(format!("run.{name}"), reason),
            other => ConfigError::new("run", other.to_string()),
        })?;
        if !(self.curve.t_step > 0.0 && self.curve.t_end >= 0.0) {
            return Err(ConfigError::new(
                "curve",
                "t_step must be positive and t_end non-negative",
            ));
        }
        if self.sweep.omegas.is_empty() || self.sweep.cases.is_empty() {
            return Err(ConfigError::new("sweep", "omegas and cases must be nonempty"));
        }
        if self.sweep.omegas.iter().any(|w| !(*w >= 0.0)) {
            return Err(ConfigError::new("sweep.omegas", "pump rates must be non-negative"));
        }
        if let Some(hs) = &self.sweep.h_grid {
            if hs.is_empty() || hs.iter().any(|h| !(*h >= 0.0)) {
                return Err(ConfigError::new(
                    "sweep.h_grid",
                    "thresholds must be non-negative and nonempty",
                ));
            }
        }
        for (i, c) in self.sweep.cases.iter().enumerate() {
            let p = ModelParams {
                gamma: c.gamma,
                eta: c.eta,
                ..self.model
            };
            p.validate()
                .map_err(|e| ConfigError::new(format!("sweep.cases[{i}]"), e.to_string()))?;
        }
        Ok(())
    }

    /// Departures from the regime where monitoring helps: `Gamma << Omega`
    /// and `g <= gamma < kappa`. These are warnings, not errors.
    pub fn regime_warnings(&self) -> Vec<String> {
        let m = &self.model;
        let mut out = Vec::new();
        if !(m.big_gamma <= 0.1 * m.omega) {
            out.push(format!(
                "Gamma = {} is not much smaller than Omega = {}",
                m.big_gamma, m.omega
            ));
        }
        if !(m.g <= m.gamma && m.gamma < m.kappa) {
            out.push(format!(
                "g <= gamma < kappa does not hold (g = {}, gamma = {}, kappa = {})",
                m.g, m.gamma, m.kappa
            ));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use sps_core::experiment::Controller;

    #[test]
    fn empty_config_is_all_defaults() {
        let c = Config::from_toml("").unwrap();
        assert_eq!(c, Config::default());
        assert_eq!(c.model.g, 0.1);
        assert_eq!(c.model.big_gamma, 0.001);
        assert_eq!(c.model.kappa, 1.0);
        assert_eq!(c.model.gamma, 1.0);
        assert_eq!(c.model.eta, 1.0);
        assert_eq!(c.model.omega, 0.1);
        assert_eq!(c.run.epsilon, 0.01);
    }

    #[test]
    fn out_of_range_efficiency_is_rejected() {
        let e = Config::from_toml("[model]\neta = 1.5\n").unwrap_err();
        assert_eq!(e.path, "model.eta");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(Config::from_toml("[model]\ndelta = 1.0\n").is_err());
        assert!(Config::from_toml("[runs]\n").is_err());
        assert!(Config::from_toml("[run]\ncontroller = { kind = \"timer\" }\n").is_err());
    }

    #[test]
    fn strong_spontaneous_emission_only_warns() {
        let c = Config::from_toml("[model]\nGamma = 0.5\nOmega = 0.1\n").unwrap();
        assert!(c.regime_warnings().iter().any(|w| w.contains("Gamma")));
    }

    #[test]
    fn nested_values_parse() {
        let text = r#"
[model]
gamma = 0.5
[run]
t_tail = 400.0
controller = { kind = "timer", t_stop = 8.0 }
workers = 2
[sweep]
omegas = [0.02]
cases = [{ gamma = 2.0, eta = 0.5, kind = "cusum" }]
h_grid = [1.0, 2.0]
"#;
        let c = Config::from_toml(text).unwrap();
        assert_eq!(c.run.controller, Controller::Timer { t_stop: 8.0 });
        assert_eq!(c.run.t_tail, sps_core::dynamics::TailLength::Fixed(400.0));
        assert_eq!(c.run.workers, Some(2));
        assert_eq!(c.sweep.thresholds(), vec![1.0, 2.0]);
        let auto = Config::from_toml("[run]\nt_tail = \"auto\"\n").unwrap();
        assert_eq!(auto.run.t_tail, Default::default());
    }

    #[test]
    fn json_echo_round_trips() {
        let c = Config::from_toml("[model]\ng = 0.123456789012345678\n[run]\ndt = 0.003\n").unwrap();
        let json = serde_json::to_string(&c).unwrap();
        assert_eq!(Config::from_json(&json).unwrap(), c);
    }
}
