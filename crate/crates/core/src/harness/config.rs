//! JSON experiment configuration.
//!
//! Every field is optional in the file; absent fields take the simulation
//! defaults below. The seed is the one exception: it may be left out of the
//! file but must be supplied (for instance from the command line) before a
//! run, see [`ExperimentConfig::validate`].

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ProcessModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    #[default]
    MseVsSensors,
    OutageVsPower,
    TrackingTrace,
}

impl ExperimentKind {
    pub fn label(self) -> &'static str {
        match self {
            ExperimentKind::MseVsSensors => "mse_vs_sensors",
            ExperimentKind::OutageVsPower => "outage_vs_power",
            ExperimentKind::TrackingTrace => "tracking_trace",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintMode {
    Sum,
    Individual,
    #[serde(alias = "equal")]
    EqualPower,
    #[default]
    All,
}

impl ConstraintMode {
    pub fn includes(self, other: ConstraintMode) -> bool {
        self == ConstraintMode::All || self == other
    }
}

/// A scalar or a list of scalars.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> OneOrMany<T> {
    pub fn to_vec(&self) -> Vec<T> {
        match self {
            OneOrMany::One(x) => vec![x.clone()],
            OneOrMany::Many(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    /// Defaults to `2..=20` for the MSE sweep and `10` otherwise.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_sensors: Option<OneOrMany<usize>>,
    /// Defaults to `[300, 3000]` for the MSE sweep, ten log-spaced points
    /// over `[1, 1e4]` for the outage sweep and `3000` for tracking.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_max: Option<OneOrMany<f64>>,
    pub constraint_mode: ConstraintMode,
    pub realizations: usize,
    pub trials: usize,
    pub epsilon: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub distance_range: [f64; 2],
    /// Draws are clamped below at [`MIN_SIGMA_V2`].
    pub sigma_v2_range: [f64; 2],
    pub sigma_w2: f64,
    pub sigma_theta2: f64,
    pub alpha: f64,
    /// Process-noise variance; when absent it is `(1 - alpha^2) sigma_theta2`
    /// so the process is stationary with variance `sigma_theta2`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma_u2: Option<f64>,
    /// Path-loss exponent.
    pub gamma: f64,
    /// Prediction MSE before the first update.
    pub p_init: f64,
    /// Measurement updates per realization (MSE sweep) or per trial (tracking).
    pub steps: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_path: Option<String>,
}

/// Lower clamp on drawn measurement-noise variances.
pub const MIN_SIGMA_V2: f64 = 1e-6;

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            experiment: ExperimentKind::MseVsSensors,
            n_sensors: None,
            p_max: None,
            constraint_mode: ConstraintMode::All,
            realizations: 300,
            trials: 100_000,
            epsilon: 0.3,
            seed: None,
            distance_range: [2.0, 8.0],
            sigma_v2_range: [0.0, 0.5],
            sigma_w2: 0.5,
            sigma_theta2: 1.0,
            alpha: 0.9,
            sigma_u2: None,
            gamma: 1.0,
            p_init: 1.0,
            steps: 1,
            output_path: None,
        }
    }
}

fn config_err(key: &str, reason: impl std::fmt::Display) -> Error {
    Error::Config(format!("`{key}`: {reason}"))
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config is plain data")
    }

    pub fn process_model(&self) -> Result<ProcessModel> {
        match self.sigma_u2 {
            Some(s) => ProcessModel::new(self.alpha, s, self.sigma_theta2),
            None => ProcessModel::stationary(self.alpha, self.sigma_theta2),
        }
    }

    pub fn sensor_counts(&self) -> Vec<usize> {
        match (&self.n_sensors, self.experiment) {
            (Some(n), _) => n.to_vec(),
            (None, ExperimentKind::MseVsSensors) => (2..=20).collect(),
            (None, _) => vec![10],
        }
    }

    pub fn p_max_values(&self) -> Vec<f64> {
        match (&self.p_max, self.experiment) {
            (Some(p), _) => p.to_vec(),
            (None, ExperimentKind::MseVsSensors) => vec![300.0, 3000.0],
            (None, ExperimentKind::OutageVsPower) => (0..10).map(|k| 10f64.powf(4.0 * k as f64 / 9.0)).collect(),
            (None, ExperimentKind::TrackingTrace) => vec![3000.0],
        }
    }

    /// The seed, or an error naming the missing key.
    pub fn require_seed(&self) -> Result<u64> {
        self.seed.ok_or_else(|| config_err("seed", "required for a reproducible run"))
    }

    pub fn validate(&self) -> Result<()> {
        self.require_seed()?;
        let counts = self.sensor_counts();
        if counts.is_empty() || counts.contains(&0) {
            return Err(config_err("n_sensors", "must list positive sensor counts"));
        }
        let p = self.p_max_values();
        if p.is_empty() || p.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(config_err("p_max", "must list positive finite budgets"));
        }
        if self.realizations == 0 {
            return Err(config_err("realizations", "must be at least 1"));
        }
        if self.trials == 0 {
            return Err(config_err("trials", "must be at least 1"));
        }
        if self.steps == 0 {
            return Err(config_err("steps", "must be at least 1"));
        }
        if !(self.epsilon > 0.0) {
            return Err(config_err("epsilon", "must be positive"));
        }
        let [dlo, dhi] = self.distance_range;
        if !(dlo > 0.0 && dlo <= dhi && dhi.is_finite()) {
            return Err(config_err("distance_range", "need 0 < lower <= upper"));
        }
        let [slo, shi] = self.sigma_v2_range;
        if !(slo >= 0.0 && slo <= shi && shi.is_finite()) {
            return Err(config_err("sigma_v2_range", "need 0 <= lower <= upper"));
        }
        if !(self.sigma_w2 > 0.0) {
            return Err(config_err("sigma_w2", "must be positive"));
        }
        if !(self.sigma_theta2 > 0.0) {
            return Err(config_err("sigma_theta2", "must be positive"));
        }
        if !(self.alpha.abs() < 1.0) {
            return Err(config_err("alpha", "need |alpha| < 1"));
        }
        if let Some(s) = self.sigma_u2 {
            if !(s >= 0.0 && s.is_finite()) {
                return Err(config_err("sigma_u2", "must be nonnegative"));
            }
        }
        if !(self.gamma >= 0.0) {
            return Err(config_err("gamma", "must be nonnegative"));
        }
        if !(self.p_init >= 0.0) {
            return Err(config_err("p_init", "must be nonnegative"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_gives_defaults() {
        let cfg = ExperimentConfig::from_json("{}").unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
        assert_eq!(cfg.distance_range, [2.0, 8.0]);
        assert_eq!(cfg.sigma_v2_range, [0.0, 0.5]);
        assert_eq!((cfg.gamma, cfg.sigma_theta2, cfg.p_init, cfg.sigma_w2), (1.0, 1.0, 1.0, 0.5));
        assert_eq!(cfg.realizations, 300);
        assert_eq!(cfg.p_max_values(), vec![300.0, 3000.0]);
        assert_eq!(cfg.sensor_counts(), (2..=20).collect::<Vec<_>>());
    }

    #[test]
    fn missing_seed_is_rejected() {
        let cfg = ExperimentConfig::from_json("{}").unwrap();
        let err = cfg.validate().unwrap_err().to_string();
        assert!(err.contains("seed"), "{err}");
        let cfg = ExperimentConfig::from_json(r#"{"seed": 7}"#).unwrap();
        cfg.validate().unwrap();
    }

    #[test]
    fn unknown_key_is_named() {
        let err = ExperimentConfig::from_json(r#"{"seed": 1, "sensorz": 3}"#).unwrap_err().to_string();
        assert!(err.contains("sensorz"), "{err}");
    }

    #[test]
    fn bad_value_is_named() {
        let cfg = ExperimentConfig::from_json(r#"{"seed": 1, "distance_range": [5.0, 2.0]}"#).unwrap();
        assert!(cfg.validate().unwrap_err().to_string().contains("distance_range"));
        let err = ExperimentConfig::from_json(r#"{"seed": 1, "realizations": -3}"#).unwrap_err().to_string();
        assert!(err.contains("realizations") || err.contains("-3"), "{err}");
    }

    #[test]
    fn scalar_or_list() {
        let cfg = ExperimentConfig::from_json(r#"{"n_sensors": 4, "p_max": [1.5, 2.5]}"#).unwrap();
        assert_eq!(cfg.sensor_counts(), vec![4]);
        assert_eq!(cfg.p_max_values(), vec![1.5, 2.5]);
    }

    #[test]
    fn round_trip() {
        let cfg = ExperimentConfig {
            experiment: ExperimentKind::OutageVsPower,
            n_sensors: Some(OneOrMany::Many(vec![3, 5])),
            p_max: Some(OneOrMany::One(0.1 + 0.2)),
            constraint_mode: ConstraintMode::EqualPower,
            seed: Some(u64::MAX),
            epsilon: 1.0 / 3.0,
            output_path: Some("out.csv".into()),
            ..ExperimentConfig::default()
        };
        assert_eq!(ExperimentConfig::from_json(&cfg.to_json()).unwrap(), cfg);
        let empty = ExperimentConfig::default();
        assert_eq!(ExperimentConfig::from_json(&empty.to_json()).unwrap(), empty);
    }

    #[test]
    fn outage_default_sweep() {
        let cfg = ExperimentConfig { experiment: ExperimentKind::OutageVsPower, ..ExperimentConfig::default() };
        let p = cfg.p_max_values();
        assert_eq!(p.len(), 10);
        assert_eq!((p[0], p[9]), (1.0, 1e4));
        assert_eq!(cfg.sensor_counts(), vec![10]);
    }
}
