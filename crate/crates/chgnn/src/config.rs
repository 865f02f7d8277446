//! Run configuration as a flat JSON object.
//!
//! Unset fields take their defaults. A `"preset"` key selects a
//! per-dataset starting point that explicit fields then override.

use std::path::{Path, PathBuf};

use chgnn_core::{LossWeights, ModelConfig, OptimConfig, TemperatureConfig};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub preset: Option<String>,
    pub dataset: Option<PathBuf>,
    pub seed: u64,
    pub epochs: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub nhid: usize,
    pub nproj: usize,
    pub mlp_hidden: usize,
    pub p_node: f64,
    pub p_tau: f64,
    pub lambda_h: f64,
    pub lambda_c: f64,
    pub lambda_e: f64,
    pub lambda_nc: f64,
    pub lambda_ne: f64,
    pub lambda_ec: f64,
    pub tau_c: f64,
    pub tau_e: f64,
    pub tau_nc: f64,
    pub tau_ne: f64,
    pub tau_ec: f64,
    pub tau_c_ub: f64,
    pub tau_e_ub: f64,
    pub eps_c: f64,
    pub eps_e: f64,
    pub gumbel_temperature: f64,
    pub hard_sampling: bool,
    pub folds: usize,
    /// Fraction of nodes labeled for training in every fold. Without it,
    /// folds are a k-way partition with one part held out.
    pub label_ratio: Option<f64>,
    /// Keeps wall-clock time out of `metrics.json` so reruns compare equal.
    pub deterministic: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let m = ModelConfig::default();
        let o = OptimConfig::default();
        let (w, t) = (m.weights, m.temperatures);
        Self {
            preset: None,
            dataset: None,
            seed: o.seed,
            epochs: o.epochs,
            lr: o.lr,
            weight_decay: o.weight_decay,
            nhid: m.nhid,
            nproj: m.nproj,
            mlp_hidden: m.mlp_hidden,
            p_node: m.p_node,
            p_tau: m.p_tau,
            lambda_h: w.lambda_h,
            lambda_c: w.lambda_c,
            lambda_e: w.lambda_e,
            lambda_nc: w.lambda_nc,
            lambda_ne: w.lambda_ne,
            lambda_ec: w.lambda_ec,
            tau_c: t.tau_c,
            tau_e: t.tau_e,
            tau_nc: t.tau_nc,
            tau_ne: t.tau_ne,
            tau_ec: t.tau_ec,
            tau_c_ub: t.tau_c_ub,
            tau_e_ub: t.tau_e_ub,
            eps_c: t.eps_c,
            eps_e: t.eps_e,
            gumbel_temperature: m.gumbel_temperature,
            hard_sampling: m.hard_sampling,
            folds: 10,
            label_ratio: None,
            deterministic: true,
        }
    }
}

impl TrainConfig {
    /// Hyperparameter-table values for the co-citation Cora hypergraph,
    /// labeled at its 5.2% ratio.
    pub fn cc_cora() -> Self {
        Self {
            preset: Some("cc-cora".into()),
            lambda_e: 0.7,
            lambda_nc: 0.5,
            lambda_ne: 0.9,
            lambda_ec: 0.9,
            nhid: 64,
            nproj: 16,
            label_ratio: Some(0.052),
            ..Self::default()
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "default" => Ok(Self::default()),
            "cc-cora" => Ok(Self::cc_cora()),
            other => Err(CliError::config("preset", format!("unknown preset `{other}`"))),
        }
    }

    /// Builds a config from a JSON object, applying the preset first.
    pub fn from_json(value: Value) -> Result<Self> {
        let Value::Object(fields) = value else {
            return Err(CliError::config("<root>", "config must be a JSON object"));
        };
        let base = match fields.get("preset") {
            None | Some(Value::Null) => Self::default(),
            Some(Value::String(name)) => Self::preset(name)?,
            Some(_) => return Err(CliError::config("preset", "must be a string")),
        };
        let Value::Object(mut merged) = serde_json::to_value(&base).expect("config serializes") else {
            unreachable!("config serializes to an object")
        };
        for (k, v) in fields {
            if !merged.contains_key(&k) {
                return Err(CliError::config(&k, "unknown field"));
            }
            merged.insert(k, v);
        }
        let cfg = Self::deserialize_fields(merged)?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn deserialize_fields(fields: Map<String, Value>) -> Result<Self> {
        // Decode field by field so a type error names its field.
        let mut cfg = Self::default();
        let mut object = serde_json::to_value(&cfg).expect("config serializes");
        for (k, v) in fields {
            let mut probe = object.clone();
            probe[&k] = v.clone();
            if let Err(e) = serde_json::from_value::<Self>(probe) {
                return Err(CliError::config(&k, e.to_string()));
            }
            object[&k] = v;
        }
        cfg = serde_json::from_value(object).map_err(|e| CliError::config("<root>", e.to_string()))?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("lr", self.lr),
            ("tau_c", self.tau_c),
            ("tau_e", self.tau_e),
            ("tau_nc", self.tau_nc),
            ("tau_ne", self.tau_ne),
            ("tau_ec", self.tau_ec),
            ("tau_c_ub", self.tau_c_ub),
            ("tau_e_ub", self.tau_e_ub),
            ("gumbel_temperature", self.gumbel_temperature),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(CliError::config(name, format!("must be positive, got {v}")));
            }
        }
        let non_negative = [
            ("weight_decay", self.weight_decay),
            ("lambda_h", self.lambda_h),
            ("lambda_c", self.lambda_c),
            ("lambda_e", self.lambda_e),
            ("lambda_nc", self.lambda_nc),
            ("lambda_ne", self.lambda_ne),
            ("lambda_ec", self.lambda_ec),
        ];
        for (name, v) in non_negative {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(CliError::config(name, format!("must be non-negative, got {v}")));
            }
        }
        for (name, v) in [("p_node", self.p_node), ("p_tau", self.p_tau)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(CliError::config(name, format!("must lie in [0, 1], got {v}")));
            }
        }
        for (name, v) in [("eps_c", self.eps_c), ("eps_e", self.eps_e)] {
            if !v.is_finite() {
                return Err(CliError::config(name, "must be finite"));
            }
        }
        for (name, v) in [
            ("epochs", self.epochs),
            ("nhid", self.nhid),
            ("nproj", self.nproj),
            ("mlp_hidden", self.mlp_hidden),
            ("folds", self.folds),
        ] {
            if v == 0 {
                return Err(CliError::config(name, "must be at least 1"));
            }
        }
        if let Some(r) = self.label_ratio {
            if !(r > 0.0 && r < 1.0) {
                return Err(CliError::config("label_ratio", format!("must lie in (0, 1), got {r}")));
            }
        }
        Ok(())
    }

    pub fn model(&self) -> ModelConfig {
        ModelConfig {
            nhid: self.nhid,
            nproj: self.nproj,
            mlp_hidden: self.mlp_hidden,
            p_node: self.p_node,
            p_tau: self.p_tau,
            gumbel_temperature: self.gumbel_temperature,
            hard_sampling: self.hard_sampling,
            weights: LossWeights {
                lambda_h: self.lambda_h,
                lambda_c: self.lambda_c,
                lambda_e: self.lambda_e,
                lambda_nc: self.lambda_nc,
                lambda_ne: self.lambda_ne,
                lambda_ec: self.lambda_ec,
            },
            temperatures: TemperatureConfig {
                tau_c: self.tau_c,
                tau_e: self.tau_e,
                tau_nc: self.tau_nc,
                tau_ne: self.tau_ne,
                tau_ec: self.tau_ec,
                tau_c_ub: self.tau_c_ub,
                tau_e_ub: self.tau_e_ub,
                eps_c: self.eps_c,
                eps_e: self.eps_e,
            },
        }
    }

    pub fn optim(&self, seed: u64) -> OptimConfig {
        OptimConfig {
            epochs: self.epochs,
            lr: self.lr,
            weight_decay: self.weight_decay,
            seed,
        }
    }
}

pub fn load_config(path: &Path) -> Result<TrainConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let value: Value = serde_json::from_str(&text).map_err(|e| CliError::json(path, e))?;
    TrainConfig::from_json(value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn empty_object_gives_defaults() {
        let cfg = TrainConfig::from_json(json!({})).unwrap();
        assert_eq!(cfg.p_node, 0.2);
        assert_eq!(cfg.p_tau, 0.8);
        assert_eq!(cfg.eps_c, 0.2);
        assert_eq!(cfg.eps_e, 0.2);
        assert_eq!(cfg.lambda_h, 1.0);
        assert_eq!(cfg.lambda_c, 1.0);
    }

    #[test]
    fn out_of_range_values_name_their_field() {
        let err = TrainConfig::from_json(json!({"p_node": 1.5})).unwrap_err();
        assert!(matches!(&err, CliError::Config { field, .. } if field == "p_node"), "{err}");
        let err = TrainConfig::from_json(json!({"epochs": 0})).unwrap_err();
        assert!(matches!(&err, CliError::Config { field, .. } if field == "epochs"));
        let err = TrainConfig::from_json(json!({"lr": "fast"})).unwrap_err();
        assert!(matches!(&err, CliError::Config { field, .. } if field == "lr"));
        let err = TrainConfig::from_json(json!({"learning_rate": 0.1})).unwrap_err();
        assert!(matches!(&err, CliError::Config { field, .. } if field == "learning_rate"));
    }

    #[test]
    fn cc_cora_preset_with_override() {
        let cfg = TrainConfig::from_json(json!({"preset": "cc-cora", "epochs": 5})).unwrap();
        assert_eq!(
            (cfg.lambda_e, cfg.lambda_nc, cfg.lambda_ne, cfg.lambda_ec),
            (0.7, 0.5, 0.9, 0.9)
        );
        assert_eq!((cfg.nhid, cfg.nproj, cfg.epochs), (64, 16, 5));
        assert!(TrainConfig::from_json(json!({"preset": "imagenet"})).is_err());
    }

    #[test]
    fn converts_to_core_configs() {
        let cfg = TrainConfig::cc_cora();
        cfg.model().validate().unwrap();
        assert_eq!(cfg.model().weights.lambda_ne, 0.9);
        assert_eq!(cfg.optim(3).seed, 3);
    }
}
