use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn default_alpha() -> f64 {
    0.04
}
fn default_beta_fair() -> f64 {
    0.20
}
fn default_tau() -> f64 {
    0.1
}
fn default_latent_dim() -> usize {
    16
}
fn default_warmup() -> usize {
    20
}
fn default_max_epochs() -> usize {
    300
}
fn default_batch_size() -> usize {
    256
}
fn default_lr() -> f64 {
    1e-4
}
fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_eps() -> f64 {
    1e-8
}
fn default_f_beta_weight() -> f64 {
    1.0
}

/// Training hyper-parameters. `k` is the only required JSON key; unknown keys
/// are rejected.
///
/// `beta_fair` weights the fairness loss. `f_beta_weight` is the unrelated
/// weight of the F_β score used only when reporting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_beta_fair")]
    pub beta_fair: f64,
    #[serde(default = "default_tau")]
    pub tau: f64,
    pub k: usize,
    #[serde(default = "default_latent_dim")]
    pub latent_dim: usize,
    /// Full encoder widths including the input dimension. Empty means
    /// `D–256–64–latent_dim`.
    #[serde(default)]
    pub layer_dims: Vec<usize>,
    #[serde(default = "default_warmup")]
    pub warmup_epochs: usize,
    #[serde(default = "default_max_epochs")]
    pub max_epochs: usize,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_beta1")]
    pub adam_beta1: f64,
    #[serde(default = "default_beta2")]
    pub adam_beta2: f64,
    #[serde(default = "default_eps")]
    pub adam_eps: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_f_beta_weight")]
    pub f_beta_weight: f64,
}

impl TrainConfig {
    /// Defaults for everything but the cluster count.
    pub fn new(k: usize) -> Self {
        Self {
            alpha: default_alpha(),
            beta_fair: default_beta_fair(),
            tau: default_tau(),
            k,
            latent_dim: default_latent_dim(),
            layer_dims: Vec::new(),
            warmup_epochs: default_warmup(),
            max_epochs: default_max_epochs(),
            batch_size: default_batch_size(),
            learning_rate: default_lr(),
            adam_beta1: default_beta1(),
            adam_beta2: default_beta2(),
            adam_eps: default_eps(),
            seed: 0,
            f_beta_weight: default_f_beta_weight(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.k < 2 {
            return bad(format!("k must be at least 2, got {}", self.k));
        }
        if self.warmup_epochs > self.max_epochs {
            return bad(format!(
                "warmup_epochs {} exceeds max_epochs {}",
                self.warmup_epochs, self.max_epochs
            ));
        }
        if self.batch_size == 0 || self.latent_dim == 0 {
            return bad("batch_size and latent_dim must be positive".into());
        }
        for (name, v) in [
            ("tau", self.tau),
            ("learning_rate", self.learning_rate),
            ("adam_eps", self.adam_eps),
            ("f_beta_weight", self.f_beta_weight),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        for (name, v) in [("alpha", self.alpha), ("beta_fair", self.beta_fair)] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be non-negative, got {v}"));
            }
        }
        for (name, v) in [("adam_beta1", self.adam_beta1), ("adam_beta2", self.adam_beta2)] {
            if !(0.0..1.0).contains(&v) {
                return bad(format!("{name} must lie in [0, 1), got {v}"));
            }
        }
        if !self.layer_dims.is_empty() {
            if self.layer_dims.len() < 2 || self.layer_dims.contains(&0) {
                return bad(format!("invalid layer_dims {:?}", self.layer_dims));
            }
            if self.layer_dims.last() != Some(&self.latent_dim) {
                return bad(format!(
                    "layer_dims {:?} must end at latent_dim {}",
                    self.layer_dims, self.latent_dim
                ));
            }
        }
        Ok(())
    }

    /// Encoder widths for input dimension `d`.
    pub fn resolve_layer_dims(&self, d: usize) -> Result<Vec<usize>> {
        if self.layer_dims.is_empty() {
            return Ok(vec![d, 256, 64, self.latent_dim]);
        }
        if self.layer_dims[0] != d {
            return Err(Error::Config(format!(
                "layer_dims start at {} but the data has {d} features",
                self.layer_dims[0]
            )));
        }
        Ok(self.layer_dims.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_required_k() {
        let cfg = TrainConfig::from_json(r#"{"k": 4}"#).unwrap();
        assert_eq!(cfg, TrainConfig::new(4));
        assert_eq!((cfg.alpha, cfg.beta_fair, cfg.tau), (0.04, 0.20, 0.1));
        assert_eq!((cfg.warmup_epochs, cfg.max_epochs, cfg.batch_size), (20, 300, 256));
        assert!(TrainConfig::from_json("{}").is_err());
    }

    #[test]
    fn rejects_typos_and_bad_values() {
        assert!(TrainConfig::from_json(r#"{"k": 3, "beta": 0.2}"#).is_err());
        assert!(TrainConfig::from_json(r#"{"k": 1}"#).is_err());
        assert!(TrainConfig::from_json(r#"{"k": 3, "warmup_epochs": 5, "max_epochs": 4}"#).is_err());
        assert!(TrainConfig::from_json(r#"{"k": 3, "learning_rate": 0}"#).is_err());
        assert!(TrainConfig::from_json(r#"{"k": 3, "alpha": -1}"#).is_err());
        assert!(TrainConfig::from_json(r#"{"k": 3, "layer_dims": [5, 8]}"#).is_err());
    }

    #[test]
    fn layer_dims_resolution() {
        let cfg = TrainConfig::new(3);
        assert_eq!(cfg.resolve_layer_dims(10).unwrap(), vec![10, 256, 64, 16]);
        let custom = TrainConfig {
            layer_dims: vec![4, 8, 16],
            ..cfg
        };
        assert!(custom.resolve_layer_dims(5).is_err());
        let back = TrainConfig::from_json(&custom.to_json()).unwrap();
        assert_eq!(back, custom);
    }
}
