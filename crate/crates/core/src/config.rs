//! Training configuration and per-dataset presets.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::losses::{ContrastiveConfig, VideoLossConfig};
use crate::pseudo::PseudoLabelConfig;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub lambda_vid: f64,
    pub lambda_pascl: f64,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub max_iterations: usize,
    pub train_length: usize,
    pub dropout: f64,
    pub r_fg: f64,
    pub r_bg: f64,
    pub temperature: f64,
    pub momentum: f64,
    pub theta_fg: f64,
    pub theta_bg: f64,
    pub pseudo_labels: bool,
    pub warmup_fraction: f64,
    pub seed: u64,
    /// Write a checkpoint every this many iterations; 0 disables.
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::preset("thumos").expect("built-in preset")
    }
}

pub const PRESETS: [&str; 6] = ["thumos", "activitynet", "fineaction", "gtea", "beoid", "synthetic"];

impl TrainConfig {
    /// Dataset presets. `synthetic` is a desk-scale setting for the bundled
    /// synthetic corpus; the others carry the published grid-search optima.
    pub fn preset(name: &str) -> Result<Self> {
        let base = Self {
            lambda_vid: 0.0,
            lambda_pascl: 0.0,
            learning_rate: 1e-4,
            weight_decay: 0.0,
            batch_size: 16,
            max_iterations: 2000,
            train_length: 100,
            dropout: 0.7,
            r_fg: 8.0,
            r_bg: 3.0,
            temperature: 0.1,
            momentum: 0.001,
            theta_fg: 1.0,
            theta_bg: 0.0,
            pseudo_labels: true,
            warmup_fraction: 0.2,
            seed: 0,
            checkpoint_every: 0,
        };
        let cfg = match name.to_ascii_lowercase().as_str() {
            "thumos" | "thumos14" => Self {
                weight_decay: 1e-3,
                lambda_vid: 3.0,
                lambda_pascl: 0.1,
                temperature: 0.1,
                theta_fg: 1.0,
                theta_bg: 0.05,
                train_length: 750,
                ..base
            },
            "fineaction" => Self {
                weight_decay: 1e-4,
                lambda_vid: 0.003,
                lambda_pascl: 0.01,
                temperature: 0.1,
                theta_fg: 1.0,
                theta_bg: 0.5,
                ..base
            },
            "gtea" => Self {
                weight_decay: 0.0,
                lambda_vid: 0.3,
                lambda_pascl: 0.03,
                temperature: 0.3,
                theta_fg: 0.5,
                theta_bg: 0.0,
                ..base
            },
            "beoid" => Self {
                learning_rate: 1e-3,
                weight_decay: 1e-4,
                lambda_vid: 0.3,
                lambda_pascl: 30.0,
                temperature: 0.3,
                theta_fg: 0.5,
                theta_bg: 0.0,
                ..base
            },
            "activitynet" | "anet" => Self {
                weight_decay: 1e-4,
                lambda_vid: 0.001,
                lambda_pascl: 0.001,
                temperature: 1.0,
                theta_fg: 0.95,
                theta_bg: 0.5,
                train_length: 50,
                r_fg: 2.0,
                r_bg: 10.0,
                ..base
            },
            "synthetic" => Self {
                learning_rate: 1e-2,
                weight_decay: 1e-4,
                lambda_vid: 1.0,
                lambda_pascl: 0.1,
                temperature: 0.1,
                theta_fg: 0.5,
                theta_bg: 0.1,
                // 0.7 on four classifier inputs leaves classes confusable
                dropout: 0.2,
                ..base
            },
            other => return Err(Error::UnknownKey(format!("preset {other:?}"))),
        };
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size", "must be at least 1"));
        }
        if self.train_length == 0 {
            return Err(Error::invalid("train_length", "must be at least 1"));
        }
        let nonneg = [
            ("lambda_vid", self.lambda_vid),
            ("lambda_pascl", self.lambda_pascl),
            ("learning_rate", self.learning_rate),
            ("weight_decay", self.weight_decay),
        ];
        for (field, v) in nonneg {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::invalid(field, format!("{v} must be finite and non-negative")));
            }
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::invalid("dropout", format!("{} not in [0, 1)", self.dropout)));
        }
        if !(self.r_fg >= 1.0 && self.r_bg >= 1.0) {
            return Err(Error::invalid("r_fg/r_bg", "must be at least 1"));
        }
        if !(self.temperature > 0.0) {
            return Err(Error::invalid("temperature", "must be positive"));
        }
        if !(self.momentum > 0.0 && self.momentum <= 1.0) {
            return Err(Error::invalid("momentum", format!("{} not in (0, 1]", self.momentum)));
        }
        self.pseudo_config().validate()
    }

    pub fn video_loss_config(&self) -> VideoLossConfig {
        VideoLossConfig { r_fg: self.r_fg, r_bg: self.r_bg }
    }

    pub fn contrastive_config(&self) -> ContrastiveConfig {
        ContrastiveConfig { temperature: self.temperature, weight: self.lambda_pascl }
    }

    pub fn pseudo_config(&self) -> PseudoLabelConfig {
        PseudoLabelConfig {
            theta_fg: self.theta_fg,
            theta_bg: self.theta_bg,
            enabled: self.pseudo_labels,
            warmup_fraction: self.warmup_fraction,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::json("train config", e))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}
