//! Training hyperparameters and the flat key-value config file format.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::TrainingError;

/// Which losses join the total. Language modeling is always on; the two
/// contrastive terms can be ablated independently. When a term is off its
/// mining and forward code never runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ablation {
    pub text_contrastive: bool,
    pub image_contrastive: bool,
}

impl Ablation {
    pub fn full() -> Ablation {
        Ablation {
            text_contrastive: true,
            image_contrastive: true,
        }
    }

    pub fn lm_only() -> Ablation {
        Ablation {
            text_contrastive: false,
            image_contrastive: false,
        }
    }

    pub fn parse(text: &str) -> Result<Ablation, TrainingError> {
        match text.trim() {
            "lm" => Ok(Ablation::lm_only()),
            "lm+t" => Ok(Ablation {
                text_contrastive: true,
                image_contrastive: false,
            }),
            "lm+i" => Ok(Ablation {
                text_contrastive: false,
                image_contrastive: true,
            }),
            "lm+t+i" => Ok(Ablation::full()),
            other => Err(TrainingError::BadConfig(format!(
                "unknown ablation {other:?}; expected lm, lm+t, lm+i or lm+t+i"
            ))),
        }
    }
}

impl fmt::Display for Ablation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.text_contrastive, self.image_contrastive) {
            (false, false) => write!(f, "lm"),
            (true, false) => write!(f, "lm+t"),
            (false, true) => write!(f, "lm+i"),
            (true, true) => write!(f, "lm+t+i"),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub temperature: f64,
    pub seed: u64,
    pub grad_clip: f64,
    pub ablation: Ablation,
    /// Extra epoch checkpoints every N epochs; 0 keeps only final + best.
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 3e-4,
            weight_decay: 0.05,
            batch_size: 8,
            epochs: 40,
            temperature: 0.07,
            seed: 0,
            grad_clip: 1.0,
            ablation: Ablation::full(),
            checkpoint_every: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainingError> {
        if self.lr < 0.0 {
            return Err(TrainingError::BadConfig(format!("lr {} < 0", self.lr)));
        }
        if self.temperature <= 0.0 {
            return Err(TrainingError::BadTemperature(self.temperature));
        }
        if self.batch_size == 0 {
            return Err(TrainingError::BadConfig("batch_size 0".into()));
        }
        Ok(())
    }

    /// Applies one `key = value` setting; unknown keys are rejected.
    pub fn apply_kv(&mut self, key: &str, value: &str) -> Result<(), TrainingError> {
        let bad = |what: &str| TrainingError::BadConfig(format!("{key}: bad {what} {value:?}"));
        match key {
            "lr" => self.lr = value.parse().map_err(|_| bad("float"))?,
            "weight_decay" => self.weight_decay = value.parse().map_err(|_| bad("float"))?,
            "batch_size" => self.batch_size = value.parse().map_err(|_| bad("integer"))?,
            "epochs" => self.epochs = value.parse().map_err(|_| bad("integer"))?,
            "temperature" => self.temperature = value.parse().map_err(|_| bad("float"))?,
            "seed" => self.seed = value.parse().map_err(|_| bad("integer"))?,
            "grad_clip" => self.grad_clip = value.parse().map_err(|_| bad("float"))?,
            "ablation" => self.ablation = Ablation::parse(value)?,
            "checkpoint_every" => {
                self.checkpoint_every = value.parse().map_err(|_| bad("integer"))?
            }
            other => {
                return Err(TrainingError::BadConfig(format!("unknown key {other:?}")));
            }
        }
        Ok(())
    }

    /// Parses a flat key-value file: `key = value` lines, `#` comments.
    pub fn from_kv_file<P: AsRef<Path>>(path: P) -> Result<TrainConfig, TrainingError> {
        let text = std::fs::read_to_string(&path).map_err(|source| TrainingError::Io {
            path: path.as_ref().display().to_string(),
            source,
        })?;
        let mut config = TrainConfig::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(TrainingError::BadConfig(format!(
                    "line {}: expected key = value, got {line:?}",
                    i + 1
                )));
            };
            config.apply_kv(key.trim(), value.trim())?;
        }
        config.validate()?;
        Ok(config)
    }

    /// The same flat format, for echoing the resolved config into a run
    /// directory.
    pub fn to_kv_string(&self) -> String {
        format!(
            "lr = {}\nweight_decay = {}\nbatch_size = {}\nepochs = {}\ntemperature = {}\nseed = {}\ngrad_clip = {}\nablation = {}\ncheckpoint_every = {}\n",
            self.lr,
            self.weight_decay,
            self.batch_size,
            self.epochs,
            self.temperature,
            self.seed,
            self.grad_clip,
            self.ablation,
            self.checkpoint_every,
        )
    }
}
