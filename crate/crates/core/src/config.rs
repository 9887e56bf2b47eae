//! Run configuration and its flat `key=value` file format.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
pub use slideqc_nn::OptimizerKind;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    DiceCoefLoss,
    BinaryCrossEntropy,
    /// Sum of the dice loss and binary cross-entropy.
    DiceBce,
    CategoricalCrossEntropy,
    KlDivergence,
}

impl LossKind {
    pub const ALL: [LossKind; 5] = [
        LossKind::DiceCoefLoss,
        LossKind::BinaryCrossEntropy,
        LossKind::DiceBce,
        LossKind::CategoricalCrossEntropy,
        LossKind::KlDivergence,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LossKind::DiceCoefLoss => "dice_coef_loss",
            LossKind::BinaryCrossEntropy => "binary_cross_entropy",
            LossKind::DiceBce => "dice_bce",
            LossKind::CategoricalCrossEntropy => "categorical_cross_entropy",
            LossKind::KlDivergence => "kl_divergence",
        }
    }

    pub fn is_segmentation(self) -> bool {
        matches!(self, LossKind::DiceCoefLoss | LossKind::BinaryCrossEntropy | LossKind::DiceBce)
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LossKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown loss `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    DoubleUnet,
    ResunetPp,
    UnetBaseline,
}

impl Architecture {
    pub const ALL: [Architecture; 3] = [Architecture::DoubleUnet, Architecture::ResunetPp, Architecture::UnetBaseline];

    pub fn name(self) -> &'static str {
        match self {
            Architecture::DoubleUnet => "double_unet",
            Architecture::ResunetPp => "resunet_pp",
            Architecture::UnetBaseline => "unet_baseline",
        }
    }

    /// Side lengths must be a multiple of this.
    pub fn size_multiple(self) -> usize {
        match self {
            Architecture::DoubleUnet => 32,
            Architecture::ResunetPp | Architecture::UnetBaseline => 16,
        }
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Architecture {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Self::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| format!("unknown model `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlateauConfig {
    pub factor: f64,
    pub patience: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub seed: u64,
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    pub loss: LossKind,
    pub plateau: PlateauConfig,
    pub early_stop_patience: usize,
    pub model: Architecture,
    /// Channel-width multiplier; 1.0 is full width.
    pub width_scale: f64,
}

impl Default for RunConfig {
    /// The segmentation protocol: batch 8, RMSprop at 1e-4, dice loss,
    /// plateau (0.1, 4), early stop after 10 stagnant epochs.
    fn default() -> Self {
        Self {
            seed: 0,
            batch_size: 8,
            epochs: 100,
            learning_rate: 1e-4,
            optimizer: OptimizerKind::Rmsprop,
            loss: LossKind::DiceCoefLoss,
            plateau: PlateauConfig { factor: 0.1, patience: 4 },
            early_stop_patience: 10,
            model: Architecture::ResunetPp,
            width_scale: 1.0,
        }
    }
}

const KEYS: [&str; 11] = [
    "seed",
    "batch_size",
    "epochs",
    "learning_rate",
    "optimizer",
    "loss",
    "plateau.factor",
    "plateau.patience",
    "early_stop_patience",
    "model",
    "width_scale",
];

/// Returns one description per violated invariant; empty means valid.
pub fn validate_config(config: &RunConfig) -> Vec<String> {
    let mut out = Vec::new();
    if config.batch_size < 1 {
        out.push("batch_size must be >= 1 (got 0)".to_string());
    }
    if config.epochs < 1 {
        out.push("epochs must be >= 1 (got 0)".to_string());
    }
    if !(config.learning_rate > 0.0 && config.learning_rate.is_finite()) {
        out.push(format!("learning_rate must be > 0 (got {})", config.learning_rate));
    }
    if !(config.plateau.factor > 0.0 && config.plateau.factor < 1.0) {
        out.push(format!("plateau.factor must lie in (0, 1) (got {})", config.plateau.factor));
    }
    if config.plateau.patience < 1 {
        out.push("plateau.patience must be >= 1 (got 0)".to_string());
    }
    if config.early_stop_patience < 1 {
        out.push("early_stop_patience must be >= 1 (got 0)".to_string());
    }
    if !(config.width_scale > 0.0 && config.width_scale <= 1.0) {
        out.push(format!("width_scale must lie in (0, 1] (got {})", config.width_scale));
    }
    out
}

impl RunConfig {
    pub fn to_kv_string(&self) -> String {
        let values = [
            self.seed.to_string(),
            self.batch_size.to_string(),
            self.epochs.to_string(),
            self.learning_rate.to_string(),
            self.optimizer.to_string(),
            self.loss.to_string(),
            self.plateau.factor.to_string(),
            self.plateau.patience.to_string(),
            self.early_stop_patience.to_string(),
            self.model.to_string(),
            self.width_scale.to_string(),
        ];
        KEYS.iter().zip(values).map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    /// Parses `key=value` lines. Blank lines and `#` comments are ignored;
    /// keys not present keep their default values.
    pub fn parse_kv(text: &str, source_name: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |message: String| Error::Parse { source_name: source_name.to_string(), line: i + 1, message };
            let (key, value) = line.split_once('=').ok_or_else(|| err(format!("expected key=value, got `{line}`")))?;
            let (key, value) = (key.trim(), value.trim());
            fn num<T: FromStr>(v: &str) -> std::result::Result<T, String>
            where
                T::Err: fmt::Display,
            {
                v.parse::<T>().map_err(|e| format!("bad value `{v}`: {e}"))
            }
            let res: std::result::Result<(), String> = match key {
                "seed" => num(value).map(|v| cfg.seed = v),
                "batch_size" => num(value).map(|v| cfg.batch_size = v),
                "epochs" => num(value).map(|v| cfg.epochs = v),
                "learning_rate" => num(value).map(|v| cfg.learning_rate = v),
                "optimizer" => value.parse().map(|v| cfg.optimizer = v),
                "loss" => value.parse().map(|v| cfg.loss = v),
                "plateau.factor" => num(value).map(|v| cfg.plateau.factor = v),
                "plateau.patience" => num(value).map(|v| cfg.plateau.patience = v),
                "early_stop_patience" => num(value).map(|v| cfg.early_stop_patience = v),
                "model" => value.parse().map(|v| cfg.model = v),
                "width_scale" => num(value).map(|v| cfg.width_scale = v),
                other => Err(format!("unknown key `{other}`")),
            };
            res.map_err(err)?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_kv(&text, &path.display().to_string())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_kv_string()).map_err(|e| Error::io(path, e))
    }
}
