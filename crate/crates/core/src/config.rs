//! Strict-schema JSON experiment configuration. Unknown keys are
//! rejected at every nesting level so a misspelled knob fails fast with
//! its name. Top-level epochs / batch_size / learning_rate are shared
//! defaults; each stage section may override them.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::PixelNorm;
use crate::error::{Error, Result};
use crate::hybrid::{HybridConfig, Stage2Overlay, Stage2Scope};
use crate::network::InterLayerNorm;
use crate::train_bp::{Monitor, TrainConfig};
use crate::train_ffa::{FfaConfig, FfaSchedule, GoodnessLayers};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunMode {
    Ffa,
    Bp,
    Hybrid,
}

fn default_epochs() -> usize {
    250
}
fn default_batch() -> usize {
    64
}
fn default_lr() -> f64 {
    1e-3
}
fn default_eval_every() -> usize {
    1
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mode: RunMode,
    /// Directory holding `images/` and `labels.csv` (as written by
    /// `make-fixture` or laid out for a real dataset).
    pub dataset_root: PathBuf,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub pixel_norm: PixelNorm,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_eval_every")]
    pub eval_every: usize,
    #[serde(default)]
    pub early_stop_test_error: Option<f64>,
    #[serde(default)]
    pub ffa: FfaSection,
    #[serde(default)]
    pub bp: BpSection,
    #[serde(default)]
    pub hybrid: HybridSection,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FfaSection {
    pub theta: Option<f64>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub learning_rate: Option<f64>,
    pub inter_layer_normalization: InterLayerNorm,
    pub goodness_layers_for_prediction: GoodnessLayers,
    pub schedule: FfaSchedule,
    /// Cadence of goodness-vote train error; 0 = final epoch only.
    pub train_error_every: usize,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BpSection {
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub learning_rate: Option<f64>,
    pub monitor: Monitor,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HybridSection {
    pub mode: Stage2Scope,
    pub overlay_at_stage2: Stage2Overlay,
}

impl ExperimentConfig {
    /// Loads the JSON file, applies `--set key=value` dotted-path
    /// overrides, then parses under the strict schema. Malformed JSON
    /// reports line/column; unknown keys report the key name.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut value: serde_json::Value = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        for item in overrides {
            apply_override(&mut value, item)?;
        }
        let cfg: ExperimentConfig = serde_json::from_value(value)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        match self.mode {
            RunMode::Ffa => self.ffa_config().validate(),
            RunMode::Bp => self.bp_config().validate(),
            RunMode::Hybrid => self.hybrid_config().validate(),
        }
    }

    pub fn ffa_config(&self) -> FfaConfig {
        let mut cfg = FfaConfig::new(
            self.ffa.epochs.unwrap_or(self.epochs),
            self.ffa.batch_size.unwrap_or(self.batch_size),
            self.seed,
        );
        cfg.learning_rate = self.ffa.learning_rate.unwrap_or(self.learning_rate);
        cfg.theta = self.ffa.theta;
        cfg.inter_layer_normalization = self.ffa.inter_layer_normalization;
        cfg.goodness_layers = self.ffa.goodness_layers_for_prediction;
        cfg.schedule = self.ffa.schedule;
        cfg.train_error_every = self.ffa.train_error_every;
        cfg.eval_every = self.eval_every;
        cfg.early_stop_test_error = self.early_stop_test_error;
        cfg
    }

    pub fn bp_config(&self) -> TrainConfig {
        let mut cfg = TrainConfig::new(
            self.bp.epochs.unwrap_or(self.epochs),
            self.bp.batch_size.unwrap_or(self.batch_size),
            self.seed,
        );
        cfg.learning_rate = self.bp.learning_rate.unwrap_or(self.learning_rate);
        cfg.monitor = self.bp.monitor;
        cfg.eval_every = self.eval_every;
        cfg.early_stop_test_error = self.early_stop_test_error;
        cfg
    }

    pub fn hybrid_config(&self) -> HybridConfig {
        let mut cfg = HybridConfig::new(self.ffa_config(), self.bp_config());
        cfg.scope = self.hybrid.mode;
        cfg.overlay = self.hybrid.overlay_at_stage2;
        cfg
    }
}

/// `key.path=value` override on the raw JSON document, before schema
/// checking. The value parses as JSON when possible, else as a string,
/// so `--set bp.monitor=test_error` and `--set epochs=10` both work.
fn apply_override(doc: &mut serde_json::Value, item: &str) -> Result<()> {
    let (path, raw) = item
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override '{item}' is not key=value")))?;
    if path.is_empty() {
        return Err(Error::Config(format!("override '{item}' has an empty key")));
    }
    let value: serde_json::Value = serde_json::from_str(raw)
        .unwrap_or_else(|_| serde_json::Value::String(raw.to_string()));
    let mut slot = doc;
    let keys: Vec<&str> = path.split('.').collect();
    for (i, key) in keys.iter().enumerate() {
        let obj = slot.as_object_mut().ok_or_else(|| {
            Error::Config(format!("override '{path}': '{key}' is not inside an object"))
        })?;
        let last = i == keys.len() - 1;
        slot = obj.entry(key.to_string()).or_insert_with(|| {
            if last {
                serde_json::Value::Null
            } else {
                serde_json::Value::Object(Default::default())
            }
        });
    }
    *slot = value;
    Ok(())
}
