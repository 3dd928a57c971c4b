use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::corpus::default_constants;
use crate::uet::Decimal;

/// Training and evaluation settings. Defaults:
/// embedding 128, hidden 512, batch 32, Adam at 1e-3 halved every 20
/// epochs, dropout 0.5, weight decay 1e-5, SSAR weight 0.01, beam 5.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub embed: usize,
    pub hidden: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Epochs between learning-rate halvings.
    pub lr_halving_epochs: usize,
    pub dropout: f64,
    pub weight_decay: f64,
    /// SSAR weight; 0 disables the regularizer.
    pub lambda: f64,
    pub beam: usize,
    pub epochs: usize,
    pub seed: u64,
    pub constants: Vec<String>,
    /// Words seen fewer times become `<unk>`.
    pub min_count: usize,
    /// Share of the training data held out for checkpoint selection.
    pub val_fraction: f64,
    /// Beam width used on the validation split.
    pub selection_beam: usize,
    /// Validate every this many epochs.
    pub eval_every: usize,
    pub max_nodes: usize,
    pub separate_ssar_attention: bool,
    pub answer_tolerance: f64,
    pub train_path: Option<PathBuf>,
    pub eval_path: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub metric_log: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            embed: 128,
            hidden: 512,
            batch_size: 32,
            lr: 1e-3,
            lr_halving_epochs: 20,
            dropout: 0.5,
            weight_decay: 1e-5,
            lambda: 0.01,
            beam: 5,
            epochs: 80,
            seed: 1,
            constants: default_constants().iter().map(|d| d.canonical()).collect(),
            min_count: 5,
            val_fraction: 0.1,
            selection_beam: 1,
            eval_every: 1,
            max_nodes: crate::decoder::DEFAULT_MAX_NODES,
            separate_ssar_attention: false,
            answer_tolerance: crate::eqsolve::ANSWER_TOLERANCE,
            train_path: None,
            eval_path: None,
            checkpoint: None,
            metric_log: None,
        }
    }
}

impl TrainConfig {
    /// The smaller hidden size used for the larger corpora.
    pub fn compact() -> Self {
        TrainConfig {
            hidden: 384,
            ..Self::default()
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let c: TrainConfig = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Applies `key=value`; the value is read as TOML, falling back to a string.
    pub fn set(&mut self, assignment: &str) -> Result<(), HarnessError> {
        let (key, raw) = assignment
            .split_once('=')
            .ok_or_else(|| HarnessError::Config(format!("expected key=value, got '{assignment}'")))?;
        let key = key.trim();
        let raw = raw.trim();
        let value: toml::Value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| toml::Value::String(raw.to_string()));
        let mut table = toml::Table::try_from(&*self).map_err(|e| HarnessError::Config(e.to_string()))?;
        table.insert(key.to_string(), value);
        let next: TrainConfig = table
            .try_into()
            .map_err(|e| HarnessError::Config(format!("{key}: {e}")))?;
        next.validate()?;
        *self = next;
        Ok(())
    }

    pub fn constants(&self) -> Result<Vec<Decimal>, HarnessError> {
        self.constants
            .iter()
            .map(|c| Decimal::parse(c).map_err(|e| HarnessError::Config(format!("constant '{c}': {e}"))))
            .collect()
    }

    /// Learning rate in effect during `epoch` (0-based).
    pub fn learning_rate(&self, epoch: usize) -> f64 {
        let halvings = epoch / self.lr_halving_epochs.max(1);
        self.lr * 0.5f64.powi(halvings.min(1000) as i32)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let positive = [
            ("embed", self.embed),
            ("hidden", self.hidden),
            ("batch_size", self.batch_size),
            ("lr_halving_epochs", self.lr_halving_epochs),
            ("beam", self.beam),
            ("selection_beam", self.selection_beam),
            ("eval_every", self.eval_every),
            ("max_nodes", self.max_nodes),
            ("min_count", self.min_count),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(HarnessError::Config(format!("{name} must be positive")));
            }
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(HarnessError::Config("lr must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(HarnessError::Config("dropout must lie in [0, 1)".into()));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(HarnessError::Config("lambda must be non-negative".into()));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(HarnessError::Config("weight_decay must be non-negative".into()));
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return Err(HarnessError::Config("val_fraction must lie in [0, 1)".into()));
        }
        if !(self.answer_tolerance > 0.0) {
            return Err(HarnessError::Config("answer_tolerance must be positive".into()));
        }
        self.constants()?;
        Ok(())
    }
}
