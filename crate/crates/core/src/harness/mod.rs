//! Configuration, training, evaluation, cross-validation and reports.

mod config;
mod eval;
pub mod synth;
mod train;

use std::path::Path;

use serde_json::{json, Value};
use thiserror::Error;

use crate::corpus::{CorpusError, Vocabulary};
use crate::decoder::{DecoderError, Model, ModelConfig};
use crate::nnmath::{decode_checkpoint, encode_checkpoint, TensorError};
use crate::uet::Decimal;

pub use config::TrainConfig;
pub use eval::{
    bucket_report, classify, evaluate, evaluate_dataset, evaluate_one, size_bucket, Bucket, BucketReport, EvalOptions,
    EvalRecord, EvalReport, ProblemType, SIZE_BUCKETS,
};
pub use train::{crossvalidate, train, Control, CvReport, EpochReport, FoldReport, TrainOutcome};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config: {0}")]
    Config(String),
    #[error("corpus is empty or has no usable instances")]
    EmptyCorpus,
    #[error("non-finite loss at epoch {epoch} on instance {id}")]
    NonFiniteLoss { epoch: usize, id: String },
    #[error("checkpoint does not match the dataset: {0}")]
    VocabularyMismatch(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Decoder(#[from] DecoderError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Parameters plus everything needed to run them on new problems.
#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub model: Model<f32>,
    pub vocab: Vocabulary,
    pub constants: Vec<Decimal>,
    pub config: TrainConfig,
    /// Epochs completed when these parameters were taken.
    pub epoch: usize,
}

impl TrainedModel {
    fn header(&self) -> Value {
        // File locations are left out so identical runs give identical bytes.
        let config = TrainConfig {
            train_path: None,
            eval_path: None,
            checkpoint: None,
            metric_log: None,
            ..self.config.clone()
        };
        json!({
            "format": "sau-model",
            "model": self.model.config,
            "train_config": config,
            "seed": self.config.seed,
            "epoch": self.epoch,
            "vocab": self.vocab,
            "constants": self.constants.iter().map(|c| c.canonical()).collect::<Vec<_>>(),
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        encode_checkpoint(&self.header(), &self.model.store)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, HarnessError> {
        let (header, store) = decode_checkpoint::<f32>(bytes)?;
        if header.get("format").and_then(Value::as_str) != Some("sau-model") {
            return Err(HarnessError::Checkpoint("not a model checkpoint".into()));
        }
        let field = |name: &str| {
            header
                .get(name)
                .cloned()
                .ok_or_else(|| HarnessError::Checkpoint(format!("header lacks '{name}'")))
        };
        let parse = |e: serde_json::Error| HarnessError::Checkpoint(e.to_string());
        let model_config: ModelConfig = serde_json::from_value(field("model")?).map_err(parse)?;
        let config: TrainConfig = serde_json::from_value(field("train_config")?).map_err(parse)?;
        let vocab: Vocabulary = serde_json::from_value(field("vocab")?).map_err(parse)?;
        let constants: Vec<String> = serde_json::from_value(field("constants")?).map_err(parse)?;
        let constants = constants
            .iter()
            .map(|c| Decimal::parse(c).map_err(|e| HarnessError::Checkpoint(e.to_string())))
            .collect::<Result<Vec<_>, _>>()?;
        let epoch = field("epoch")?.as_u64().unwrap_or(0) as usize;
        if model_config.vocab_size != vocab.len() || model_config.constants != constants.len() {
            return Err(HarnessError::Checkpoint(
                "header sizes disagree with the stored vocabulary".into(),
            ));
        }
        Ok(TrainedModel {
            model: Model::from_store(model_config, store)?,
            vocab,
            constants,
            config,
            epoch,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), HarnessError> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}
