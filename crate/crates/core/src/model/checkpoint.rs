use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{ModelConfig, ModelError, ModelParams, Wav2Vec2};

/// Losses of one training epoch (1-based).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    /// Learning rate at the epoch's last step.
    pub lr: f64,
}

/// One training stage that produced (part of) a checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    /// `pretrain`, `finetune` or `refinetune`.
    pub stage: String,
    pub seed: u64,
    /// Fingerprint of the training data this stage saw.
    pub data_fingerprint: String,
    pub epochs: usize,
    pub best_epoch: Option<usize>,
    pub stopped_epoch: Option<usize>,
    pub budget_s: Option<f64>,
    pub configuration: Option<String>,
    pub losses: Vec<EpochStats>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub stages: Vec<StageRecord>,
}

/// Model weights plus the record of how they were trained.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelCheckpoint {
    pub config: ModelConfig,
    pub params: ModelParams,
    pub provenance: Provenance,
}

impl ModelCheckpoint {
    /// Snapshot of `model`; weights are rounded to `f32`, the stored precision.
    pub fn capture(model: &Wav2Vec2, provenance: Provenance) -> Self {
        let mut params = model.params.clone();
        params.round_to_f32();
        Self { config: model.config.clone(), params, provenance }
    }

    pub fn into_model(self) -> Result<Wav2Vec2, ModelError> {
        Wav2Vec2::from_parts(self.config, self.params)
    }

    pub fn has_head(&self) -> bool {
        self.params.head.is_some()
    }
}
