//! Pretraining, fine-tuning and budgeted re-finetuning loops, early stopping
//! and the four named training configurations.

mod configuration;
mod early_stop;

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

pub use configuration::{Domain, TrainingConfiguration};
pub use early_stop::{EarlyStopping, StopDecision};

use crate::audio::{LabeledSegment, Waveform};
use crate::label::{EventClass, NUM_CLASSES};
use crate::model::{
    EpochStats, FinetuneInput, ModelCheckpoint, ModelConfig, ModelError, ModelParams, PretrainItem, Provenance,
    QuantizerMode, StageRecord, Wav2Vec2,
};
use crate::nn::Mat;
use crate::optim::{AdamW, AdamWConfig, OneCycle};
use crate::rng;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TrainError {
    #[error("pretraining corpus has no usable audio")]
    EmptyCorpus,
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("validation set is empty")]
    EmptyValidationSet,
    #[error("training set has no {0} segment")]
    MissingClass(EventClass),
    #[error("source checkpoint has no classification head")]
    MissingHead,
    #[error("invalid training configuration: {0}")]
    InvalidConfig(&'static str),
    #[error("unknown training configuration {0:?}")]
    UnknownConfiguration(String),
    #[error("configuration needs the {0} corpus")]
    MissingCorpus(&'static str),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Supervised fine-tuning settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub max_epochs: usize,
    pub early_stop_patience: usize,
    pub lr_max: f64,
    pub warmup_frac: f64,
    pub batch_size: usize,
    pub weight_decay: f64,
    pub freeze_encoder: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            max_epochs: 40,
            early_stop_patience: 5,
            lr_max: 3e-5,
            warmup_frac: 0.1,
            batch_size: 8,
            weight_decay: 0.01,
            freeze_encoder: true,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.max_epochs == 0 || self.batch_size == 0 {
            return Err(TrainError::InvalidConfig("max_epochs and batch_size must be positive"));
        }
        if self.early_stop_patience == 0 || self.early_stop_patience >= self.max_epochs {
            return Err(TrainError::InvalidConfig("early_stop_patience must lie in 1..max_epochs"));
        }
        if !(self.lr_max > 0.0) || !(0.0..1.0).contains(&self.warmup_frac) || !(self.weight_decay >= 0.0) {
            return Err(TrainError::InvalidConfig("lr_max, warmup_frac or weight_decay out of range"));
        }
        Ok(())
    }
}

/// Self-supervised pretraining settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PretrainConfig {
    pub epochs: usize,
    pub lr_max: f64,
    pub warmup_frac: f64,
    pub batch_size: usize,
    pub weight_decay: f64,
    /// Recordings are cut into windows of at most this many seconds.
    pub window_s: f64,
    pub gumbel_tau_start: f64,
    pub gumbel_tau_decay: f64,
    pub gumbel_tau_min: f64,
    pub seed: u64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            lr_max: 1e-3,
            warmup_frac: 0.1,
            batch_size: 8,
            weight_decay: 0.01,
            window_s: 5.0,
            gumbel_tau_start: 2.0,
            gumbel_tau_decay: 0.9995,
            gumbel_tau_min: 0.5,
            seed: 0,
        }
    }
}

impl PretrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.epochs == 0 || self.batch_size == 0 || !(self.window_s > 0.0) || !(self.lr_max > 0.0) {
            return Err(TrainError::InvalidConfig("epochs, batch_size, window_s and lr_max must be positive"));
        }
        if !(self.gumbel_tau_min > 0.0 && self.gumbel_tau_start >= self.gumbel_tau_min) {
            return Err(TrainError::InvalidConfig("gumbel temperatures must be positive with start >= min"));
        }
        if !(self.gumbel_tau_decay > 0.0 && self.gumbel_tau_decay <= 1.0) || !(0.0..1.0).contains(&self.warmup_frac) {
            return Err(TrainError::InvalidConfig("gumbel_tau_decay or warmup_frac out of range"));
        }
        Ok(())
    }

    /// Gumbel-softmax temperature at 0-based optimizer step `step`.
    pub fn tau(&self, step: usize) -> f64 {
        (self.gumbel_tau_start * crate::math::powf(self.gumbel_tau_decay, step as f64)).max(self.gumbel_tau_min)
    }
}

/// History of one training stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub stage: String,
    pub configuration: Option<String>,
    pub epochs: Vec<EpochStats>,
    /// 1-based epoch whose parameters were kept.
    pub best_epoch: usize,
    /// Last epoch that ran.
    pub stopped_epoch: usize,
    pub max_epochs: usize,
}

impl RunRecord {
    pub fn train_losses(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.train_loss).collect()
    }
}

/// A checkpoint and the history that produced it.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub checkpoint: ModelCheckpoint,
    pub record: RunRecord,
}

/// Stable identity of a labeled segment.
pub fn segment_fingerprint(s: &LabeledSegment) -> u64 {
    let key = format!("{}\u{1f}{}\u{1f}{:016x}\u{1f}{}", s.subject_id, s.recording_id, s.start_s.to_bits(), s.label);
    rng::fnv1a(key.as_bytes())
}

/// Order-independent fingerprint of a segment set.
pub fn data_fingerprint(segments: &[LabeledSegment]) -> String {
    let set: BTreeSet<u64> = segments.iter().map(segment_fingerprint).collect();
    let bytes: Vec<u8> = set.iter().flat_map(|f| f.to_le_bytes()).collect();
    format!("{:016x}", rng::fnv1a(&bytes))
}

fn wave_fingerprint(waves: &[Waveform]) -> String {
    let mut bytes = Vec::new();
    for w in waves {
        bytes.extend_from_slice(&(w.samples.len() as u64).to_le_bytes());
        for s in &w.samples {
            bytes.extend_from_slice(&s.to_bits().to_le_bytes());
        }
    }
    format!("{:016x}", rng::fnv1a(&bytes))
}

fn batches(n: usize, batch: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::seeded(seed));
    order.chunks(batch).map(|c| c.to_vec()).collect()
}

fn steps_per_epoch(n: usize, batch: usize) -> usize {
    n.div_ceil(batch)
}

/// Contrastive pretraining of a freshly initialized model on unlabeled audio.
///
/// Recordings are cut into windows of at most `window_s` seconds; windows too
/// short to hold one mask span plus a distractor are skipped.
pub fn pretrain(corpus: &[Waveform], model_config: &ModelConfig, cfg: &PretrainConfig) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    model_config.validate()?;
    let window = (cfg.window_s * crate::MODEL_SAMPLE_RATE as f64) as usize;
    let min_frames = model_config.mask_span + 1;
    let chunks: Vec<Waveform> = corpus
        .iter()
        .flat_map(|w| w.chunks(window))
        .filter(|c| model_config.frame_count(c.len()).is_some_and(|t| t >= min_frames))
        .collect();
    if chunks.is_empty() {
        return Err(TrainError::EmptyCorpus);
    }
    let mut model = Wav2Vec2::new(model_config.clone(), rng::derive_seed(cfg.seed, 10))?;
    let mut opt = AdamW::new(&model.params, AdamWConfig { weight_decay: cfg.weight_decay, ..AdamWConfig::default() });
    let per_epoch = steps_per_epoch(chunks.len(), cfg.batch_size);
    let schedule = OneCycle::new(cfg.lr_max, per_epoch * cfg.epochs, cfg.warmup_frac);
    let mut grads = model.params.zeros_like();
    let mut step = 0;
    let mut epochs = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        let mut sum = 0.0;
        let mut lr = 0.0;
        let order = batches(chunks.len(), cfg.batch_size, rng::derive_seed(cfg.seed, 1000 + epoch as u64));
        for idx in &order {
            let items: Vec<PretrainItem> = idx
                .iter()
                .map(|&i| PretrainItem {
                    wave: &chunks[i].samples,
                    seed: rng::derive_seed(cfg.seed, ((epoch as u64) << 32) | i as u64),
                })
                .collect();
            let mode = QuantizerMode { tau: cfg.tau(step), hard: true };
            grads.tensors_mut().into_iter().for_each(|(_, m)| m.fill(0.0));
            let loss = model.pretrain_objective(&items, mode, Some(&mut grads))?;
            lr = schedule.lr(step);
            opt.step(&mut model.params, &grads, lr, |_| true);
            sum += loss.total;
            step += 1;
        }
        epochs.push(EpochStats { epoch, train_loss: sum / order.len() as f64, val_loss: None, lr });
    }
    let record = RunRecord {
        stage: "pretrain".into(),
        configuration: None,
        best_epoch: cfg.epochs,
        stopped_epoch: cfg.epochs,
        max_epochs: cfg.epochs,
        epochs: epochs.clone(),
    };
    let stage = StageRecord {
        stage: "pretrain".into(),
        seed: cfg.seed,
        data_fingerprint: wave_fingerprint(corpus),
        epochs: cfg.epochs,
        best_epoch: None,
        stopped_epoch: None,
        budget_s: None,
        configuration: None,
        losses: epochs,
    };
    let checkpoint = ModelCheckpoint::capture(&model, Provenance { stages: alloc::vec![stage] });
    Ok(TrainOutcome { checkpoint, record })
}

/// Observes the fingerprints of every segment that enters a gradient batch.
pub trait BatchObserver {
    fn observe(&mut self, fingerprints: &[u64]);
}

impl BatchObserver for () {
    fn observe(&mut self, _: &[u64]) {}
}

impl<F: FnMut(&[u64])> BatchObserver for F {
    fn observe(&mut self, fingerprints: &[u64]) {
        self(fingerprints)
    }
}

fn trainable(freeze_encoder: bool) -> impl Fn(&str) -> bool {
    move |name: &str| {
        !(name.starts_with("quantizer.") || name == "mask_emb" || (freeze_encoder && name.starts_with("encoder.")))
    }
}

enum Inputs {
    Features(Vec<Mat>),
    Waves,
}

fn prepare_inputs(model: &Wav2Vec2, segs: &[LabeledSegment], freeze: bool) -> Result<Inputs, ModelError> {
    if !freeze {
        return Ok(Inputs::Waves);
    }
    Ok(Inputs::Features(segs.iter().map(|s| model.encoder_output(&s.wave.samples)).collect::<Result<_, _>>()?))
}

fn input<'a>(inputs: &'a Inputs, segs: &'a [LabeledSegment], i: usize) -> FinetuneInput<'a> {
    match inputs {
        Inputs::Features(f) => FinetuneInput::Features(&f[i]),
        Inputs::Waves => FinetuneInput::Wave(&segs[i].wave.samples),
    }
}

fn mean_loss(model: &Wav2Vec2, inputs: &Inputs, segs: &[LabeledSegment]) -> Result<f64, ModelError> {
    let mut sum = 0.0;
    for (i, s) in segs.iter().enumerate() {
        sum += model.finetune_objective(&[(input(inputs, segs, i), s.label)], true, None)?;
    }
    Ok(sum / segs.len() as f64)
}

fn supervised(
    base: &ModelCheckpoint,
    stage: &str,
    train: &[LabeledSegment],
    val: &[LabeledSegment],
    cfg: &TrainConfig,
    budget_s: Option<f64>,
    observer: &mut dyn BatchObserver,
) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(TrainError::EmptyTrainingSet);
    }
    if val.is_empty() {
        return Err(TrainError::EmptyValidationSet);
    }
    if let Some(c) = EventClass::ALL.iter().find(|c| !train.iter().any(|s| s.label == **c)) {
        return Err(TrainError::MissingClass(*c));
    }
    let mut model = base.clone().into_model()?;
    model.ensure_head();
    let train_in = prepare_inputs(&model, train, cfg.freeze_encoder)?;
    let val_in = prepare_inputs(&model, val, cfg.freeze_encoder)?;
    let fingerprints: Vec<u64> = train.iter().map(segment_fingerprint).collect();
    let mut opt = AdamW::new(&model.params, AdamWConfig { weight_decay: cfg.weight_decay, ..AdamWConfig::default() });
    let per_epoch = steps_per_epoch(train.len(), cfg.batch_size);
    let schedule = OneCycle::new(cfg.lr_max, per_epoch * cfg.max_epochs, cfg.warmup_frac);
    let is_trainable = trainable(cfg.freeze_encoder);
    let mut stopper = EarlyStopping::new(cfg.early_stop_patience);
    let mut best = model.params.clone();
    let mut grads = model.params.zeros_like();
    let mut epochs = Vec::new();
    let mut step = 0;
    for epoch in 1..=cfg.max_epochs {
        let order = batches(train.len(), cfg.batch_size, rng::derive_seed(cfg.seed, epoch as u64));
        let mut sum = 0.0;
        let mut lr = 0.0;
        for idx in &order {
            let seen: Vec<u64> = idx.iter().map(|&i| fingerprints[i]).collect();
            observer.observe(&seen);
            let batch: Vec<(FinetuneInput, EventClass)> =
                idx.iter().map(|&i| (input(&train_in, train, i), train[i].label)).collect();
            grads.tensors_mut().into_iter().for_each(|(_, m)| m.fill(0.0));
            sum += model.finetune_objective(&batch, cfg.freeze_encoder, Some(&mut grads))?;
            lr = schedule.lr(step);
            opt.step(&mut model.params, &grads, lr, &is_trainable);
            step += 1;
        }
        let val_loss = mean_loss(&model, &val_in, val)?;
        epochs.push(EpochStats { epoch, train_loss: sum / order.len() as f64, val_loss: Some(val_loss), lr });
        match stopper.observe(val_loss) {
            StopDecision::Improved => best.clone_from(&model.params),
            StopDecision::Continue => {}
            StopDecision::Stop => break,
        }
    }
    model.params = best;
    let record = RunRecord {
        stage: stage.into(),
        configuration: None,
        best_epoch: stopper.best_epoch(),
        stopped_epoch: epochs.len(),
        max_epochs: cfg.max_epochs,
        epochs: epochs.clone(),
    };
    let mut provenance = base.provenance.clone();
    provenance.stages.push(StageRecord {
        stage: stage.into(),
        seed: cfg.seed,
        data_fingerprint: data_fingerprint(train),
        epochs: cfg.max_epochs,
        best_epoch: Some(record.best_epoch),
        stopped_epoch: Some(record.stopped_epoch),
        budget_s,
        configuration: None,
        losses: epochs,
    });
    Ok(TrainOutcome { checkpoint: ModelCheckpoint::capture(&model, provenance), record })
}

/// Supervised fine-tuning with cross-entropy and early stopping on validation
/// loss; the returned parameters are those of the best validation epoch.
pub fn finetune(
    base: &ModelCheckpoint,
    train: &[LabeledSegment],
    val: &[LabeledSegment],
    cfg: &TrainConfig,
) -> Result<TrainOutcome, TrainError> {
    supervised(base, "finetune", train, val, cfg, None, &mut ())
}

/// [`finetune`] reporting every gradient batch to `observer`.
pub fn finetune_observed(
    base: &ModelCheckpoint,
    train: &[LabeledSegment],
    val: &[LabeledSegment],
    cfg: &TrainConfig,
    observer: &mut dyn BatchObserver,
) -> Result<TrainOutcome, TrainError> {
    supervised(base, "finetune", train, val, cfg, None, observer)
}

/// Continues fine-tuning an already fine-tuned model on a budgeted subset.
pub fn refinetune(
    source: &ModelCheckpoint,
    budget_segments: &[LabeledSegment],
    val: &[LabeledSegment],
    cfg: &TrainConfig,
    budget_s: f64,
) -> Result<TrainOutcome, TrainError> {
    if !source.has_head() {
        return Err(TrainError::MissingHead);
    }
    supervised(source, "refinetune", budget_segments, val, cfg, Some(budget_s), &mut ())
}

/// Class counts of a segment set.
pub fn class_histogram(segments: &[LabeledSegment]) -> [usize; NUM_CLASSES] {
    let mut h = [0; NUM_CLASSES];
    segments.iter().for_each(|s| h[s.label.index()] += 1);
    h
}

/// Zeroed gradient buffer shaped like `params`.
pub fn zero_grads(params: &ModelParams) -> ModelParams {
    params.zeros_like()
}
