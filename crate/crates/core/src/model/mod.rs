//! Compact wav2vec-style model: conv feature encoder, transformer context
//! network, Gumbel product quantizer and a pooled classification head.
//!
//! Sequences are time-major (`frames x channels`). Every forward pass has a
//! hand-written backward pass; gradients accumulate into a [`ModelParams`]
//! of the same shape.

mod checkpoint;
mod config;
pub mod context;
pub mod encoder;
pub mod loss;
pub mod masking;
mod params;
pub mod quantizer;

use alloc::string::String;
use alloc::vec::Vec;

pub use checkpoint::{EpochStats, ModelCheckpoint, Provenance, StageRecord};
pub use config::ModelConfig;
pub use params::{ModelParams, QuantizerParams};
pub use quantizer::QuantizerMode;

use crate::audio::Waveform;
use crate::label::{EventClass, NUM_CLASSES};
use crate::math;
use crate::metrics::Classifier;
use crate::nn::{linear_backward, linear_forward, Mat};
use crate::rng;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error("invalid model configuration: {0}")]
    InvalidConfig(&'static str),
    #[error("input of {len} samples is shorter than the {required}-sample receptive field")]
    InputTooShort { len: usize, required: usize },
    #[error("sequence of {frames} frames is too short, need at least {required}")]
    SequenceTooShort { frames: usize, required: usize },
    #[error("no frames were masked")]
    NoMaskedFrames,
    #[error("no distractor frames available")]
    NoDistractors,
    #[error("model has no classification head")]
    MissingHead,
    #[error("parameter {name} has shape {found:?}, expected {expected:?}")]
    ShapeMismatch { name: String, expected: (usize, usize), found: (usize, usize) },
    #[error("missing parameter {0}")]
    MissingParameter(String),
    #[error("non-finite loss or activation")]
    NonFinite,
}

/// One pretraining example. All randomness (mask, Gumbel noise, distractors)
/// derives from `seed`, so a pass is reproducible.
#[derive(Debug, Clone, Copy)]
pub struct PretrainItem<'a> {
    pub wave: &'a [f64],
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PretrainLoss {
    /// `contrastive + diversity_weight * diversity`.
    pub total: f64,
    /// Mean over every masked frame in the batch.
    pub contrastive: f64,
    pub diversity: f64,
    /// Mean per-group perplexity over the batch.
    pub perplexity: f64,
    pub masked_frames: usize,
    pub frames: usize,
}

/// Fine-tuning input: raw audio, or precomputed encoder output from
/// [`Wav2Vec2::encoder_output`] when the encoder is frozen.
#[derive(Debug, Clone, Copy)]
pub enum FinetuneInput<'a> {
    Wave(&'a [f64]),
    Features(&'a Mat),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Wav2Vec2 {
    pub config: ModelConfig,
    pub params: ModelParams,
}

struct PretrainState {
    enc: Option<encoder::EncoderCache>,
    proj: encoder::ProjectCache,
    masked: Vec<usize>,
    ctx: Vec<crate::nn::BlockCache>,
    quant: quantizer::QuantizerOutput,
    qcache: quantizer::QuantizerCache,
    contrast: loss::ContrastiveOutput,
}

impl Wav2Vec2 {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        let params = ModelParams::init(&config, seed);
        Ok(Self { config, params })
    }

    pub fn from_parts(config: ModelConfig, params: ModelParams) -> Result<Self, ModelError> {
        config.validate()?;
        let expected = ModelParams::zeros(&config, params.head.is_some());
        for ((name, a), (_, b)) in expected.tensors().into_iter().zip(params.tensors()) {
            if a.shape() != b.shape() {
                return Err(ModelError::ShapeMismatch { name, expected: a.shape(), found: b.shape() });
            }
        }
        Ok(Self { config, params })
    }

    /// Adds a zero-initialized classification head if none exists.
    pub fn ensure_head(&mut self) {
        if self.params.head.is_none() {
            self.params.head = Some(crate::nn::Linear::zeros(self.config.model_dim, NUM_CLASSES));
        }
    }

    /// Conv encoder output `F`, `frames x encoder_channels`.
    pub fn encoder_output(&self, wave: &[f64]) -> Result<Mat, ModelError> {
        Ok(encoder::encoder_forward(&self.params, &self.config, wave, false)?.0)
    }

    /// Latent frames `z`, `frames x model_dim`.
    pub fn encode_features(&self, wave: &[f64]) -> Result<Mat, ModelError> {
        let f = self.encoder_output(wave)?;
        Ok(encoder::project_forward(&self.params, &f).0)
    }

    /// Context representations of unmasked input, `frames x model_dim`.
    pub fn context(&self, wave: &[f64]) -> Result<Mat, ModelError> {
        let z = self.encode_features(wave)?;
        Ok(context::contextualize(&self.params, &self.config, &z).0)
    }

    /// The span mask an item's seed produces for `frames` frames.
    pub fn mask_for(&self, frames: usize, seed: u64) -> Result<Vec<bool>, ModelError> {
        masking::mask_spans(frames, self.config.mask_prob, self.config.mask_span, rng::derive_seed(seed, 1))
    }

    fn pretrain_forward(&self, item: &PretrainItem, mode: QuantizerMode, keep: bool) -> Result<PretrainState, ModelError> {
        let cfg = &self.config;
        let (feat, enc) = encoder::encoder_forward(&self.params, cfg, item.wave, keep)?;
        let (z, proj) = encoder::project_forward(&self.params, &feat);
        let frames = z.rows;
        let mask = self.mask_for(frames, item.seed)?;
        let masked: Vec<usize> = (0..frames).filter(|&t| mask[t]).collect();
        let mut x = z.clone();
        for &t in &masked {
            x.row_mut(t).copy_from_slice(&self.params.mask_emb.data);
        }
        let (c, ctx) = context::contextualize(&self.params, cfg, &x);
        let mut noise_rng = rng::seeded(rng::derive_seed(item.seed, 2));
        let noise = quantizer::gumbel_noise(frames * cfg.quantizer_groups * cfg.codebook_entries, &mut noise_rng);
        let (quant, qcache) = quantizer::quantize(&self.params, cfg, &z, Some(&noise), mode);
        let mut dist_rng = rng::seeded(rng::derive_seed(item.seed, 3));
        let distractors = loss::sample_distractors(&masked, frames, cfg.num_negatives, &mut dist_rng)?;
        let contrast = loss::contrastive_loss(&c, &quant.targets, &masked, &distractors, cfg.temperature)?;
        Ok(PretrainState { enc, proj, masked, ctx, quant, qcache, contrast })
    }

    /// Batch pretraining loss. The contrastive term averages over all masked
    /// frames of the batch and the diversity term uses the code distribution
    /// averaged over all frames of the batch. With `grads`, the gradient of
    /// `total` is accumulated into it.
    pub fn pretrain_objective(
        &self,
        batch: &[PretrainItem],
        mode: QuantizerMode,
        grads: Option<&mut ModelParams>,
    ) -> Result<PretrainLoss, ModelError> {
        if batch.is_empty() {
            return Err(ModelError::NoMaskedFrames);
        }
        let cfg = &self.config;
        let keep = grads.is_some();
        let states = batch
            .iter()
            .map(|it| self.pretrain_forward(it, mode, keep))
            .collect::<Result<Vec<_>, _>>()?;
        let masked_frames: usize = states.iter().map(|s| s.contrast.count).sum();
        let frames: usize = states.iter().map(|s| s.quant.code_probs.rows).sum();
        let csum: f64 = states.iter().map(|s| s.contrast.sum).sum();
        let contrastive = csum / masked_frames as f64;
        let probs: Vec<&Mat> = states.iter().map(|s| &s.quant.code_probs).collect();
        let (diversity, dprob_row) = loss::diversity_loss_grad(&probs, cfg.quantizer_groups, cfg.codebook_entries);
        let total = contrastive + cfg.diversity_weight * diversity;
        let perplexity = (cfg.codebook_entries as f64) * (1.0 - diversity);
        if !total.is_finite() {
            return Err(ModelError::NonFinite);
        }
        if let Some(g) = grads {
            let scale = 1.0 / masked_frames as f64;
            for s in states {
                let mut dc = s.contrast.dc;
                dc.scale(scale);
                let mut dq = s.contrast.dq;
                dq.scale(scale);
                let dx = context::contextualize_backward(&self.params, cfg, &s.ctx, dc, g);
                let mut dz = dx;
                for &t in &s.masked {
                    let row = dz.row_mut(t);
                    g.mask_emb.data.iter_mut().zip(row.iter()).for_each(|(m, d)| *m += d);
                    row.iter_mut().for_each(|d| *d = 0.0);
                }
                let mut dprobs = Mat::zeros(s.quant.code_probs.rows, dprob_row.len());
                for r in 0..dprobs.rows {
                    dprobs.row_mut(r).iter_mut().zip(&dprob_row).for_each(|(o, v)| *o = cfg.diversity_weight * v);
                }
                let dzq = quantizer::quantize_backward(&self.params, cfg, &s.quant, &s.qcache, &dq, Some(&dprobs), g);
                dz.add_assign(&dzq);
                let dfeat = encoder::project_backward(&self.params, &s.proj, &dz, g);
                if let Some(enc) = &s.enc {
                    encoder::encoder_backward(&self.params, cfg, enc, dfeat, g);
                }
            }
        }
        Ok(PretrainLoss { total, contrastive, diversity, perplexity, masked_frames, frames })
    }

    fn features_for(&self, input: &FinetuneInput, keep: bool) -> Result<(Mat, Option<encoder::EncoderCache>), ModelError> {
        match input {
            FinetuneInput::Wave(w) => encoder::encoder_forward(&self.params, &self.config, w, keep),
            FinetuneInput::Features(f) => Ok(((*f).clone(), None)),
        }
    }

    fn head_logits(&self, feat: &Mat) -> Result<(Vec<f64>, Mat, encoder::ProjectCache, Vec<crate::nn::BlockCache>), ModelError> {
        let head = self.params.head.as_ref().ok_or(ModelError::MissingHead)?;
        let (z, proj) = encoder::project_forward(&self.params, feat);
        let (c, ctx) = context::contextualize(&self.params, &self.config, &z);
        let pooled = Mat::from_vec(1, c.cols, c.mean_rows());
        let logits = linear_forward(&pooled, head).data;
        Ok((logits, pooled, proj, ctx))
    }

    /// Class probabilities from encoder output.
    pub fn classify_features(&self, feat: &Mat) -> Result<[f64; NUM_CLASSES], ModelError> {
        let (mut logits, ..) = self.head_logits(feat)?;
        math::softmax_in_place(&mut logits);
        if logits.iter().any(|p| !p.is_finite()) {
            return Err(ModelError::NonFinite);
        }
        let mut out = [0.0; NUM_CLASSES];
        out.copy_from_slice(&logits);
        Ok(out)
    }

    /// Class probabilities for a 16 kHz waveform.
    pub fn classify(&self, wave: &[f64]) -> Result<[f64; NUM_CLASSES], ModelError> {
        self.classify_features(&self.encoder_output(wave)?)
    }

    /// Most probable class; ties go to the lower class index.
    pub fn predict_wave(&self, wave: &[f64]) -> Result<EventClass, ModelError> {
        Ok(argmax_class(&self.classify(wave)?))
    }

    /// Mean cross-entropy over the batch. With `grads`, accumulates its
    /// gradient; the conv encoder receives none when `freeze_encoder` is set.
    pub fn finetune_objective(
        &self,
        batch: &[(FinetuneInput, EventClass)],
        freeze_encoder: bool,
        mut grads: Option<&mut ModelParams>,
    ) -> Result<f64, ModelError> {
        if batch.is_empty() {
            return Err(ModelError::SequenceTooShort { frames: 0, required: 1 });
        }
        let head = self.params.head.as_ref().ok_or(ModelError::MissingHead)?;
        let n = batch.len() as f64;
        let mut total = 0.0;
        for (input, label) in batch {
            let keep = grads.is_some() && !freeze_encoder;
            let (feat, enc) = self.features_for(input, keep)?;
            let (mut probs, pooled, proj, ctx) = self.head_logits(&feat)?;
            let y = label.index();
            let lse = math::log_sum_exp(&probs);
            total += lse - probs[y];
            let Some(g) = grads.as_deref_mut() else { continue };
            math::softmax_in_place(&mut probs);
            probs[y] -= 1.0;
            probs.iter_mut().for_each(|p| *p /= n);
            let dlogits = Mat::from_vec(1, NUM_CLASSES, probs);
            let gh = g.head.as_mut().ok_or(ModelError::MissingHead)?;
            let dpooled = linear_backward(&pooled, head, &dlogits, gh);
            let frames = feat.rows;
            let mut dc = Mat::zeros(frames, self.config.model_dim);
            for t in 0..frames {
                dc.row_mut(t).iter_mut().zip(&dpooled.data).for_each(|(o, v)| *o = v / frames as f64);
            }
            let dz = context::contextualize_backward(&self.params, &self.config, &ctx, dc, g);
            let dfeat = encoder::project_backward(&self.params, &proj, &dz, g);
            if let Some(enc) = &enc {
                encoder::encoder_backward(&self.params, &self.config, enc, dfeat, g);
            }
        }
        let mean = total / n;
        if !mean.is_finite() {
            return Err(ModelError::NonFinite);
        }
        Ok(mean)
    }
}

/// Index of the largest probability; ties resolve to the lower index.
pub fn argmax_class(probs: &[f64; NUM_CLASSES]) -> EventClass {
    let mut best = 0;
    for i in 1..NUM_CLASSES {
        if probs[i] > probs[best] {
            best = i;
        }
    }
    EventClass::from_index(best).expect("index below NUM_CLASSES")
}

impl Classifier for Wav2Vec2 {
    fn predict(&self, wave: &Waveform) -> Result<EventClass, ModelError> {
        self.predict_wave(&wave.samples)
    }
}
