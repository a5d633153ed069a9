use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::ModelError;

/// Architecture and pre-training objective hyperparameters.
///
/// `Default` is the desk-scale model (64-d, 4 blocks); [`ModelConfig::base_scale`]
/// is the 12-block base configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub encoder_channels: usize,
    pub encoder_strides: Vec<usize>,
    pub encoder_kernels: Vec<usize>,
    pub context_blocks: usize,
    pub model_dim: usize,
    pub attention_heads: usize,
    pub ffn_dim: usize,
    pub quantizer_groups: usize,
    pub codebook_entries: usize,
    pub num_negatives: usize,
    /// Contrastive temperature applied to cosine similarities.
    pub temperature: f64,
    pub diversity_weight: f64,
    pub mask_prob: f64,
    pub mask_span: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            encoder_channels: 64,
            encoder_strides: vec![5, 2, 2, 2, 2, 2, 2],
            encoder_kernels: vec![10, 3, 3, 3, 3, 2, 2],
            context_blocks: 4,
            model_dim: 64,
            attention_heads: 4,
            ffn_dim: 256,
            quantizer_groups: 2,
            codebook_entries: 80,
            num_negatives: 20,
            temperature: 0.1,
            diversity_weight: 0.1,
            mask_prob: 0.065,
            mask_span: 5,
        }
    }
}

impl ModelConfig {
    pub fn base_scale() -> Self {
        Self {
            encoder_channels: 512,
            context_blocks: 12,
            model_dim: 768,
            attention_heads: 12,
            ffn_dim: 3072,
            codebook_entries: 320,
            num_negatives: 100,
            mask_span: 10,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m| Err(ModelError::InvalidConfig(m));
        if self.encoder_strides.is_empty() || self.encoder_strides.len() != self.encoder_kernels.len() {
            return bad("encoder strides and kernels must be non-empty and of equal length");
        }
        if self.encoder_strides.iter().product::<usize>() != 320 {
            return bad("encoder strides must multiply to 320");
        }
        if self.encoder_strides.contains(&0) || self.encoder_kernels.contains(&0) {
            return bad("encoder strides and kernels must be positive");
        }
        if self.encoder_channels == 0 || self.model_dim == 0 || self.ffn_dim == 0 {
            return bad("dimensions must be positive");
        }
        if self.attention_heads == 0 || !self.model_dim.is_multiple_of(self.attention_heads) {
            return bad("model_dim must be divisible by attention_heads");
        }
        if self.quantizer_groups == 0 || !self.model_dim.is_multiple_of(self.quantizer_groups) {
            return bad("model_dim must be divisible by quantizer_groups");
        }
        if self.codebook_entries == 0 {
            return bad("codebook_entries must be positive");
        }
        if !(self.mask_prob > 0.0 && self.mask_prob < 1.0) {
            return bad("mask_prob must lie strictly between 0 and 1");
        }
        if self.mask_span == 0 || self.num_negatives == 0 {
            return bad("mask_span and num_negatives must be at least 1");
        }
        if !(self.temperature > 0.0) || !(self.diversity_weight >= 0.0) {
            return bad("temperature must be positive and diversity_weight non-negative");
        }
        Ok(())
    }

    /// Frames produced for `len` input samples, applying `floor((L - k) / s) + 1` per layer.
    pub fn frame_count(&self, len: usize) -> Option<usize> {
        self.encoder_kernels
            .iter()
            .zip(&self.encoder_strides)
            .try_fold(len, |l, (&k, &s)| crate::nn::conv_output_len(l, k, s))
            .filter(|&t| t > 0)
    }

    /// Samples seen by one output frame (400 for the standard stack).
    pub fn receptive_field(&self) -> usize {
        let mut field = 1;
        let mut jump = 1;
        for (&k, &s) in self.encoder_kernels.iter().zip(&self.encoder_strides) {
            field += (k - 1) * jump;
            jump *= s;
        }
        field
    }

    pub fn hop(&self) -> usize {
        self.encoder_strides.iter().product()
    }

    pub fn codevector_dim(&self) -> usize {
        self.model_dim / self.quantizer_groups
    }
}
