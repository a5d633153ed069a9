use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{ModelConfig, ModelError};
use crate::label::NUM_CLASSES;
use crate::math;
use crate::nn::{BlockParams, LayerNorm, Linear, Mat};
use crate::rng::{self, SeededRng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantizerParams {
    /// Latent frame to `groups * entries` code logits.
    pub logits: Linear,
    /// `groups * entries` rows of `model_dim / groups` code vectors.
    pub codebook: Mat,
    pub proj: Linear,
}

/// Every learned tensor of the model. The same struct holds gradients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub conv: Vec<Mat>,
    pub conv0_norm: LayerNorm,
    pub feature_norm: LayerNorm,
    pub feature_proj: Linear,
    pub mask_emb: Mat,
    pub blocks: Vec<BlockParams>,
    pub quantizer: QuantizerParams,
    pub head: Option<Linear>,
}

fn normal(rng: &mut SeededRng, m: &mut Mat, std: f64) {
    for v in m.data.iter_mut() {
        let z: f64 = rng.sample(StandardNormal);
        *v = z * std;
    }
}

fn push_linear<'a>(out: &mut Vec<(String, &'a Mat)>, name: &str, l: &'a Linear) {
    out.push((format!("{name}.weight"), &l.w));
    out.push((format!("{name}.bias"), &l.b));
}

fn push_linear_mut<'a>(out: &mut Vec<(String, &'a mut Mat)>, name: &str, l: &'a mut Linear) {
    out.push((format!("{name}.weight"), &mut l.w));
    out.push((format!("{name}.bias"), &mut l.b));
}

fn push_norm<'a>(out: &mut Vec<(String, &'a Mat)>, name: &str, l: &'a LayerNorm) {
    out.push((format!("{name}.gamma"), &l.gamma));
    out.push((format!("{name}.beta"), &l.beta));
}

fn push_norm_mut<'a>(out: &mut Vec<(String, &'a mut Mat)>, name: &str, l: &'a mut LayerNorm) {
    out.push((format!("{name}.gamma"), &mut l.gamma));
    out.push((format!("{name}.beta"), &mut l.beta));
}

impl ModelParams {
    /// All-zero tensors with the shapes implied by `cfg`.
    pub fn zeros(cfg: &ModelConfig, with_head: bool) -> Self {
        let c = cfg.encoder_channels;
        let d = cfg.model_dim;
        let mut c_in = 1;
        let conv = cfg
            .encoder_kernels
            .iter()
            .map(|&k| {
                let m = Mat::zeros(k * c_in, c);
                c_in = c;
                m
            })
            .collect();
        Self {
            conv,
            conv0_norm: LayerNorm::zeros(c),
            feature_norm: LayerNorm::zeros(c),
            feature_proj: Linear::zeros(c, d),
            mask_emb: Mat::zeros(1, d),
            blocks: (0..cfg.context_blocks).map(|_| BlockParams::zeros(d, cfg.ffn_dim)).collect(),
            quantizer: QuantizerParams {
                logits: Linear::zeros(d, cfg.quantizer_groups * cfg.codebook_entries),
                codebook: Mat::zeros(cfg.quantizer_groups * cfg.codebook_entries, cfg.codevector_dim()),
                proj: Linear::zeros(d, d),
            },
            head: with_head.then(|| Linear::zeros(d, NUM_CLASSES)),
        }
    }

    /// Random initialization; the classification head (if any) starts at zero.
    pub fn init(cfg: &ModelConfig, seed: u64) -> Self {
        let mut p = Self::zeros(cfg, false);
        let mut rng = rng::seeded(rng::derive_seed(seed, 0x1417));
        let mut c_in = 1;
        for (w, &k) in p.conv.iter_mut().zip(&cfg.encoder_kernels) {
            normal(&mut rng, w, math::sqrt(2.0 / (k * c_in) as f64));
            c_in = cfg.encoder_channels;
        }
        p.conv0_norm = LayerNorm::new(cfg.encoder_channels);
        p.feature_norm = LayerNorm::new(cfg.encoder_channels);
        let d = cfg.model_dim;
        let fan = |n: usize| 1.0 / math::sqrt(n as f64);
        normal(&mut rng, &mut p.feature_proj.w, fan(cfg.encoder_channels));
        normal(&mut rng, &mut p.mask_emb, 1.0);
        let depth_scale = 1.0 / math::sqrt(2.0 * cfg.context_blocks.max(1) as f64);
        for b in p.blocks.iter_mut() {
            b.ln1 = LayerNorm::new(d);
            b.ln2 = LayerNorm::new(d);
            normal(&mut rng, &mut b.q.w, fan(d));
            normal(&mut rng, &mut b.k.w, fan(d));
            normal(&mut rng, &mut b.v.w, fan(d));
            normal(&mut rng, &mut b.o.w, fan(d) * depth_scale);
            normal(&mut rng, &mut b.ff1.w, fan(d));
            normal(&mut rng, &mut b.ff2.w, fan(cfg.ffn_dim) * depth_scale);
        }
        normal(&mut rng, &mut p.quantizer.logits.w, fan(d));
        normal(&mut rng, &mut p.quantizer.codebook, 1.0);
        normal(&mut rng, &mut p.quantizer.proj.w, fan(d));
        p
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.tensors_mut().into_iter().for_each(|(_, m)| m.fill(0.0));
        z
    }

    /// Named tensors in a fixed order.
    pub fn tensors(&self) -> Vec<(String, &Mat)> {
        let mut out = Vec::new();
        for (i, w) in self.conv.iter().enumerate() {
            out.push((format!("encoder.conv.{i}.weight"), w));
        }
        push_norm(&mut out, "encoder.conv0_norm", &self.conv0_norm);
        push_norm(&mut out, "feature_norm", &self.feature_norm);
        push_linear(&mut out, "feature_proj", &self.feature_proj);
        out.push(("mask_emb".into(), &self.mask_emb));
        for (i, b) in self.blocks.iter().enumerate() {
            let n = format!("context.blocks.{i}");
            push_norm(&mut out, &format!("{n}.ln1"), &b.ln1);
            push_linear(&mut out, &format!("{n}.attn.q"), &b.q);
            push_linear(&mut out, &format!("{n}.attn.k"), &b.k);
            push_linear(&mut out, &format!("{n}.attn.v"), &b.v);
            push_linear(&mut out, &format!("{n}.attn.o"), &b.o);
            push_norm(&mut out, &format!("{n}.ln2"), &b.ln2);
            push_linear(&mut out, &format!("{n}.ffn.1"), &b.ff1);
            push_linear(&mut out, &format!("{n}.ffn.2"), &b.ff2);
        }
        push_linear(&mut out, "quantizer.logits", &self.quantizer.logits);
        out.push(("quantizer.codebook".into(), &self.quantizer.codebook));
        push_linear(&mut out, "quantizer.proj", &self.quantizer.proj);
        if let Some(h) = &self.head {
            push_linear(&mut out, "head", h);
        }
        out
    }

    /// Same order as [`ModelParams::tensors`].
    pub fn tensors_mut(&mut self) -> Vec<(String, &mut Mat)> {
        let mut out = Vec::new();
        for (i, w) in self.conv.iter_mut().enumerate() {
            out.push((format!("encoder.conv.{i}.weight"), w));
        }
        push_norm_mut(&mut out, "encoder.conv0_norm", &mut self.conv0_norm);
        push_norm_mut(&mut out, "feature_norm", &mut self.feature_norm);
        push_linear_mut(&mut out, "feature_proj", &mut self.feature_proj);
        out.push(("mask_emb".into(), &mut self.mask_emb));
        for (i, b) in self.blocks.iter_mut().enumerate() {
            let n = format!("context.blocks.{i}");
            push_norm_mut(&mut out, &format!("{n}.ln1"), &mut b.ln1);
            push_linear_mut(&mut out, &format!("{n}.attn.q"), &mut b.q);
            push_linear_mut(&mut out, &format!("{n}.attn.k"), &mut b.k);
            push_linear_mut(&mut out, &format!("{n}.attn.v"), &mut b.v);
            push_linear_mut(&mut out, &format!("{n}.attn.o"), &mut b.o);
            push_norm_mut(&mut out, &format!("{n}.ln2"), &mut b.ln2);
            push_linear_mut(&mut out, &format!("{n}.ffn.1"), &mut b.ff1);
            push_linear_mut(&mut out, &format!("{n}.ffn.2"), &mut b.ff2);
        }
        push_linear_mut(&mut out, "quantizer.logits", &mut self.quantizer.logits);
        out.push(("quantizer.codebook".into(), &mut self.quantizer.codebook));
        push_linear_mut(&mut out, "quantizer.proj", &mut self.quantizer.proj);
        if let Some(h) = &mut self.head {
            push_linear_mut(&mut out, "head", h);
        }
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|(_, m)| m.data.len()).sum()
    }

    /// Rounds every value to the nearest `f32`, the precision checkpoints store.
    pub fn round_to_f32(&mut self) {
        for (_, m) in self.tensors_mut() {
            m.data.iter_mut().for_each(|v| *v = *v as f32 as f64);
        }
    }

    /// Rebuilds parameters from named tensors, checking every shape against `cfg`.
    pub fn from_named(
        cfg: &ModelConfig,
        with_head: bool,
        mut lookup: impl FnMut(&str) -> Option<Mat>,
    ) -> Result<Self, ModelError> {
        let mut p = Self::zeros(cfg, with_head);
        for (name, slot) in p.tensors_mut() {
            let m = lookup(&name).ok_or_else(|| ModelError::MissingParameter(name.clone()))?;
            if m.shape() != slot.shape() {
                return Err(ModelError::ShapeMismatch { name, expected: slot.shape(), found: m.shape() });
            }
            *slot = m;
        }
        Ok(p)
    }
}
