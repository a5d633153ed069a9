//! Gumbel-softmax product quantizer.
//!
//! Each latent frame produces `groups x entries` logits. Per group, a
//! Gumbel-softmax over the entries selects a code vector (one-hot in hard
//! mode, with straight-through gradients through the soft relaxation); the
//! concatenated code vectors are projected back to `model_dim`.

use alloc::vec::Vec;

use rand::Rng;

use super::{ModelConfig, ModelParams};
use crate::math;
use crate::nn::{gemm, linear_backward, linear_forward, Mat};
use crate::rng::SeededRng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantizerMode {
    /// Gumbel-softmax temperature.
    pub tau: f64,
    pub hard: bool,
}

#[derive(Debug, Clone)]
pub struct QuantizerOutput {
    /// Quantized targets, `frames x model_dim`.
    pub targets: Mat,
    /// Selection weights, `frames x (groups * entries)`; exactly one-hot per group in hard mode.
    pub selections: Mat,
    /// Noise-free code distribution `softmax(logits)`, `frames x (groups * entries)`.
    pub code_probs: Mat,
    /// Per-group perplexity of the frame-averaged code distribution.
    pub perplexity: Vec<f64>,
}

pub struct QuantizerCache {
    z: Mat,
    soft: Mat,
    raw: Mat,
    tau: f64,
}

/// Standard Gumbel noise for `frames x (groups * entries)` logits.
pub fn gumbel_noise(len: usize, rng: &mut SeededRng) -> Vec<f64> {
    (0..len)
        .map(|_| {
            let u: f64 = rng.random::<f64>().clamp(1e-12, 1.0 - 1e-12);
            -math::ln(-math::ln(u))
        })
        .collect()
}

/// Perplexity `exp(H)` of the frame-averaged code distribution, per group.
pub fn perplexity(code_probs: &Mat, groups: usize, entries: usize) -> Vec<f64> {
    let avg = code_probs.mean_rows();
    (0..groups)
        .map(|g| {
            let h: f64 = avg[g * entries..(g + 1) * entries]
                .iter()
                .filter(|&&p| p > 0.0)
                .map(|&p| -p * math::ln(p))
                .sum();
            math::exp(h)
        })
        .collect()
}

pub fn quantize(
    p: &ModelParams,
    cfg: &ModelConfig,
    z: &Mat,
    noise: Option<&[f64]>,
    mode: QuantizerMode,
) -> (QuantizerOutput, QuantizerCache) {
    let groups = cfg.quantizer_groups;
    let entries = cfg.codebook_entries;
    let cv = cfg.codevector_dim();
    let t = z.rows;
    let logits = linear_forward(z, &p.quantizer.logits);
    let mut code_probs = logits.clone();
    let mut soft = logits.clone();
    if let Some(n) = noise {
        assert_eq!(n.len(), soft.data.len(), "gumbel noise has the wrong length");
        soft.data.iter_mut().zip(n).for_each(|(s, g)| *s += g);
    }
    soft.data.iter_mut().for_each(|s| *s /= mode.tau);
    let mut selections = Mat::zeros(t, groups * entries);
    let mut raw = Mat::zeros(t, groups * cv);
    for r in 0..t {
        for g in 0..groups {
            let span = g * entries..(g + 1) * entries;
            math::softmax_in_place(&mut code_probs.row_mut(r)[span.clone()]);
            let y = &mut soft.row_mut(r)[span.clone()];
            math::softmax_in_place(y);
            let sel = &mut selections.row_mut(r)[span];
            if mode.hard {
                let mut best = 0;
                for (v, &val) in y.iter().enumerate() {
                    if val > y[best] {
                        best = v;
                    }
                }
                sel[best] = 1.0;
            } else {
                sel.copy_from_slice(y);
            }
        }
    }
    // raw[r, g*cv..] = sum_v sel[r, g*V + v] * codebook[g*V + v]
    for g in 0..groups {
        gemm(
            t,
            entries,
            cv,
            1.0,
            &selections.data[g * entries..],
            groups * entries,
            1,
            &p.quantizer.codebook.data[g * entries * cv..],
            cv,
            1,
            0.0,
            &mut raw.data[g * cv..],
            groups * cv,
            1,
        );
    }
    let targets = linear_forward(&raw, &p.quantizer.proj);
    let perplexity = perplexity(&code_probs, groups, entries);
    (
        QuantizerOutput { targets, selections, code_probs, perplexity },
        QuantizerCache { z: z.clone(), soft, raw, tau: mode.tau },
    )
}

/// Backpropagates target gradients (straight-through in hard mode) and optional
/// gradients with respect to `code_probs`; returns the latent gradient.
pub fn quantize_backward(
    p: &ModelParams,
    cfg: &ModelConfig,
    out: &QuantizerOutput,
    cache: &QuantizerCache,
    dtargets: &Mat,
    dprobs: Option<&Mat>,
    g: &mut ModelParams,
) -> Mat {
    let groups = cfg.quantizer_groups;
    let entries = cfg.codebook_entries;
    let cv = cfg.codevector_dim();
    let t = dtargets.rows;
    let draw = linear_backward(&cache.raw, &p.quantizer.proj, dtargets, &mut g.quantizer.proj);
    let mut dsel = Mat::zeros(t, groups * entries);
    for gi in 0..groups {
        // dcodebook_g += sel_g^T draw_g ; dsel_g = draw_g codebook_g^T
        gemm(
            entries,
            t,
            cv,
            1.0,
            &out.selections.data[gi * entries..],
            1,
            groups * entries,
            &draw.data[gi * cv..],
            groups * cv,
            1,
            1.0,
            &mut g.quantizer.codebook.data[gi * entries * cv..],
            cv,
            1,
        );
        gemm(
            t,
            cv,
            entries,
            1.0,
            &draw.data[gi * cv..],
            groups * cv,
            1,
            &p.quantizer.codebook.data[gi * entries * cv..],
            1,
            cv,
            0.0,
            &mut dsel.data[gi * entries..],
            groups * entries,
            1,
        );
    }
    let mut dlogits = Mat::zeros(t, groups * entries);
    let inv_tau = 1.0 / cache.tau;
    for r in 0..t {
        for gi in 0..groups {
            let span = gi * entries..(gi + 1) * entries;
            let y = &cache.soft.row(r)[span.clone()];
            let ds = &dsel.row(r)[span.clone()];
            let dot: f64 = y.iter().zip(ds).map(|(a, b)| a * b).sum();
            let dl = &mut dlogits.row_mut(r)[span.clone()];
            for ((o, yv), dv) in dl.iter_mut().zip(y).zip(ds) {
                *o = inv_tau * yv * (dv - dot);
            }
            if let Some(dp) = dprobs {
                let pr = &out.code_probs.row(r)[span.clone()];
                let dpr = &dp.row(r)[span.clone()];
                let dot: f64 = pr.iter().zip(dpr).map(|(a, b)| a * b).sum();
                for ((o, pv), dv) in dl.iter_mut().zip(pr).zip(dpr) {
                    *o += pv * (dv - dot);
                }
            }
        }
    }
    linear_backward(&cache.z, &p.quantizer.logits, &dlogits, &mut g.quantizer.logits)
}
