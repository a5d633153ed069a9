//! Transformer context network over latent frames.

use alloc::vec::Vec;

use super::{ModelConfig, ModelParams};
use crate::math;
use crate::nn::{block_backward, block_forward, BlockCache, Mat};

/// Fixed sinusoidal position encodings, `frames x dim`.
pub fn positional_encoding(frames: usize, dim: usize) -> Mat {
    let mut pe = Mat::zeros(frames, dim);
    for t in 0..frames {
        let row = pe.row_mut(t);
        for i in (0..dim).step_by(2) {
            let angle = t as f64 / math::powf(10_000.0, i as f64 / dim as f64);
            row[i] = math::sin(angle);
            if i + 1 < dim {
                row[i + 1] = math::cos(angle);
            }
        }
    }
    pe
}

/// Adds position encodings and runs every block with full self-attention.
pub fn contextualize(p: &ModelParams, cfg: &ModelConfig, x: &Mat) -> (Mat, Vec<BlockCache>) {
    let mut h = positional_encoding(x.rows, x.cols);
    h.add_assign(x);
    let mut caches = Vec::with_capacity(p.blocks.len());
    for b in &p.blocks {
        let (y, c) = block_forward(&h, b, cfg.attention_heads);
        caches.push(c);
        h = y;
    }
    (h, caches)
}

/// Input gradient of [`contextualize`]; position encodings are constant.
pub fn contextualize_backward(p: &ModelParams, cfg: &ModelConfig, caches: &[BlockCache], dc: Mat, g: &mut ModelParams) -> Mat {
    let mut d = dc;
    for (i, c) in caches.iter().enumerate().rev() {
        d = block_backward(c, &p.blocks[i], cfg.attention_heads, &d, &mut g.blocks[i]);
    }
    d
}
