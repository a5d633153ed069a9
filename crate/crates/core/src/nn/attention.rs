use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::layers::{
    gelu, gelu_backward, layer_norm_backward, layer_norm_forward, linear_backward, linear_forward, LayerNorm,
    LayerNormCache, Linear,
};
use super::tensor::{gemm, Mat};
use crate::math;

/// Pre-norm transformer block: `x + MHSA(LN(x))`, then `+ FFN(LN(.))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockParams {
    pub ln1: LayerNorm,
    pub q: Linear,
    pub k: Linear,
    pub v: Linear,
    pub o: Linear,
    pub ln2: LayerNorm,
    pub ff1: Linear,
    pub ff2: Linear,
}

impl BlockParams {
    pub fn zeros(dim: usize, ffn: usize) -> Self {
        Self {
            ln1: LayerNorm::zeros(dim),
            q: Linear::zeros(dim, dim),
            k: Linear::zeros(dim, dim),
            v: Linear::zeros(dim, dim),
            o: Linear::zeros(dim, dim),
            ln2: LayerNorm::zeros(dim),
            ff1: Linear::zeros(dim, ffn),
            ff2: Linear::zeros(ffn, dim),
        }
    }
}

pub struct BlockCache {
    ln1: LayerNormCache,
    h1: Mat,
    q: Mat,
    k: Mat,
    v: Mat,
    probs: Vec<Mat>,
    attn: Mat,
    ln2: LayerNormCache,
    h2: Mat,
    f1: Mat,
    act: Mat,
}

pub fn block_forward(x: &Mat, p: &BlockParams, heads: usize) -> (Mat, BlockCache) {
    let t = x.rows;
    let d = x.cols;
    let dh = d / heads;
    let scale = 1.0 / math::sqrt(dh as f64);
    let (h1, ln1) = layer_norm_forward(x, &p.ln1);
    let q = linear_forward(&h1, &p.q);
    let k = linear_forward(&h1, &p.k);
    let v = linear_forward(&h1, &p.v);
    let mut attn = Mat::zeros(t, d);
    let mut probs = Vec::with_capacity(heads);
    for h in 0..heads {
        let off = h * dh;
        let mut s = Mat::zeros(t, t);
        gemm(t, dh, t, scale, &q.data[off..], d, 1, &k.data[off..], 1, d, 0.0, &mut s.data, t, 1);
        for r in 0..t {
            math::softmax_in_place(s.row_mut(r));
        }
        gemm(t, t, dh, 1.0, &s.data, t, 1, &v.data[off..], d, 1, 0.0, &mut attn.data[off..], d, 1);
        probs.push(s);
    }
    let mut x2 = linear_forward(&attn, &p.o);
    x2.add_assign(x);
    let (h2, ln2) = layer_norm_forward(&x2, &p.ln2);
    let f1 = linear_forward(&h2, &p.ff1);
    let act = gelu(&f1);
    let mut y = linear_forward(&act, &p.ff2);
    y.add_assign(&x2);
    (y, BlockCache { ln1, h1, q, k, v, probs, attn, ln2, h2, f1, act })
}

pub fn block_backward(cache: &BlockCache, p: &BlockParams, heads: usize, dy: &Mat, g: &mut BlockParams) -> Mat {
    let t = dy.rows;
    let d = dy.cols;
    let dh = d / heads;
    let scale = 1.0 / math::sqrt(dh as f64);

    let dact = linear_backward(&cache.act, &p.ff2, dy, &mut g.ff2);
    let df1 = gelu_backward(&cache.f1, &dact);
    let dh2 = linear_backward(&cache.h2, &p.ff1, &df1, &mut g.ff1);
    let mut dx2 = layer_norm_backward(&cache.ln2, &p.ln2, &dh2, &mut g.ln2);
    dx2.add_assign(dy);

    let dattn = linear_backward(&cache.attn, &p.o, &dx2, &mut g.o);
    let mut dq = Mat::zeros(t, d);
    let mut dk = Mat::zeros(t, d);
    let mut dv = Mat::zeros(t, d);
    let mut dp = Mat::zeros(t, t);
    for h in 0..heads {
        let off = h * dh;
        let pm = &cache.probs[h];
        // dP = dO_h V_h^T
        gemm(t, dh, t, 1.0, &dattn.data[off..], d, 1, &cache.v.data[off..], 1, d, 0.0, &mut dp.data, t, 1);
        // dV_h = P^T dO_h
        gemm(t, t, dh, 1.0, &pm.data, 1, t, &dattn.data[off..], d, 1, 0.0, &mut dv.data[off..], d, 1);
        for r in 0..t {
            let prow = pm.row(r);
            let drow = dp.row_mut(r);
            let dot: f64 = prow.iter().zip(drow.iter()).map(|(a, b)| a * b).sum();
            for (dv, pv) in drow.iter_mut().zip(prow) {
                *dv = pv * (*dv - dot) * scale;
            }
        }
        // dQ_h = dS K_h, dK_h = dS^T Q_h
        gemm(t, t, dh, 1.0, &dp.data, t, 1, &cache.k.data[off..], d, 1, 0.0, &mut dq.data[off..], d, 1);
        gemm(t, t, dh, 1.0, &dp.data, 1, t, &cache.q.data[off..], d, 1, 0.0, &mut dk.data[off..], d, 1);
    }
    let mut dh1 = linear_backward(&cache.h1, &p.q, &dq, &mut g.q);
    dh1.add_assign(&linear_backward(&cache.h1, &p.k, &dk, &mut g.k));
    dh1.add_assign(&linear_backward(&cache.h1, &p.v, &dv, &mut g.v));
    let mut dx = layer_norm_backward(&cache.ln1, &p.ln1, &dh1, &mut g.ln1);
    dx.add_assign(&dx2);
    dx
}
