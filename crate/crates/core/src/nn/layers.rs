use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::tensor::{gemm, matmul, matmul_nt, matmul_tn_acc, Mat};
use crate::math;

/// Affine map `y = x W + b` with `W: in x out` and `b: 1 x out`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    pub w: Mat,
    pub b: Mat,
}

impl Linear {
    pub fn zeros(input: usize, output: usize) -> Self {
        Self { w: Mat::zeros(input, output), b: Mat::zeros(1, output) }
    }
}

pub fn linear_forward(x: &Mat, p: &Linear) -> Mat {
    let mut y = matmul(x, &p.w);
    for r in 0..y.rows {
        for (v, b) in y.row_mut(r).iter_mut().zip(&p.b.data) {
            *v += b;
        }
    }
    y
}

/// Accumulates parameter gradients into `g` and returns the input gradient.
pub fn linear_backward(x: &Mat, p: &Linear, dy: &Mat, g: &mut Linear) -> Mat {
    matmul_tn_acc(&mut g.w, x, dy);
    for r in 0..dy.rows {
        for (gb, d) in g.b.data.iter_mut().zip(dy.row(r)) {
            *gb += d;
        }
    }
    matmul_nt(dy, &p.w)
}

const LN_EPS: f64 = 1e-5;

/// Per-row normalization over the feature axis with a learned gain and shift.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerNorm {
    pub gamma: Mat,
    pub beta: Mat,
}

impl LayerNorm {
    pub fn new(dim: usize) -> Self {
        Self { gamma: Mat::from_vec(1, dim, vec![1.0; dim]), beta: Mat::zeros(1, dim) }
    }

    pub fn zeros(dim: usize) -> Self {
        Self { gamma: Mat::zeros(1, dim), beta: Mat::zeros(1, dim) }
    }
}

#[derive(Debug, Clone)]
pub struct LayerNormCache {
    xhat: Mat,
    rstd: Vec<f64>,
}

pub fn layer_norm_forward(x: &Mat, p: &LayerNorm) -> (Mat, LayerNormCache) {
    let n = x.cols as f64;
    let mut xhat = Mat::zeros(x.rows, x.cols);
    let mut y = Mat::zeros(x.rows, x.cols);
    let mut rstd = Vec::with_capacity(x.rows);
    for r in 0..x.rows {
        let row = x.row(r);
        let mean = row.iter().sum::<f64>() / n;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let rs = 1.0 / math::sqrt(var + LN_EPS);
        rstd.push(rs);
        let xh = xhat.row_mut(r);
        for (o, v) in xh.iter_mut().zip(row) {
            *o = (v - mean) * rs;
        }
        let xh = xhat.row(r);
        for (((o, h), g), b) in y.row_mut(r).iter_mut().zip(xh).zip(&p.gamma.data).zip(&p.beta.data) {
            *o = h * g + b;
        }
    }
    (y, LayerNormCache { xhat, rstd })
}

pub fn layer_norm_backward(cache: &LayerNormCache, p: &LayerNorm, dy: &Mat, g: &mut LayerNorm) -> Mat {
    let cols = dy.cols;
    let n = cols as f64;
    let mut dx = Mat::zeros(dy.rows, cols);
    let mut dxhat = vec![0.0; cols];
    for r in 0..dy.rows {
        let d = dy.row(r);
        let xh = cache.xhat.row(r);
        for j in 0..cols {
            g.gamma.data[j] += d[j] * xh[j];
            g.beta.data[j] += d[j];
            dxhat[j] = d[j] * p.gamma.data[j];
        }
        let mean_d = dxhat.iter().sum::<f64>() / n;
        let mean_dx = dxhat.iter().zip(xh).map(|(a, b)| a * b).sum::<f64>() / n;
        let rs = cache.rstd[r];
        for ((o, dh), h) in dx.row_mut(r).iter_mut().zip(&dxhat).zip(xh) {
            *o = rs * (dh - mean_d - h * mean_dx);
        }
    }
    dx
}

const INV_SQRT2: f64 = core::f64::consts::FRAC_1_SQRT_2;
const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Exact (erf-based) GELU.
pub fn gelu(x: &Mat) -> Mat {
    Mat::from_vec(x.rows, x.cols, x.data.iter().map(|&v| v * normal_cdf(v)).collect())
}

pub fn gelu_backward(x: &Mat, dy: &Mat) -> Mat {
    let cdf = Mat::from_vec(x.rows, x.cols, x.data.iter().map(|&v| normal_cdf(v)).collect());
    gelu_backward_cdf(x, &cdf, dy)
}

fn normal_cdf(v: f64) -> f64 {
    0.5 * (1.0 + math::erf(v * INV_SQRT2))
}

/// GELU that also returns the normal CDF of each input, for [`gelu_backward_cdf`].
pub fn gelu_with_cdf(x: &Mat) -> (Mat, Mat) {
    let cdf = Mat::from_vec(x.rows, x.cols, x.data.iter().map(|&v| normal_cdf(v)).collect());
    let y = Mat::from_vec(x.rows, x.cols, x.data.iter().zip(&cdf.data).map(|(v, c)| v * c).collect());
    (y, cdf)
}

/// [`gelu_backward`] reusing the forward pass's CDF values.
pub fn gelu_backward_cdf(x: &Mat, cdf: &Mat, dy: &Mat) -> Mat {
    Mat::from_vec(
        x.rows,
        x.cols,
        x.data
            .iter()
            .zip(&cdf.data)
            .zip(&dy.data)
            .map(|((&v, &c), &d)| d * (c + v * INV_SQRT_2PI * math::exp(-0.5 * v * v)))
            .collect(),
    )
}

/// Output length of a valid (unpadded) strided convolution, or `None` if the
/// input is shorter than the kernel.
pub fn conv_output_len(len: usize, kernel: usize, stride: usize) -> Option<usize> {
    (len >= kernel).then(|| (len - kernel) / stride + 1)
}

/// Bias-free strided 1-D convolution.
///
/// `x` is `len x c_in`, `w` is `(kernel * c_in) x c_out` with rows ordered by
/// kernel tap, then input channel. The im2col matrix is a strided view of `x`.
pub fn conv_forward(x: &Mat, w: &Mat, kernel: usize, stride: usize) -> Mat {
    let c_in = x.cols;
    let c_out = w.cols;
    assert_eq!(w.rows, kernel * c_in);
    let t = conv_output_len(x.rows, kernel, stride).expect("input shorter than kernel");
    let mut y = Mat::zeros(t, c_out);
    gemm(t, kernel * c_in, c_out, 1.0, &x.data, stride * c_in, 1, &w.data, c_out, 1, 0.0, &mut y.data, c_out, 1);
    y
}

/// Accumulates the weight gradient into `gw`; returns the input gradient when `need_dx`.
pub fn conv_backward(x: &Mat, w: &Mat, kernel: usize, stride: usize, dy: &Mat, gw: &mut Mat, need_dx: bool) -> Option<Mat> {
    let c_in = x.cols;
    let c_out = w.cols;
    let t = dy.rows;
    gemm(kernel * c_in, t, c_out, 1.0, &x.data, 1, stride * c_in, &dy.data, c_out, 1, 1.0, &mut gw.data, c_out, 1);
    if !need_dx {
        return None;
    }
    let mut dx = Mat::zeros(x.rows, c_in);
    // one GEMM per tap: rows t*stride + j of dx are distinct for a fixed tap j
    for j in 0..kernel {
        gemm(
            t,
            c_out,
            c_in,
            1.0,
            &dy.data,
            c_out,
            1,
            &w.data[j * c_in * c_out..],
            1,
            c_out,
            1.0,
            &mut dx.data[j * c_in..],
            stride * c_in,
            1,
        );
    }
    Some(dx)
}
