//! Convolutional feature encoder and the projection into the model dimension.

use alloc::vec::Vec;

use super::{ModelConfig, ModelError, ModelParams};
use crate::nn::{
    conv_backward, conv_forward, gelu, gelu_backward_cdf, gelu_with_cdf, layer_norm_backward, layer_norm_forward, linear_backward,
    linear_forward, LayerNormCache, Mat,
};

pub struct EncoderCache {
    inputs: Vec<Mat>,
    pre_act: Vec<Mat>,
    cdf: Vec<Mat>,
    norm0: LayerNormCache,
}

/// Runs the conv stack (`len x 1` waveform to `frames x channels`).
/// Layer 0 is followed by a per-frame layer norm; every layer ends in GELU.
pub fn encoder_forward(
    p: &ModelParams,
    cfg: &ModelConfig,
    wave: &[f64],
    keep_cache: bool,
) -> Result<(Mat, Option<EncoderCache>), ModelError> {
    if cfg.frame_count(wave.len()).is_none() {
        return Err(ModelError::InputTooShort { len: wave.len(), required: cfg.receptive_field() });
    }
    let mut x = Mat::from_vec(wave.len(), 1, wave.to_vec());
    let mut inputs = Vec::new();
    let mut pre_act = Vec::new();
    let mut cdf = Vec::new();
    let mut norm0 = None;
    for (i, (&k, &s)) in cfg.encoder_kernels.iter().zip(&cfg.encoder_strides).enumerate() {
        let a = conv_forward(&x, &p.conv[i], k, s);
        let a = if i == 0 {
            let (n, c) = layer_norm_forward(&a, &p.conv0_norm);
            norm0 = Some(c);
            n
        } else {
            a
        };
        let h = if keep_cache {
            let (h, c) = gelu_with_cdf(&a);
            inputs.push(x);
            pre_act.push(a);
            cdf.push(c);
            h
        } else {
            gelu(&a)
        };
        x = h;
    }
    let cache = keep_cache.then(|| EncoderCache { inputs, pre_act, cdf, norm0: norm0.expect("encoder has layers") });
    Ok((x, cache))
}

/// Accumulates conv and layer-0 norm gradients.
pub fn encoder_backward(p: &ModelParams, cfg: &ModelConfig, cache: &EncoderCache, dfeat: Mat, g: &mut ModelParams) {
    let mut d = dfeat;
    for i in (0..cfg.encoder_kernels.len()).rev() {
        let mut da = gelu_backward_cdf(&cache.pre_act[i], &cache.cdf[i], &d);
        if i == 0 {
            da = layer_norm_backward(&cache.norm0, &p.conv0_norm, &da, &mut g.conv0_norm);
        }
        let (k, s) = (cfg.encoder_kernels[i], cfg.encoder_strides[i]);
        match conv_backward(&cache.inputs[i], &p.conv[i], k, s, &da, &mut g.conv[i], i > 0) {
            Some(dx) => d = dx,
            None => break,
        }
    }
}

pub struct ProjectCache {
    norm: LayerNormCache,
    normed: Mat,
}

/// Encoder features to latent frames: layer norm, then a linear map to `model_dim`.
pub fn project_forward(p: &ModelParams, feat: &Mat) -> (Mat, ProjectCache) {
    let (normed, norm) = layer_norm_forward(feat, &p.feature_norm);
    let z = linear_forward(&normed, &p.feature_proj);
    (z, ProjectCache { norm, normed })
}

pub fn project_backward(p: &ModelParams, cache: &ProjectCache, dz: &Mat, g: &mut ModelParams) -> Mat {
    let dn = linear_backward(&cache.normed, &p.feature_proj, dz, &mut g.feature_proj);
    layer_norm_backward(&cache.norm, &p.feature_norm, &dn, &mut g.feature_norm)
}
