//! Dense building blocks with explicit forward and backward passes.
//!
//! Sequences are stored time-major (`frames x channels`, row-major), which
//! lets a strided 1-D convolution read its im2col matrix straight out of the
//! input buffer.

mod attention;
mod layers;
mod tensor;

pub use attention::{block_backward, block_forward, BlockCache, BlockParams};
pub use layers::{
    conv_backward, conv_forward, conv_output_len, gelu, gelu_backward, gelu_backward_cdf, gelu_with_cdf, layer_norm_backward, layer_norm_forward,
    linear_backward, linear_forward, LayerNorm, LayerNormCache, Linear,
};
pub use tensor::{gemm, matmul, matmul_nt, matmul_tn_acc, Mat};
