//! Forward and backward kernels for every layer type the FCN graphs use.

mod conv;
mod crop;
mod deconv;
mod gemm;
mod loss;
mod pool;

pub use conv::{conv2d_backward, conv2d_backward_opt, conv2d_forward, conv_out_extent, ConvGrads, ConvSpec};
pub use crop::{crop, crop_backward, crop_center};
pub use deconv::{
    bilinear_profile, deconv2d_backward, deconv2d_forward, upsample_kernel_size, DeconvGrads,
    UpsampleSpec,
};
pub use loss::softmax_xent_pixelwise;
pub use pool::{maxpool2d_backward, maxpool2d_forward, PoolOutput};

use crate::tensor::Tensor;

pub fn relu_forward(x: &Tensor) -> Tensor {
    let mut y = x.clone();
    y.clear_grad();
    y.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
    y
}

/// Gradient of ReLU given its output.
pub fn relu_backward(output: &Tensor, upstream: &Tensor) -> Tensor {
    let mut dx = upstream.clone();
    for (g, &y) in dx.data_mut().iter_mut().zip(output.data()) {
        if y <= 0.0 {
            *g = 0.0;
        }
    }
    dx
}
