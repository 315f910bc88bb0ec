//! Transposed convolution ("deconvolution") used for learnable upsampling.
//!
//! The weight has layout `(in_ch, out_ch, k, k)`. Read as a convolution kernel of shape
//! `(out_conv = in_ch, in_conv = out_ch, k, k)` it defines the strided convolution whose
//! adjoint this operator is, so `<deconv(x), y> == <x, conv(y)>` for that kernel.

use super::conv::{col2im, with_columns, Patch};
use super::gemm::gemm;
use crate::error::{Error, Result};
use crate::tensor::{Shape, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct UpsampleSpec {
    pub factor: usize,
    pub kernel_size: usize,
    pub pad: usize,
    pub weight: Tensor,
    /// When false the trainer leaves the kernel untouched.
    pub trainable: bool,
}

/// `2 f - f mod 2`.
pub fn upsample_kernel_size(factor: usize) -> usize {
    2 * factor - factor % 2
}

/// 1-D bilinear interpolation profile for a kernel of `size` taps.
pub fn bilinear_profile(size: usize) -> Vec<f64> {
    let factor = size.div_ceil(2) as f64;
    let center = if size % 2 == 1 {
        factor - 1.0
    } else {
        factor - 0.5
    };
    (0..size)
        .map(|i| 1.0 - (i as f64 - center).abs() / factor)
        .collect()
}

impl UpsampleSpec {
    /// Per-class bilinear upsampler: channel `c` maps to channel `c` only.
    pub fn bilinear(channels: usize, factor: usize) -> Result<Self> {
        if factor < 2 {
            return Err(Error::Config(format!("upsample factor {factor} must be >= 2")));
        }
        let k = upsample_kernel_size(factor);
        let profile = bilinear_profile(k);
        let mut weight = Tensor::zeros(Shape::new(channels, channels, k, k));
        for c in 0..channels {
            for i in 0..k {
                for j in 0..k {
                    weight.set(c, c, i, j, profile[i] * profile[j]);
                }
            }
        }
        Ok(UpsampleSpec {
            factor,
            kernel_size: k,
            pad: 0,
            weight,
            trainable: true,
        })
    }

    pub fn frozen(mut self) -> Self {
        self.trainable = false;
        self
    }

    pub fn in_channels(&self) -> usize {
        self.weight.shape().0[0]
    }

    pub fn out_channels(&self) -> usize {
        self.weight.shape().0[1]
    }

    /// `factor (n - 1) + kernel_size - 2 pad`.
    pub fn output_extent(&self, n: usize) -> usize {
        (self.factor * (n.saturating_sub(1)) + self.kernel_size).saturating_sub(2 * self.pad)
    }

    fn patch(&self, in_shape: Shape) -> Result<Patch> {
        let [k0, _, kh, kw] = self.weight.shape().0;
        if kh != self.kernel_size || kw != self.kernel_size {
            return Err(Error::shape(format!(
                "upsample kernel {} does not match kernel_size {}",
                self.weight.shape(),
                self.kernel_size
            )));
        }
        if in_shape.channels() != k0 {
            return Err(Error::shape(format!(
                "upsample input {in_shape} has {} channels, kernel {} expects {k0}",
                in_shape.channels(),
                self.weight.shape()
            )));
        }
        if in_shape.height() == 0 || in_shape.width() == 0 {
            return Err(Error::shape(format!("empty upsample input {in_shape}")));
        }
        Ok(Patch {
            c: self.out_channels(),
            h: self.output_extent(in_shape.height()),
            w: self.output_extent(in_shape.width()),
            kh: self.kernel_size,
            kw: self.kernel_size,
            stride: self.factor,
            pad: self.pad,
            oh: in_shape.height(),
            ow: in_shape.width(),
        })
    }
}

pub fn deconv2d_forward(input: &Tensor, spec: &UpsampleSpec) -> Result<Tensor> {
    let in_shape = input.shape();
    let g = spec.patch(in_shape)?;
    let out_shape = Shape::new(in_shape.batch(), g.c, g.h, g.w);
    let (rows, cols, ic) = (g.rows(), g.cols(), spec.in_channels());
    let in_per = ic * cols;
    let out_per = g.c * g.h * g.w;
    let mut out = Tensor::zeros(out_shape);
    let mut dcol = vec![0.0; rows * cols];
    for n in 0..in_shape.batch() {
        let x = &input.data()[n * in_per..(n + 1) * in_per];
        gemm(rows, ic, cols, 1.0, spec.weight.data(), true, x, false, 0.0, &mut dcol);
        col2im(&dcol, &g, &mut out.data_mut()[n * out_per..(n + 1) * out_per]);
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct DeconvGrads {
    pub input: Tensor,
    pub kernel: Tensor,
}

pub fn deconv2d_backward(input: &Tensor, spec: &UpsampleSpec, upstream: &Tensor) -> Result<DeconvGrads> {
    let in_shape = input.shape();
    let g = spec.patch(in_shape)?;
    let out_shape = Shape::new(in_shape.batch(), g.c, g.h, g.w);
    if upstream.shape() != out_shape {
        return Err(Error::shape(format!(
            "upstream gradient {} does not match upsample output {out_shape}",
            upstream.shape()
        )));
    }
    let (rows, cols, ic) = (g.rows(), g.cols(), spec.in_channels());
    let in_per = ic * cols;
    let out_per = g.c * g.h * g.w;
    let mut dx = Tensor::zeros(in_shape);
    let mut dw = Tensor::zeros(spec.weight.shape());
    let mut scratch = Vec::new();
    for n in 0..in_shape.batch() {
        let x = &input.data()[n * in_per..(n + 1) * in_per];
        let dy = &upstream.data()[n * out_per..(n + 1) * out_per];
        let dxn = &mut dx.data_mut()[n * in_per..(n + 1) * in_per];
        with_columns(dy, &g, &mut scratch, |col| {
            gemm(ic, rows, cols, 1.0, spec.weight.data(), false, col, false, 0.0, dxn);
            if spec.trainable {
                gemm(ic, cols, rows, 1.0, x, false, col, true, 1.0, dw.data_mut());
            }
        });
    }
    Ok(DeconvGrads {
        input: dx,
        kernel: dw,
    })
}
