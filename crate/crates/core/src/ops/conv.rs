//! Strided, zero-padded 2-D cross-correlation and its gradients (im2col + GEMM).

use rand::Rng;

use super::gemm::gemm;
use crate::error::{Error, Result};
use crate::tensor::{Shape, Tensor};

/// A convolution layer's parameters: kernel `(out_ch, in_ch, kh, kw)`, bias, stride and
/// symmetric zero padding.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvSpec {
    pub weight: Tensor,
    pub bias: Vec<f64>,
    pub stride: usize,
    pub pad: usize,
}

impl ConvSpec {
    pub fn new(weight: Tensor, bias: Vec<f64>, stride: usize, pad: usize) -> Result<Self> {
        let spec = ConvSpec {
            weight,
            bias,
            stride,
            pad,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// He-style Gaussian initialization (std = sqrt(2 / fan_in)), zero bias.
    pub fn gaussian<R: Rng + ?Sized>(
        out_ch: usize,
        in_ch: usize,
        k: usize,
        stride: usize,
        pad: usize,
        rng: &mut R,
    ) -> Self {
        let fan_in = (in_ch * k * k) as f64;
        let weight = Tensor::randn(Shape::new(out_ch, in_ch, k, k), (2.0 / fan_in).sqrt(), rng);
        ConvSpec {
            weight,
            bias: vec![0.0; out_ch],
            stride,
            pad,
        }
    }

    pub fn zeros(out_ch: usize, in_ch: usize, k: usize, stride: usize, pad: usize) -> Self {
        ConvSpec {
            weight: Tensor::zeros(Shape::new(out_ch, in_ch, k, k)),
            bias: vec![0.0; out_ch],
            stride,
            pad,
        }
    }

    pub fn out_channels(&self) -> usize {
        self.weight.shape().0[0]
    }

    pub fn in_channels(&self) -> usize {
        self.weight.shape().0[1]
    }

    pub fn kernel_hw(&self) -> (usize, usize) {
        let s = self.weight.shape();
        (s.0[2], s.0[3])
    }

    pub fn validate(&self) -> Result<()> {
        let (kh, kw) = self.kernel_hw();
        if self.stride == 0 || kh == 0 || kw == 0 {
            return Err(Error::Config(format!(
                "invalid convolution: stride {} kernel {kh}x{kw}",
                self.stride
            )));
        }
        if self.bias.len() != self.out_channels() {
            return Err(Error::shape(format!(
                "bias has {} values for {} output channels",
                self.bias.len(),
                self.out_channels()
            )));
        }
        Ok(())
    }

    /// Output spatial extent for an input extent, or `None` if the window does not fit.
    pub fn output_extent(&self, n: usize, k: usize) -> Option<usize> {
        conv_out_extent(n, k, self.stride, self.pad)
    }

    fn output_shape(&self, input: Shape) -> Result<Shape> {
        self.validate()?;
        if input.channels() != self.in_channels() {
            return Err(Error::shape(format!(
                "conv input {input} has {} channels but kernel {} expects {}",
                input.channels(),
                self.weight.shape(),
                self.in_channels()
            )));
        }
        let (kh, kw) = self.kernel_hw();
        match (
            self.output_extent(input.height(), kh),
            self.output_extent(input.width(), kw),
        ) {
            (Some(oh), Some(ow)) => Ok(Shape::new(input.batch(), self.out_channels(), oh, ow)),
            _ => Err(Error::shape(format!(
                "conv input {input} with pad {} is smaller than kernel {}",
                self.pad,
                self.weight.shape()
            ))),
        }
    }
}

/// `floor((n + 2 pad - k) / stride) + 1`, `None` when the padded input is smaller than `k`.
pub fn conv_out_extent(n: usize, k: usize, stride: usize, pad: usize) -> Option<usize> {
    let padded = n + 2 * pad;
    (padded >= k && stride > 0).then(|| (padded - k) / stride + 1)
}

/// Geometry shared by the im2col/col2im pair.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Patch {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad: usize,
    pub oh: usize,
    pub ow: usize,
}

impl Patch {
    pub fn rows(&self) -> usize {
        self.c * self.kh * self.kw
    }

    pub fn cols(&self) -> usize {
        self.oh * self.ow
    }

    fn is_identity(&self) -> bool {
        self.kh == 1 && self.kw == 1 && self.stride == 1 && self.pad == 0
    }
}

pub(crate) fn im2col(x: &[f64], g: &Patch, col: &mut [f64]) {
    let cols = g.cols();
    for c in 0..g.c {
        let plane = &x[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let row = (c * g.kh + ki) * g.kw + kj;
                let dst = &mut col[row * cols..(row + 1) * cols];
                for oy in 0..g.oh {
                    let iy = (oy * g.stride + ki) as isize - g.pad as isize;
                    let line = &mut dst[oy * g.ow..(oy + 1) * g.ow];
                    if iy < 0 || iy >= g.h as isize {
                        line.iter_mut().for_each(|v| *v = 0.0);
                        continue;
                    }
                    let src = &plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    for (ox, v) in line.iter_mut().enumerate() {
                        let ix = (ox * g.stride + kj) as isize - g.pad as isize;
                        *v = if ix < 0 || ix >= g.w as isize {
                            0.0
                        } else {
                            src[ix as usize]
                        };
                    }
                }
            }
        }
    }
}

/// Scatter-adds columns back into an image-shaped buffer (adjoint of `im2col`).
pub(crate) fn col2im(col: &[f64], g: &Patch, x: &mut [f64]) {
    let cols = g.cols();
    for c in 0..g.c {
        let plane = &mut x[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let row = (c * g.kh + ki) * g.kw + kj;
                let src = &col[row * cols..(row + 1) * cols];
                for oy in 0..g.oh {
                    let iy = (oy * g.stride + ki) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    for ox in 0..g.ow {
                        let ix = (ox * g.stride + kj) as isize - g.pad as isize;
                        if ix >= 0 && (ix as usize) < g.w {
                            dst[ix as usize] += src[oy * g.ow + ox];
                        }
                    }
                }
            }
        }
    }
}

/// Runs `f` with the column matrix for one sample, skipping the copy for 1x1 convolutions.
pub(crate) fn with_columns<T>(
    x: &[f64],
    g: &Patch,
    scratch: &mut Vec<f64>,
    f: impl FnOnce(&[f64]) -> T,
) -> T {
    if g.is_identity() {
        f(x)
    } else {
        scratch.resize(g.rows() * g.cols(), 0.0);
        im2col(x, g, scratch);
        f(scratch)
    }
}

fn patch_for(input: Shape, spec: &ConvSpec, out: Shape) -> Patch {
    let (kh, kw) = spec.kernel_hw();
    Patch {
        c: input.channels(),
        h: input.height(),
        w: input.width(),
        kh,
        kw,
        stride: spec.stride,
        pad: spec.pad,
        oh: out.height(),
        ow: out.width(),
    }
}

/// Cross-correlation of `input` with the spec's kernel, plus bias.
pub fn conv2d_forward(input: &Tensor, spec: &ConvSpec) -> Result<Tensor> {
    let in_shape = input.shape();
    let out_shape = spec.output_shape(in_shape)?;
    let g = patch_for(in_shape, spec, out_shape);
    let oc = spec.out_channels();
    let (rows, cols) = (g.rows(), g.cols());
    let mut out = Tensor::zeros(out_shape);
    let in_per = in_shape.numel() / in_shape.batch().max(1);
    let out_per = oc * cols;
    let mut scratch = Vec::new();
    for n in 0..in_shape.batch() {
        let x = &input.data()[n * in_per..(n + 1) * in_per];
        let y = &mut out.data_mut()[n * out_per..(n + 1) * out_per];
        for (o, b) in spec.bias.iter().enumerate() {
            y[o * cols..(o + 1) * cols].iter_mut().for_each(|v| *v = *b);
        }
        with_columns(x, &g, &mut scratch, |col| {
            gemm(oc, rows, cols, 1.0, spec.weight.data(), false, col, false, 1.0, y)
        });
    }
    Ok(out)
}

/// Gradients of a convolution with respect to its input, kernel and bias.
#[derive(Debug, Clone)]
pub struct ConvGrads {
    pub input: Tensor,
    pub kernel: Tensor,
    pub bias: Vec<f64>,
}

pub fn conv2d_backward(input: &Tensor, spec: &ConvSpec, upstream: &Tensor) -> Result<ConvGrads> {
    conv2d_backward_opt(input, spec, upstream, true)
}

/// Like [`conv2d_backward`], optionally skipping the input gradient (first layer).
pub fn conv2d_backward_opt(
    input: &Tensor,
    spec: &ConvSpec,
    upstream: &Tensor,
    want_input_grad: bool,
) -> Result<ConvGrads> {
    let in_shape = input.shape();
    let out_shape = spec.output_shape(in_shape)?;
    if upstream.shape() != out_shape {
        return Err(Error::shape(format!(
            "upstream gradient {} does not match conv output {}",
            upstream.shape(),
            out_shape
        )));
    }
    let g = patch_for(in_shape, spec, out_shape);
    let oc = spec.out_channels();
    let (rows, cols) = (g.rows(), g.cols());
    let in_per = in_shape.numel() / in_shape.batch().max(1);
    let out_per = oc * cols;

    let mut dx = Tensor::zeros(if want_input_grad { in_shape } else { Shape::new(0, 0, 0, 0) });
    let mut dw = Tensor::zeros(spec.weight.shape());
    let mut db = vec![0.0; oc];
    let mut scratch = Vec::new();
    let mut dcol = Vec::new();
    for n in 0..in_shape.batch() {
        let x = &input.data()[n * in_per..(n + 1) * in_per];
        let dy = &upstream.data()[n * out_per..(n + 1) * out_per];
        for (o, b) in db.iter_mut().enumerate() {
            *b += dy[o * cols..(o + 1) * cols].iter().sum::<f64>();
        }
        with_columns(x, &g, &mut scratch, |col| {
            gemm(oc, cols, rows, 1.0, dy, false, col, true, 1.0, dw.data_mut())
        });
        if want_input_grad {
            let dxn = &mut dx.data_mut()[n * in_per..(n + 1) * in_per];
            if g.is_identity() {
                gemm(rows, oc, cols, 1.0, spec.weight.data(), true, dy, false, 1.0, dxn);
            } else {
                dcol.resize(rows * cols, 0.0);
                gemm(rows, oc, cols, 1.0, spec.weight.data(), true, dy, false, 0.0, &mut dcol);
                col2im(&dcol, &g, dxn);
            }
        }
    }
    Ok(ConvGrads {
        input: dx,
        kernel: dw,
        bias: db,
    })
}
