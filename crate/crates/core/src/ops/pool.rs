//! Max pooling with recorded argmax routing.

use crate::error::{Error, Result};
use crate::tensor::{Shape, Tensor};

/// Pooled values plus, per output cell, the flat index of the selected input element.
#[derive(Debug, Clone)]
pub struct PoolOutput {
    pub output: Tensor,
    pub argmax: Vec<usize>,
}

/// Floor-mode max pooling without padding. Ties resolve to the lowest flat index.
pub fn maxpool2d_forward(input: &Tensor, k: usize, stride: usize) -> Result<PoolOutput> {
    let [n, c, h, w] = input.shape().0;
    if k == 0 || stride == 0 {
        return Err(Error::Config(format!("invalid pool window {k} stride {stride}")));
    }
    if h < k || w < k {
        return Err(Error::shape(format!(
            "pool window {k}x{k} larger than input {}",
            input.shape()
        )));
    }
    let oh = (h - k) / stride + 1;
    let ow = (w - k) / stride + 1;
    let out_shape = Shape::new(n, c, oh, ow);
    let mut out = Vec::with_capacity(out_shape.numel());
    let mut argmax = Vec::with_capacity(out_shape.numel());
    let data = input.data();
    for plane in 0..n * c {
        let base = plane * h * w;
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = base + oy * stride * w + ox * stride;
                let mut best_v = data[best];
                for i in 0..k {
                    let row = base + (oy * stride + i) * w + ox * stride;
                    for (j, &v) in data[row..row + k].iter().enumerate() {
                        if v > best_v {
                            best_v = v;
                            best = row + j;
                        }
                    }
                }
                out.push(best_v);
                argmax.push(best);
            }
        }
    }
    Ok(PoolOutput {
        output: Tensor::from_vec(out_shape, out)?,
        argmax,
    })
}

/// Routes each upstream value to its argmax source.
pub fn maxpool2d_backward(input_shape: Shape, argmax: &[usize], upstream: &Tensor) -> Result<Tensor> {
    if upstream.data().len() != argmax.len() {
        return Err(Error::shape(format!(
            "upstream gradient {} does not match {} pooled cells",
            upstream.shape(),
            argmax.len()
        )));
    }
    let mut dx = Tensor::zeros(input_shape);
    let d = dx.data_mut();
    for (&src, &g) in argmax.iter().zip(upstream.data()) {
        d[src] += g;
    }
    Ok(dx)
}
