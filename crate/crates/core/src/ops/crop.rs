use crate::error::{Error, Result};
use crate::tensor::{Shape, Tensor};

/// Spatial window of `a` with extents `target_h x target_w` starting at `(offset, offset)`.
pub fn crop_center(a: &Tensor, target_h: usize, target_w: usize, offset: usize) -> Result<Tensor> {
    crop(a, target_h, target_w, offset, offset)
}

pub fn crop(a: &Tensor, th: usize, tw: usize, oy: usize, ox: usize) -> Result<Tensor> {
    let [n, c, h, w] = a.shape().0;
    if oy + th > h || ox + tw > w {
        return Err(Error::shape(format!(
            "crop window {th}x{tw} at ({oy},{ox}) exceeds {}",
            a.shape()
        )));
    }
    let mut out = Vec::with_capacity(n * c * th * tw);
    for plane in 0..n * c {
        for y in 0..th {
            let row = plane * h * w + (oy + y) * w + ox;
            out.extend_from_slice(&a.data()[row..row + tw]);
        }
    }
    Tensor::from_vec(Shape::new(n, c, th, tw), out)
}

/// Scatters a cropped gradient back into a zero tensor of the source shape.
pub fn crop_backward(source: Shape, upstream: &Tensor, oy: usize, ox: usize) -> Result<Tensor> {
    let [n, c, h, w] = source.0;
    let [un, uc, th, tw] = upstream.shape().0;
    if un != n || uc != c || oy + th > h || ox + tw > w {
        return Err(Error::shape(format!(
            "crop gradient {} at ({oy},{ox}) does not fit {source}",
            upstream.shape()
        )));
    }
    let mut dx = Tensor::zeros(source);
    let d = dx.data_mut();
    for plane in 0..n * c {
        for y in 0..th {
            let dst = plane * h * w + (oy + y) * w + ox;
            let src = (plane * th + y) * tw;
            d[dst..dst + tw].copy_from_slice(&upstream.data()[src..src + tw]);
        }
    }
    Ok(dx)
}
