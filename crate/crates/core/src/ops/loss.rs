use crate::error::{Error, Result};
use crate::label::LabelImage;
use crate::tensor::Tensor;

/// Mean pixel-wise softmax cross-entropy over non-ignored pixels and its score gradient.
///
/// `labels` holds one image per batch entry. When every pixel is ignored the loss and
/// gradient are zero.
pub fn softmax_xent_pixelwise(
    scores: &Tensor,
    labels: &[LabelImage],
    ignore_index: u8,
) -> Result<(f64, Tensor)> {
    let [n, c, h, w] = scores.shape().0;
    if labels.len() != n {
        return Err(Error::shape(format!(
            "{} label images for score batch {}",
            labels.len(),
            scores.shape()
        )));
    }
    for l in labels {
        if (l.height(), l.width()) != (h, w) {
            return Err(Error::shape(format!(
                "label {}x{} does not match scores {}",
                l.width(),
                l.height(),
                scores.shape()
            )));
        }
        if let Some(&bad) = l
            .pixels()
            .iter()
            .find(|&&p| p as usize >= c && p != ignore_index)
        {
            return Err(Error::Data(format!(
                "label value {bad} is neither a class below {c} nor the ignore index {ignore_index}"
            )));
        }
    }

    let plane = h * w;
    let count: usize = labels
        .iter()
        .map(|l| l.pixels().iter().filter(|&&p| p != ignore_index).count())
        .sum();
    let mut grad = Tensor::zeros(scores.shape());
    if count == 0 {
        return Ok((0.0, grad));
    }
    let inv = 1.0 / count as f64;
    let s = scores.data();
    let g = grad.data_mut();
    let mut loss = 0.0;
    let mut probs = vec![0.0; c];
    for (b, l) in labels.iter().enumerate() {
        let base = b * c * plane;
        for (p, &label) in l.pixels().iter().enumerate() {
            if label == ignore_index {
                continue;
            }
            let mut arg = 0;
            for k in 1..c {
                if s[base + k * plane + p] > s[base + arg * plane + p] {
                    arg = k;
                }
            }
            let max = s[base + arg * plane + p];
            // z = 1 + rest, with rest summed separately so ln_1p keeps precision.
            let mut rest = 0.0;
            for (k, pr) in probs.iter_mut().enumerate() {
                *pr = (s[base + k * plane + p] - max).exp();
                if k != arg {
                    rest += *pr;
                }
            }
            let z = 1.0 + rest;
            let t = label as usize;
            loss += rest.ln_1p() - (s[base + t * plane + p] - max);
            for (k, pr) in probs.iter().enumerate() {
                let onehot = if k == t { 1.0 } else { 0.0 };
                g[base + k * plane + p] = (pr / z - onehot) * inv;
            }
        }
    }
    Ok((loss * inv, grad))
}
