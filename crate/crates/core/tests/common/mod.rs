//! Independent reference implementations used by the integration and acceptance tests.
#![allow(dead_code)]

use std::collections::HashSet;

use fcnseg::data::FoldPlan;
use fcnseg::Tensor;

/// `|a - n| / max(|a|, |n|, floor)`.
pub fn rel_err(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Central differences of `f` at `x` for the listed coordinates.
pub fn numeric_grad(mut f: impl FnMut(&[f64]) -> f64, x: &[f64], indices: &[usize], h: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    indices
        .iter()
        .map(|&i| {
            probe[i] = x[i] + h;
            let up = f(&probe);
            probe[i] = x[i] - h;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Direct seven-loop convolution.
pub fn naive_conv(x: &Tensor, w: &Tensor, b: &[f64], stride: usize, pad: usize) -> Tensor {
    let [n, c, h, wd] = x.shape().0;
    let [o, _, kh, kw] = w.shape().0;
    let oh = (h + 2 * pad - kh) / stride + 1;
    let ow = (wd + 2 * pad - kw) / stride + 1;
    let mut out = Tensor::zeros(fcnseg::Shape::new(n, o, oh, ow));
    for ni in 0..n {
        for oi in 0..o {
            for y in 0..oh {
                for xo in 0..ow {
                    let mut acc = b[oi];
                    for ci in 0..c {
                        for i in 0..kh {
                            for j in 0..kw {
                                let yy = (y * stride + i) as isize - pad as isize;
                                let xx = (xo * stride + j) as isize - pad as isize;
                                if yy >= 0 && xx >= 0 && (yy as usize) < h && (xx as usize) < wd {
                                    acc += w.at(oi, ci, i, j) * x.at(ni, ci, yy as usize, xx as usize);
                                }
                            }
                        }
                    }
                    out.set(ni, oi, y, xo, acc);
                }
            }
        }
    }
    out
}

/// Scatter form of the transposed convolution with weight `(in, out, k, k)`.
pub fn naive_deconv(x: &Tensor, w: &Tensor, stride: usize, pad: usize) -> Tensor {
    let [n, c, h, wd] = x.shape().0;
    let [_, o, k, _] = w.shape().0;
    let oh = (h - 1) * stride + k - 2 * pad;
    let ow = (wd - 1) * stride + k - 2 * pad;
    let mut out = Tensor::zeros(fcnseg::Shape::new(n, o, oh, ow));
    for ni in 0..n {
        for ci in 0..c {
            for y in 0..h {
                for xi in 0..wd {
                    let v = x.at(ni, ci, y, xi);
                    for oi in 0..o {
                        for i in 0..k {
                            for j in 0..k {
                                let yy = (y * stride + i) as isize - pad as isize;
                                let xx = (xi * stride + j) as isize - pad as isize;
                                if yy >= 0 && xx >= 0 && (yy as usize) < oh && (xx as usize) < ow {
                                    let cur = out.at(ni, oi, yy as usize, xx as usize);
                                    out.set(ni, oi, yy as usize, xx as usize, cur + v * w.at(ci, oi, i, j));
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

/// Per-pixel case analysis, independent of the set-algebra formulation.
pub fn oracle_confusion(pred: &[bool], gt: &[bool]) -> [u64; 4] {
    let mut c = [0u64; 4];
    for (&p, &g) in pred.iter().zip(gt) {
        let slot = match (p, g) {
            (true, true) => 0,
            (true, false) => 1,
            (false, true) => 2,
            (false, false) => 3,
        };
        c[slot] += 1;
    }
    c
}

/// `(sensitivity, specificity, dice, mcc)` for nondegenerate counts.
pub fn oracle_metrics([tp, fp, fn_, tn]: [u64; 4]) -> Option<[f64; 4]> {
    let (tp, fp, fn_, tn) = (tp as f64, fp as f64, fn_ as f64, tn as f64);
    let den = ((tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_)).sqrt();
    if tp + fn_ == 0.0 || tn + fp == 0.0 || den == 0.0 {
        return None;
    }
    Some([
        tp / (tp + fn_),
        tn / (tn + fp),
        2.0 * tp / (2.0 * tp + fp + fn_),
        (tp * tn - fp * fn_) / den,
    ])
}

/// Dice via set sizes: `2 |P and G| / (|P| + |G|)`.
pub fn dice_set_form(pred: &[bool], gt: &[bool]) -> f64 {
    let inter = pred.iter().zip(gt).filter(|(p, g)| **p && **g).count() as f64;
    let sp = pred.iter().filter(|p| **p).count() as f64;
    let sg = gt.iter().filter(|g| **g).count() as f64;
    2.0 * inter / (sp + sg)
}

/// Checks partition, coverage and 70/10/20 sizing of every fold; returns the first violation.
pub fn fold_plan_violation(plan: &FoldPlan, ids: &[String]) -> Option<String> {
    let n = ids.len();
    let all: HashSet<&String> = ids.iter().collect();
    if plan.folds.len() != 5 {
        return Some(format!("{} folds", plan.folds.len()));
    }
    let mut tested: Vec<&String> = Vec::new();
    for f in &plan.folds {
        let parts = [&f.train, &f.validation, &f.test];
        let total: usize = parts.iter().map(|p| p.len()).sum();
        let union: HashSet<&String> = parts.iter().flat_map(|p| p.iter()).collect();
        if total != n || union != all {
            return Some(format!("fold {} is not a partition", f.fold));
        }
        let t = f.test.len() as f64;
        if (t - n as f64 / 5.0).abs() >= 1.0 {
            return Some(format!("fold {} test size {}", f.fold, f.test.len()));
        }
        for (len, frac) in [(f.validation.len(), 0.1), (f.train.len(), 0.7)] {
            if (len as f64 - frac * n as f64).abs() > 1.0 + 1e-9 {
                return Some(format!("fold {} split size {len} vs {frac} of {n}", f.fold));
            }
        }
        tested.extend(f.test.iter());
    }
    let once: HashSet<&String> = tested.iter().copied().collect();
    if tested.len() != n || once != all {
        return Some("test shards do not cover every item exactly once".into());
    }
    None
}
