//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits nonzero on any failure.
//!
//! Pass substrings as arguments to run a subset, e.g. `cargo test --test acceptance -- gradient`.

mod common;

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use fcnseg::arch::{build_model, predict_labels, FusionMode, LoadMode, ModelSpec, SegModel, Variant};
use fcnseg::data::{
    decode_paletted_png, encode_paletted_png, generate_samples, make_fold_plan, FoldPlan, Sample, SynthKind,
};
use fcnseg::label::{IGNORE_INDEX, NUM_CLASSES};
use fcnseg::metrics::{
    aggregate_folds, confusion, evaluate_split, metrics, region_masks, Region, RegionMask, SplitReport,
};
use fcnseg::ops::*;
use fcnseg::train::{lr_at, run_tier_plan, Stage, StageData, StageRole, TierPlan, TrainConfig, Trainer};
use fcnseg::{LabelImage, Shape, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::*;

const SEEDS: u64 = 20;
const FD_STEP: f64 = 1e-5;
const FD_FLOOR: f64 = 1e-6;
const LAYER_TOL: f64 = 1e-4;
const END_TO_END_TOL: f64 = 1e-3;
const GRADIENT_BUDGET: Duration = Duration::from_secs(120);
const DICE_FORM_TOL: f64 = 1e-12;
const FUSION_TOL: f64 = 1e-10;
const SHAPE_EXTENTS: [usize; 5] = [64, 96, 160, 224, 500];
const DESK_IMAGES: usize = 200;
const DESK_SIZE: usize = 64;
const DESK_WIDTH: f64 = 0.1;
const DESK_LR: f64 = 0.02;
const DESK_COMPLETE_DICE: f64 = 0.90;
const DESK_ULCER_DICE: f64 = 0.75;
const FOLD_BUDGET: Duration = Duration::from_secs(30 * 60);
const HEALTHY_IMAGES: usize = 30;
const HEALTHY_SPECIFICITY: f64 = 0.99;

struct Report {
    filters: Vec<String>,
    failures: usize,
    total: usize,
}

impl Report {
    fn wants(&self, suite: &str) -> bool {
        self.filters.is_empty() || self.filters.iter().any(|f| suite.contains(f.as_str()))
    }

    fn record(&mut self, name: &str, pass: bool, detail: impl AsRef<str>) {
        self.total += 1;
        if !pass {
            self.failures += 1;
        }
        println!("{} {name}: {}", if pass { "PASS" } else { "FAIL" }, detail.as_ref());
    }
}

fn randn(rng: &mut ChaCha8Rng, shape: Shape) -> Tensor {
    Tensor::randn(shape, 1.0, rng)
}

fn project(t: &Tensor, r: &Tensor) -> f64 {
    t.dot(r).unwrap()
}

fn max_rel(analytic: &[f64], numeric: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| rel_err(*a, *n, FD_FLOOR))
        .fold(0.0, f64::max)
}

fn all_indices(n: usize) -> Vec<usize> {
    (0..n).collect()
}

/// Worst relative error per layer over all seeds.
fn layer_gradients(seed: u64, worst: &mut BTreeMap<&'static str, f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut note = |k: &'static str, v: f64| {
        let e = worst.entry(k).or_insert(0.0);
        *e = e.max(v);
    };

    // Convolution: input, kernel and bias.
    let (ci, co) = (rng.gen_range(1..4), rng.gen_range(1..4));
    let k = [1, 3, 5][rng.gen_range(0..3)];
    let (stride, pad) = (rng.gen_range(1..3), rng.gen_range(0..3));
    let batch = rng.gen_range(1..3);
    let x = randn(&mut rng, Shape::new(batch, ci, 7, 6));
    let spec = ConvSpec::new(
        randn(&mut rng, Shape::new(co, ci, k, k)),
        (0..co).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        stride,
        pad,
    )
    .unwrap();
    let out = conv2d_forward(&x, &spec).unwrap();
    let oracle = naive_conv(&x, &spec.weight, &spec.bias, stride, pad);
    note("conv forward vs loop oracle", out.max_abs_diff(&oracle));
    let r = randn(&mut rng, out.shape());
    let g = conv2d_backward(&x, &spec, &r).unwrap();
    let n = numeric_grad(
        |v| project(&conv2d_forward(&Tensor::from_vec(x.shape(), v.to_vec()).unwrap(), &spec).unwrap(), &r),
        x.data(),
        &all_indices(x.data().len()),
        FD_STEP,
    );
    note("conv", max_rel(g.input.data(), &n));
    let n = numeric_grad(
        |v| {
            let mut s = spec.clone();
            s.weight = Tensor::from_vec(s.weight.shape(), v.to_vec()).unwrap();
            project(&conv2d_forward(&x, &s).unwrap(), &r)
        },
        spec.weight.data(),
        &all_indices(spec.weight.data().len()),
        FD_STEP,
    );
    note("conv", max_rel(g.kernel.data(), &n));
    let n = numeric_grad(
        |v| {
            let mut s = spec.clone();
            s.bias = v.to_vec();
            project(&conv2d_forward(&x, &s).unwrap(), &r)
        },
        &spec.bias,
        &all_indices(co),
        FD_STEP,
    );
    note("conv", max_rel(&g.bias, &n));

    // Transposed convolution with a random (non-bilinear) kernel.
    let factor = rng.gen_range(2..4);
    let mut up = UpsampleSpec::bilinear(2, factor).unwrap();
    up.weight = randn(&mut rng, up.weight.shape());
    let x = randn(&mut rng, Shape::new(1, 2, 3, 4));
    let out = deconv2d_forward(&x, &up).unwrap();
    note(
        "deconv forward vs scatter oracle",
        out.max_abs_diff(&naive_deconv(&x, &up.weight, up.factor, up.pad)),
    );
    let r = randn(&mut rng, out.shape());
    let g = deconv2d_backward(&x, &up, &r).unwrap();
    let n = numeric_grad(
        |v| project(&deconv2d_forward(&Tensor::from_vec(x.shape(), v.to_vec()).unwrap(), &up).unwrap(), &r),
        x.data(),
        &all_indices(x.data().len()),
        FD_STEP,
    );
    note("deconv", max_rel(g.input.data(), &n));
    let n = numeric_grad(
        |v| {
            let mut s = up.clone();
            s.weight = Tensor::from_vec(s.weight.shape(), v.to_vec()).unwrap();
            project(&deconv2d_forward(&x, &s).unwrap(), &r)
        },
        up.weight.data(),
        &all_indices(up.weight.data().len()),
        FD_STEP,
    );
    note("deconv", max_rel(g.kernel.data(), &n));

    // Max pooling.
    let (pk, ps) = [(2, 2), (3, 2), (2, 1)][rng.gen_range(0..3)];
    let x = randn(&mut rng, Shape::new(1, 2, 7, 7));
    let p = maxpool2d_forward(&x, pk, ps).unwrap();
    let r = randn(&mut rng, p.output.shape());
    let gx = maxpool2d_backward(x.shape(), &p.argmax, &r).unwrap();
    let n = numeric_grad(
        |v| {
            let t = Tensor::from_vec(x.shape(), v.to_vec()).unwrap();
            project(&maxpool2d_forward(&t, pk, ps).unwrap().output, &r)
        },
        x.data(),
        &all_indices(x.data().len()),
        FD_STEP,
    );
    note("maxpool", max_rel(gx.data(), &n));

    // Crop.
    let x = randn(&mut rng, Shape::new(1, 2, 9, 8));
    let (oy, ox) = (rng.gen_range(0..5), rng.gen_range(0..5));
    let c = crop(&x, 5, 4, oy, ox).unwrap();
    let r = randn(&mut rng, c.shape());
    let gx = crop_backward(x.shape(), &r, oy, ox).unwrap();
    let n = numeric_grad(
        |v| project(&crop(&Tensor::from_vec(x.shape(), v.to_vec()).unwrap(), 5, 4, oy, ox).unwrap(), &r),
        x.data(),
        &all_indices(x.data().len()),
        FD_STEP,
    );
    note("crop", max_rel(gx.data(), &n));

    // Pixel-wise softmax cross-entropy, with some ignored pixels.
    let scores = randn(&mut rng, Shape::new(2, 3, 4, 5));
    let labels: Vec<LabelImage> = (0..2)
        .map(|_| {
            let px = (0..20)
                .map(|_| if rng.gen_bool(0.1) { IGNORE_INDEX } else { rng.gen_range(0..3) })
                .collect();
            LabelImage::from_pixels(5, 4, px).unwrap()
        })
        .collect();
    let (_, g) = softmax_xent_pixelwise(&scores, &labels, IGNORE_INDEX).unwrap();
    let n = numeric_grad(
        |v| {
            let s = Tensor::from_vec(scores.shape(), v.to_vec()).unwrap();
            softmax_xent_pixelwise(&s, &labels, IGNORE_INDEX).unwrap().0
        },
        scores.data(),
        &all_indices(scores.data().len()),
        FD_STEP,
    );
    note("softmax cross-entropy", max_rel(g.data(), &n));
}

fn model_loss(model: &SegModel, image: &Tensor, labels: &[LabelImage]) -> f64 {
    let s = model.forward(image).unwrap();
    softmax_xent_pixelwise(&s, labels, IGNORE_INDEX).unwrap().0
}

/// Central differences at `h` and `h / 2` disagreeing means a ReLU or max-pool switch lies
/// inside the probe interval. The step then shrinks tenfold, twice, before the coordinate
/// is redrawn.
const KINK_TOL: f64 = 1e-4;
const KINK_RETRIES: usize = 8;

/// Random coordinates of every trainable parameter tensor of a toy model.
/// Returns the worst relative error and the number of probes rejected as kinks.
fn end_to_end_gradient(seed: u64) -> (Variant, f64, usize) {
    let variant = Variant::ALL[seed as usize % 4];
    let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
    let mut model = build_model(ModelSpec::new(variant, NUM_CLASSES, 0.05), seed).unwrap();
    // Nonzero skip scores so the fusion paths carry gradient.
    for name in ["score_pool4", "score_pool3"] {
        if let Some(c) = model.conv_mut(name) {
            c.weight = Tensor::randn(c.weight.shape(), 0.1, &mut rng);
        }
    }
    // Zero biases put padding-only activations exactly on the ReLU kink.
    for p in model.params_mut() {
        if p.name.ends_with(".bias") {
            p.data.iter_mut().for_each(|b| *b = rng.gen_range(-0.1..0.1));
        }
    }
    let image = Tensor::randn(Shape::new(1, 3, 32, 32), 0.5, &mut rng);
    let labels = vec![LabelImage::from_pixels(32, 32, (0..1024).map(|_| rng.gen_range(0..3)).collect()).unwrap()];
    let trace = model.trace(&image, FusionMode::Full, None).unwrap();
    let (_, dscore) = softmax_xent_pixelwise(trace.output(), &labels, IGNORE_INDEX).unwrap();
    let grads = model.backward(&trace, &dscore).unwrap();
    drop(trace);

    let trainable: Vec<(usize, usize, String)> = model
        .params_mut()
        .iter()
        .enumerate()
        .filter(|(_, p)| p.trainable)
        .map(|(i, p)| (i, p.data.len(), p.name.clone()))
        .collect();
    let (mut worst, mut kinks) = (0.0f64, 0);
    for (pi, len, name) in trainable {
        let mut err = f64::INFINITY;
        for _ in 0..KINK_RETRIES {
            let j = rng.gen_range(0..len);
            let orig = model.params_mut()[pi].data[j];
            let mut eval = |v: f64| {
                model.params_mut()[pi].data[j] = v;
                model_loss(&model, &image, &labels)
            };
            let central = |eval: &mut dyn FnMut(f64) -> f64, h: f64| (eval(orig + h) - eval(orig - h)) / (2.0 * h);
            let mut numeric = None;
            for h in [FD_STEP, FD_STEP / 10.0, FD_STEP / 100.0] {
                let (wide, narrow) = (central(&mut eval, h), central(&mut eval, h / 2.0));
                if rel_err(wide, narrow, FD_FLOOR) <= KINK_TOL {
                    numeric = Some(wide);
                    break;
                }
                kinks += 1;
            }
            eval(orig);
            if let Some(n) = numeric {
                err = rel_err(grads.0[pi][j], n, FD_FLOOR);
                break;
            }
        }
        if err > END_TO_END_TOL {
            println!("  {variant} seed {seed}: {name} rel err {err:.2e}");
        }
        worst = worst.max(err);
    }
    (variant, worst, kinks)
}

fn gradient_suite(rep: &mut Report) {
    let t0 = Instant::now();
    let mut worst = BTreeMap::new();
    for seed in 0..SEEDS {
        layer_gradients(seed, &mut worst);
    }
    for (name, err) in &worst {
        if name.contains("oracle") {
            rep.record(
                &format!("gradient/{name}"),
                *err <= 1e-12,
                format!("max abs diff {err:.2e} over {SEEDS} seeds (tol 1e-12)"),
            );
        } else {
            rep.record(
                &format!("gradient/{name}"),
                *err <= LAYER_TOL,
                format!("max rel err {err:.2e} over {SEEDS} seeds (tol {LAYER_TOL:.0e})"),
            );
        }
    }
    let (mut e2e, mut kinks) = (0.0f64, 0);
    let mut by_variant = BTreeMap::new();
    for seed in 0..SEEDS {
        let (v, err, k) = end_to_end_gradient(seed);
        kinks += k;
        e2e = e2e.max(err);
        let w = by_variant.entry(v.name()).or_insert(0.0f64);
        *w = w.max(err);
    }
    rep.record(
        "gradient/end-to-end toy FCN",
        e2e <= END_TO_END_TOL,
        format!(
            "max rel err {e2e:.2e} over {SEEDS} seeds (tol {END_TO_END_TOL:.0e}), {kinks} kink probes refined; per variant {by_variant:?}"
        ),
    );
    let took = t0.elapsed();
    rep.record(
        "gradient/runtime",
        took <= GRADIENT_BUDGET,
        format!("{:.1}s (budget {}s)", took.as_secs_f64(), GRADIENT_BUDGET.as_secs()),
    );
}

fn random_mask(rng: &mut ChaCha8Rng, n: usize, density: f64) -> Vec<bool> {
    (0..n).map(|_| rng.gen_bool(density)).collect()
}

fn oracle_suite(rep: &mut Report) {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let (mut count_miss, mut metric_miss, mut degenerate) = (0, 0, 0);
    let mut dice_gap: f64 = 0.0;
    for i in 0..1000 {
        let (w, h) = (rng.gen_range(1..40), rng.gen_range(1..40));
        let n = w * h;
        let (dp, dg) = match i % 5 {
            0 => (0.0, rng.gen_range(0.0..1.0)),
            1 => (rng.gen_range(0.0..1.0), 1.0),
            _ => (rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)),
        };
        let p = random_mask(&mut rng, n, dp);
        let g = random_mask(&mut rng, n, dg);
        let mk = |mask: Vec<bool>| RegionMask {
            width: w,
            height: h,
            region: Region::Ulcer,
            mask,
        };
        let c = confusion(&mk(p.clone()), &mk(g.clone())).unwrap();
        let o = oracle_confusion(&p, &g);
        if [c.tp, c.fp, c.fn_, c.tn] != o || c.universe() != n as u64 {
            count_miss += 1;
        }
        let m = metrics(&c);
        match oracle_metrics(o) {
            Some([sens, spec, dice, mcc]) => {
                if [m.sensitivity, m.specificity, m.dice, m.mcc] != [sens, spec, dice, mcc] || m.flags.any() {
                    metric_miss += 1;
                }
                dice_gap = dice_gap.max((m.dice - dice_set_form(&p, &g)).abs());
            }
            None => {
                degenerate += 1;
                if !m.flags.any() {
                    metric_miss += 1;
                }
            }
        }
    }
    rep.record(
        "oracle/confusion counts",
        count_miss == 0,
        format!("{count_miss} mismatches vs pixel-loop oracle on 1000 mask pairs"),
    );
    rep.record(
        "oracle/metrics",
        metric_miss == 0,
        format!("{metric_miss} mismatches vs direct formulas ({degenerate} degenerate pairs checked for flags)"),
    );
    rep.record(
        "oracle/dice algebraic forms",
        dice_gap <= DICE_FORM_TOL,
        format!("max |2TP/(2TP+FP+FN) - 2|P&G|/(|P|+|G|)| = {dice_gap:.2e} (tol {DICE_FORM_TOL:.0e})"),
    );

    let mut union_miss = 0;
    for _ in 0..100 {
        let (w, h) = (rng.gen_range(1..30), rng.gen_range(1..30));
        let l = LabelImage::from_pixels(w, h, (0..w * h).map(|_| rng.gen_range(0..3)).collect()).unwrap();
        let [u, s, c] = region_masks(&l);
        let ok = (0..w * h).all(|i| c.mask[i] == (u.mask[i] || s.mask[i]) && !(u.mask[i] && s.mask[i]));
        union_miss += usize::from(!ok);
    }
    rep.record(
        "oracle/complete region is the union",
        union_miss == 0,
        format!("{union_miss} of 100 random labels violate complete = ulcer OR skin"),
    );
}

fn shape_fusion_suite(rep: &mut Report) {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut bad = Vec::new();
    let mut checked = 0;
    for v in Variant::ALL {
        let model = build_model(ModelSpec::new(v, NUM_CLASSES, 0.05), 1).unwrap();
        for &h in &SHAPE_EXTENTS {
            for &w in &SHAPE_EXTENTS {
                let x = Tensor::randn(Shape::new(1, 3, h, w), 0.5, &mut rng);
                match model.forward(&x) {
                    Ok(s) if s.shape() == Shape::new(1, NUM_CLASSES, h, w) => {}
                    Ok(s) => bad.push(format!("{v} {h}x{w} -> {}", s.shape())),
                    Err(e) => bad.push(format!("{v} {h}x{w}: {e}")),
                }
                checked += 1;
            }
        }
    }
    rep.record(
        "shape/output extent equals input extent",
        bad.is_empty(),
        format!("{checked} variant x extent combinations; failures {bad:?}"),
    );

    let (mut additivity, mut zero_gap) = (0.0f64, 0.0f64);
    for v in [Variant::Fcn16s, Variant::Fcn8s] {
        for (h, w) in [(64, 64), (96, 160)] {
            let mut model = build_model(ModelSpec::new(v, NUM_CLASSES, 0.05), 2).unwrap();
            let x = Tensor::randn(Shape::new(1, 3, h, w), 0.5, &mut rng);
            let full = model.forward_with(&x, FusionMode::Full).unwrap();
            let main = model.forward_with(&x, FusionMode::MainOnly).unwrap();
            zero_gap = zero_gap.max(full.max_abs_diff(&main));
            for name in ["score_pool4", "score_pool3"] {
                if let Some(c) = model.conv_mut(name) {
                    c.weight = Tensor::randn(c.weight.shape(), 0.1, &mut rng);
                    c.bias = (0..c.bias.len()).map(|_| rng.gen_range(-0.1..0.1)).collect();
                }
            }
            let full = model.forward_with(&x, FusionMode::Full).unwrap();
            let main = model.forward_with(&x, FusionMode::MainOnly).unwrap();
            let skip = model.forward_with(&x, FusionMode::SkipOnly).unwrap();
            let mut sum = main.clone();
            for (a, b) in sum.data_mut().iter_mut().zip(skip.data()) {
                *a += b;
            }
            additivity = additivity.max(full.max_abs_diff(&sum));
        }
    }
    rep.record(
        "fusion/additivity",
        additivity <= FUSION_TOL,
        format!("max |full - (main + skip)| = {additivity:.2e} (tol {FUSION_TOL:.0e}) for FCN-16s/8s"),
    );
    rep.record(
        "fusion/zeroed skip scores",
        zero_gap == 0.0,
        format!("max |full - main-only| with zero skip scores = {zero_gap:e} (must be exactly 0)"),
    );
}

fn schedule_check(rep: &mut Report) {
    let c = TrainConfig::default();
    let seq: Vec<f64> = (0..60).map(|e| lr_at(&c, e).unwrap()).collect();
    let want: Vec<f64> = [1e-4, 1e-5, 1e-6].iter().flat_map(|&r| std::iter::repeat(r).take(20)).collect();
    rep.record(
        "schedule/60-epoch step policy",
        seq == want,
        format!("drops after epochs {:?}", drops(&seq)),
    );
}

fn drops(seq: &[f64]) -> Vec<usize> {
    (1..seq.len()).filter(|&i| seq[i] != seq[i - 1]).collect()
}

fn format_suite(rep: &mut Report) {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut mismatch = 0;
    for _ in 0..100 {
        let (w, h) = (rng.gen_range(1..80), rng.gen_range(1..80));
        let px = (0..w * h)
            .map(|_| if rng.gen_bool(0.05) { IGNORE_INDEX } else { rng.gen_range(0..3) })
            .collect();
        let l = LabelImage::from_pixels(w, h, px).unwrap();
        let bytes = encode_paletted_png(&l).unwrap();
        let back = decode_paletted_png(&bytes).unwrap();
        let again = encode_paletted_png(&back).unwrap();
        mismatch += usize::from(back != l || again != bytes);
    }
    rep.record(
        "format/paletted PNG round-trip",
        mismatch == 0,
        format!("{mismatch} of 100 random labels not bit-exact"),
    );

    let mut sizes: Vec<usize> = (10..=40).collect();
    let mut s = 40.0f64;
    while s < 10000.0 {
        s *= 1.25;
        sizes.push((s as usize).min(10000));
    }
    sizes.extend([599, 600, 601, 9999, 10000]);
    sizes.sort_unstable();
    sizes.dedup();
    let mut violations = Vec::new();
    for &n in &sizes {
        let ids: Vec<String> = (0..n).map(|i| format!("img{i:05}")).collect();
        let plan = make_fold_plan(&ids, n as u64).unwrap();
        if let Some(v) = fold_plan_violation(&plan, &ids) {
            violations.push(format!("n={n}: {v}"));
        }
    }
    rep.record(
        "format/fold plan invariants",
        violations.is_empty(),
        format!("{} sizes in 10..=10000; violations {violations:?}", sizes.len()),
    );
    let ids: Vec<String> = (0..600).map(|i| format!("dfu{i:03}")).collect();
    let plan = make_fold_plan(&ids, 0).unwrap();
    let split: Vec<(usize, usize, usize)> = plan
        .folds
        .iter()
        .map(|f| (f.train.len(), f.validation.len(), f.test.len()))
        .collect();
    rep.record(
        "format/600-item plan",
        split.iter().all(|&s| s == (420, 60, 120)),
        format!("train/val/test per fold {split:?}"),
    );
}

fn select(all: &[Sample], ids: &[String]) -> Vec<Sample> {
    let by_id: BTreeMap<&str, &Sample> = all.iter().map(|s| (s.id.as_str(), s)).collect();
    ids.iter().map(|id| by_id[id.as_str()].clone()).collect()
}

fn predict(model: &SegModel, split: &[Sample]) -> Vec<(String, LabelImage)> {
    split
        .iter()
        .map(|s| (s.id.clone(), predict_labels(&model.forward(&s.image).unwrap()).unwrap()))
        .collect()
}

fn score(model: &SegModel, split: &[Sample]) -> SplitReport {
    let gt: Vec<(String, LabelImage)> = split.iter().map(|s| (s.id.clone(), s.label.clone())).collect();
    evaluate_split(&predict(model, split), &gt).unwrap()
}

fn desk_scale(rep: &mut Report) -> Vec<SegModel> {
    let data = generate_samples(SynthKind::Ulcer, DESK_IMAGES, DESK_SIZE, 2024, "desk");
    let ids: Vec<String> = data.iter().map(|s| s.id.clone()).collect();
    let plan: FoldPlan = make_fold_plan(&ids, 2024).unwrap();
    let spec = ModelSpec::new(Variant::Fcn8s, NUM_CLASSES, DESK_WIDTH);
    let mut reports = Vec::new();
    let mut models = Vec::new();
    let mut slowest = Duration::ZERO;
    for fold in &plan.folds {
        let t0 = Instant::now();
        let k = fold.fold as u64;
        let config = TrainConfig {
            base_lr: DESK_LR,
            seed: k,
            ..TrainConfig::default()
        };
        let model = build_model(spec, k).unwrap();
        let fit = Trainer::new(model, config)
            .unwrap()
            .fit(&select(&data, &fold.train), &select(&data, &fold.validation), "desk")
            .unwrap();
        let r = score(&fit.model, &select(&data, &fold.test));
        let took = t0.elapsed();
        slowest = slowest.max(took);
        println!(
            "  fold {k}: dice complete {:.4} ulcer {:.4} skin {:.4}, final val loss {:.4}, {:.0}s",
            r.region(Region::Complete).dice.mean,
            r.region(Region::Ulcer).dice.mean,
            r.region(Region::SurroundingSkin).dice.mean,
            fit.logs.last().unwrap().val_loss,
            took.as_secs_f64()
        );
        reports.push(r);
        models.push(fit.model);
    }
    let agg = aggregate_folds(&reports);
    let complete = agg.per_image.region(Region::Complete).dice;
    let ulcer = agg.per_image.region(Region::Ulcer).dice;
    let skin = agg.per_image.region(Region::SurroundingSkin).dice;
    rep.record(
        "desk-scale/complete-region Dice",
        complete.mean >= DESK_COMPLETE_DICE,
        format!(
            "{:.4} (±{:.4}) over {} held-out images (min {DESK_COMPLETE_DICE})",
            complete.mean, complete.std, complete.n
        ),
    );
    rep.record(
        "desk-scale/ulcer-region Dice",
        ulcer.mean >= DESK_ULCER_DICE,
        format!("{:.4} (±{:.4}) (min {DESK_ULCER_DICE}); surrounding skin {:.4}", ulcer.mean, ulcer.std, skin.mean),
    );
    rep.record(
        "desk-scale/runtime per fold",
        slowest <= FOLD_BUDGET,
        format!("slowest fold {:.0}s (budget {}s)", slowest.as_secs_f64(), FOLD_BUDGET.as_secs()),
    );
    models
}

fn healthy_audit(rep: &mut Report, models: &[SegModel]) {
    let healthy = generate_samples(SynthKind::Healthy, HEALTHY_IMAGES, DESK_SIZE, 4242, "healthy");
    let mut worst = f64::INFINITY;
    let mut per_region = BTreeMap::new();
    for m in models {
        let r = score(m, &healthy);
        for s in &r.summary {
            let e = per_region.entry(s.region.name()).or_insert(f64::INFINITY);
            *e = e.min(s.specificity.mean);
            worst = worst.min(s.specificity.mean);
        }
    }
    rep.record(
        "healthy audit/specificity",
        worst >= HEALTHY_SPECIFICITY,
        format!(
            "min mean specificity {worst:.4} over {} fold models x {HEALTHY_IMAGES} images (min {HEALTHY_SPECIFICITY}); by region {per_region:?}",
            models.len()
        ),
    );
}

fn transfer_check(rep: &mut Report) {
    let target = generate_samples(SynthKind::Ulcer, 50, DESK_SIZE, 11, "target");
    let objects = generate_samples(SynthKind::Objects, 100, DESK_SIZE, 12, "object");
    let ids: Vec<String> = target.iter().map(|s| s.id.clone()).collect();
    let plan = make_fold_plan(&ids, 3).unwrap();
    let spec = ModelSpec::new(Variant::Fcn8s, NUM_CLASSES, DESK_WIDTH);
    let pretrain = TrainConfig {
        epochs: 15,
        base_lr: 0.01,
        seed: 0,
        ..TrainConfig::default()
    };
    let mut wins = 0;
    let mut rows = Vec::new();
    for fold in &plan.folds {
        let fine_tune = TrainConfig {
            epochs: 8,
            base_lr: 0.01,
            seed: fold.fold as u64,
            ..TrainConfig::default()
        };
        let mut datasets = BTreeMap::new();
        datasets.insert(
            "target".to_string(),
            StageData {
                train: select(&target, &fold.train),
                val: select(&target, &fold.validation),
            },
        );
        datasets.insert(
            "objects".to_string(),
            StageData {
                train: objects[..80].to_vec(),
                val: objects[80..].to_vec(),
            },
        );
        let scratch = run_tier_plan(&TierPlan::single("target", fine_tune), spec, &datasets).unwrap();
        let two_stage = TierPlan {
            initial: None,
            stages: vec![
                Stage {
                    name: "tier-2 objects".into(),
                    role: StageRole::Tier2Segmentation,
                    dataset: "objects".into(),
                    from_previous: false,
                    load_mode: LoadMode::Compatible,
                    num_classes: None,
                    config: pretrain,
                },
                Stage {
                    name: "fine-tune".into(),
                    role: StageRole::TargetFineTune,
                    dataset: "target".into(),
                    from_previous: true,
                    load_mode: LoadMode::Compatible,
                    num_classes: None,
                    config: fine_tune,
                },
            ],
        };
        let transfer = run_tier_plan(&two_stage, spec, &datasets).unwrap();
        let final_loss = |o: &fcnseg::train::TierOutcome| o.stages.last().unwrap().logs.last().unwrap().val_loss;
        let (a, b) = (final_loss(&scratch), final_loss(&transfer));
        wins += usize::from(b < a);
        rows.push(format!("{a:.3}->{b:.3}"));
    }
    rep.record(
        "transfer/two-stage beats from-scratch",
        wins >= 4,
        format!("{wins}/5 folds lower final val loss (need 4); scratch->transfer {rows:?}"),
    );
}

fn main() {
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut rep = Report {
        filters,
        failures: 0,
        total: 0,
    };
    let t0 = Instant::now();
    if rep.wants("gradient") {
        gradient_suite(&mut rep);
    }
    if rep.wants("oracle") {
        oracle_suite(&mut rep);
    }
    if rep.wants("shape fusion") {
        shape_fusion_suite(&mut rep);
    }
    if rep.wants("schedule") {
        schedule_check(&mut rep);
    }
    if rep.wants("format") {
        format_suite(&mut rep);
    }
    if rep.wants("desk-scale healthy") {
        let models = desk_scale(&mut rep);
        healthy_audit(&mut rep, &models);
    }
    if rep.wants("transfer") {
        transfer_check(&mut rep);
    }
    println!(
        "acceptance: {} passed, {} failed ({:.0}s)",
        rep.total - rep.failures,
        rep.failures,
        t0.elapsed().as_secs_f64()
    );
    if rep.failures > 0 {
        std::process::exit(1);
    }
}
