//! Synthetic desk-scale datasets.
//!
//! Every sample draws from its own RNG stream (`seed`, sample index), so the first `k`
//! samples of a dataset do not depend on how many are generated.

use std::f64::consts::TAU;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::image::RgbImage;
use super::Sample;
use crate::label::{LabelImage, BACKGROUND, SURROUNDING_SKIN, ULCER};
use crate::tensor::Tensor;

/// Ulcer area bounds as a fraction of the image.
pub const ULCER_FRACTION_RANGE: (f64, f64) = (0.005, 0.15);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SynthKind {
    /// Foot with an ulcer enclosed by a ring of surrounding skin.
    Ulcer,
    /// Foot without lesions; all-background labels.
    Healthy,
    /// Generic object-with-rim scenes in random colours (segmentation pre-training).
    Objects,
    /// Whole-image texture classes; every pixel carries the image's class.
    Textures { classes: u8 },
}

fn sample_rng(seed: u64, index: usize, kind: SynthKind) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let stream = match kind {
        SynthKind::Ulcer | SynthKind::Healthy => 1,
        SynthKind::Objects => 2,
        SynthKind::Textures { .. } => 3,
    };
    rng.set_stream((stream << 32) | index as u64);
    rng
}

/// Generates `count` images of `image_size x image_size` pixels.
pub fn generate(kind: SynthKind, count: usize, image_size: usize, seed: u64) -> Vec<(RgbImage, LabelImage)> {
    (0..count)
        .map(|i| {
            let mut rng = sample_rng(seed, i, kind);
            match kind {
                SynthKind::Ulcer => foot_scene(&mut rng, image_size, true),
                SynthKind::Healthy => foot_scene(&mut rng, image_size, false),
                SynthKind::Objects => object_scene(&mut rng, image_size),
                SynthKind::Textures { classes } => texture_scene(&mut rng, image_size, classes),
            }
        })
        .collect()
}

/// Ulcer images and labels as network-ready tensors.
pub fn generate_synthetic_dataset(count: usize, image_size: usize, seed: u64) -> (Vec<Tensor>, Vec<LabelImage>) {
    generate(SynthKind::Ulcer, count, image_size, seed)
        .into_iter()
        .map(|(img, label)| (img.to_tensor(), label))
        .unzip()
}

/// Like [`generate`] but packaged as [`Sample`]s with ids `{prefix}{index:05}`.
pub fn generate_samples(kind: SynthKind, count: usize, image_size: usize, seed: u64, prefix: &str) -> Vec<Sample> {
    generate(kind, count, image_size, seed)
        .into_iter()
        .enumerate()
        .map(|(i, (img, label))| Sample {
            id: format!("{prefix}{i:05}"),
            image: img.to_tensor(),
            label,
            healthy: kind == SynthKind::Healthy,
        })
        .collect()
}

fn jitter<R: Rng>(rng: &mut R, base: [f64; 3], spread: f64) -> [f64; 3] {
    base.map(|c| (c + rng.gen_range(-spread..=spread)).clamp(0.0, 255.0))
}

fn mix(a: [f64; 3], b: [f64; 3], t: f64) -> [f64; 3] {
    [0, 1, 2].map(|k| a[k] * (1.0 - t) + b[k] * t)
}

/// Star-shaped outline `r(theta) = r0 (1 + sum a_k cos(k theta + phi_k))`.
#[derive(Debug, Clone)]
struct Outline {
    r0: f64,
    harmonics: Vec<(f64, f64, f64)>,
}

impl Outline {
    fn random<R: Rng>(rng: &mut R, r0: f64, max_amp: f64) -> Self {
        let harmonics = (2..=4)
            .map(|k| (k as f64, rng.gen_range(0.0..max_amp), rng.gen_range(0.0..TAU)))
            .collect();
        Outline { r0, harmonics }
    }

    fn radius(&self, theta: f64) -> f64 {
        self.r0
            * (1.0
                + self
                    .harmonics
                    .iter()
                    .map(|(k, a, p)| a * (k * theta + p).cos())
                    .sum::<f64>())
    }

    fn max_radius(&self) -> f64 {
        self.r0 * (1.0 + self.harmonics.iter().map(|h| h.1).sum::<f64>())
    }
}

struct Canvas {
    size: usize,
    rgb: Vec<[f64; 3]>,
}

impl Canvas {
    fn new(size: usize) -> Self {
        Canvas {
            size,
            rgb: vec![[0.0; 3]; size * size],
        }
    }

    fn add_noise<R: Rng>(&mut self, rng: &mut R, sigma: f64) {
        let n = Normal::new(0.0, sigma).expect("positive sigma");
        for px in &mut self.rgb {
            for c in px.iter_mut() {
                *c += n.sample(rng);
            }
        }
    }

    fn into_image(self) -> RgbImage {
        let mut img = RgbImage::new(self.size, self.size);
        for (i, px) in self.rgb.iter().enumerate() {
            img.data[i * 3..i * 3 + 3].copy_from_slice(&px.map(|c| c.round().clamp(0.0, 255.0) as u8));
        }
        img
    }
}

fn background<R: Rng>(rng: &mut R, canvas: &mut Canvas) {
    let size = canvas.size as f64;
    let base = [
        rng.gen_range(20.0..110.0),
        rng.gen_range(20.0..110.0),
        rng.gen_range(30.0..130.0),
    ];
    let grad = [rng.gen_range(-40.0..40.0), rng.gen_range(-40.0..40.0)];
    for y in 0..canvas.size {
        for x in 0..canvas.size {
            let t = (grad[0] * x as f64 + grad[1] * y as f64) / size;
            canvas.rgb[y * canvas.size + x] = base.map(|c| c + t);
        }
    }
}

/// Paints a rotated, slightly irregular foot-shaped ellipse; returns its centre and radii.
fn paint_foot<R: Rng>(rng: &mut R, canvas: &mut Canvas) -> ([f64; 2], [f64; 2], f64, [f64; 3]) {
    let s = canvas.size as f64;
    let center = [s * rng.gen_range(0.42..0.58), s * rng.gen_range(0.42..0.58)];
    let radii = [s * rng.gen_range(0.36..0.5), s * rng.gen_range(0.26..0.4)];
    let angle = rng.gen_range(0.0..TAU);
    let brightness = rng.gen_range(0.8..1.08);
    let tone = jitter(rng, [212.0 * brightness, 165.0 * brightness, 135.0 * brightness], 8.0);
    let shade = rng.gen_range(0.1..0.3);
    let (sin, cos) = angle.sin_cos();
    for y in 0..canvas.size {
        for x in 0..canvas.size {
            let dx = x as f64 + 0.5 - center[0];
            let dy = y as f64 + 0.5 - center[1];
            let u = (dx * cos + dy * sin) / radii[0];
            let v = (-dx * sin + dy * cos) / radii[1];
            let r2 = u * u + v * v;
            if r2 <= 1.0 {
                // Darken toward the silhouette edge.
                let f = 1.0 - shade * r2;
                canvas.rgb[y * canvas.size + x] = tone.map(|c| c * f);
            }
        }
    }
    (center, radii, angle, tone)
}

fn foot_scene<R: Rng>(rng: &mut R, size: usize, with_ulcer: bool) -> (RgbImage, LabelImage) {
    loop {
        let mut canvas = Canvas::new(size);
        background(rng, &mut canvas);
        let (foot_c, foot_r, _, tone) = paint_foot(rng, &mut canvas);
        let mut label = LabelImage::new(size, size);
        if with_ulcer && !paint_ulcer(rng, &mut canvas, &mut label, foot_c, foot_r, tone) {
            continue;
        }
        canvas.add_noise(rng, 5.0);
        return (canvas.into_image(), label);
    }
}

/// Returns false when the drawn ulcer falls outside the allowed area range.
fn paint_ulcer<R: Rng>(
    rng: &mut R,
    canvas: &mut Canvas,
    label: &mut LabelImage,
    foot_c: [f64; 2],
    foot_r: [f64; 2],
    tone: [f64; 3],
) -> bool {
    let s = canvas.size as f64;
    let r0 = s * rng.gen_range(0.07..0.16);
    let ulcer = Outline::random(rng, r0, 0.1);
    let ring_width = (r0 * rng.gen_range(0.35..0.7)).max(2.5);
    let ring = Outline::random(rng, ring_width, 0.25);
    let reach = ulcer.max_radius() + ring.max_radius() + 2.0;
    if 2.0 * reach >= s {
        return false;
    }
    let spread = [foot_r[0].min(foot_r[1]) * 0.5, foot_r[0].min(foot_r[1]) * 0.5];
    let cx = (foot_c[0] + rng.gen_range(-spread[0]..=spread[0])).clamp(reach, s - reach);
    let cy = (foot_c[1] + rng.gen_range(-spread[1]..=spread[1])).clamp(reach, s - reach);

    let wound = jitter(rng, [175.0, 48.0, 45.0], 25.0);
    let slough = jitter(rng, [205.0, 180.0, 95.0], 20.0);
    let inflamed = mix(tone, jitter(rng, [205.0, 85.0, 85.0], 15.0), rng.gen_range(0.5..0.75));
    let slough_dir = rng.gen_range(0.0..TAU);
    let slough_amount = rng.gen_range(0.0..0.6);

    for y in 0..canvas.size {
        for x in 0..canvas.size {
            let dx = x as f64 + 0.5 - cx;
            let dy = y as f64 + 0.5 - cy;
            let d = dx.hypot(dy);
            let theta = dy.atan2(dx);
            let r_in = ulcer.radius(theta);
            let idx = y * canvas.size + x;
            if d <= r_in {
                label.set(x, y, ULCER);
                let along = (theta - slough_dir).cos() * d / r_in;
                let t = (slough_amount * (along - 0.2)).clamp(0.0, 1.0);
                canvas.rgb[idx] = mix(wound, slough, t);
            } else if d <= r_in + ring.radius(theta) {
                label.set(x, y, SURROUNDING_SKIN);
                canvas.rgb[idx] = inflamed;
            }
        }
    }
    close_ring(label);
    let area = label.count(ULCER) as f64 / (s * s);
    (ULCER_FRACTION_RANGE.0..=ULCER_FRACTION_RANGE.1).contains(&area)
}

/// Relabels background pixels 8-adjacent to the ulcer as surrounding skin.
fn close_ring(label: &mut LabelImage) {
    let (w, h) = (label.width(), label.height());
    let mut fix = Vec::new();
    for y in 0..h {
        for x in 0..w {
            if label.get(x, y) != BACKGROUND {
                continue;
            }
            let touches = (y.saturating_sub(1)..=(y + 1).min(h - 1)).any(|yy| {
                (x.saturating_sub(1)..=(x + 1).min(w - 1)).any(|xx| label.get(xx, yy) == ULCER)
            });
            if touches {
                fix.push((x, y));
            }
        }
    }
    for (x, y) in fix {
        label.set(x, y, SURROUNDING_SKIN);
    }
}

fn random_color<R: Rng>(rng: &mut R) -> [f64; 3] {
    [0, 1, 2].map(|_| rng.gen_range(20.0..235.0))
}

fn object_scene<R: Rng>(rng: &mut R, size: usize) -> (RgbImage, LabelImage) {
    let s = size as f64;
    let mut canvas = Canvas::new(size);
    background(rng, &mut canvas);
    // Clutter rectangles that carry no label.
    for _ in 0..rng.gen_range(1..4) {
        let c = random_color(rng);
        let (x0, y0) = (rng.gen_range(0.0..s), rng.gen_range(0.0..s));
        let (w, h) = (rng.gen_range(0.1..0.4) * s, rng.gen_range(0.1..0.4) * s);
        for y in 0..size {
            for x in 0..size {
                let (fx, fy) = (x as f64, y as f64);
                if fx >= x0 && fx < x0 + w && fy >= y0 && fy < y0 + h {
                    canvas.rgb[y * size + x] = c;
                }
            }
        }
    }
    let mut label = LabelImage::new(size, size);
    let r0 = s * rng.gen_range(0.08..0.2);
    let core = Outline::random(rng, r0, 0.15);
    let rim_width = (r0 * rng.gen_range(0.3..0.6)).max(2.5);
    let rim = Outline::random(rng, rim_width, 0.2);
    let reach = core.max_radius() + rim.max_radius() + 2.0;
    let cx = rng.gen_range(reach.min(s / 2.0)..=(s - reach).max(s / 2.0));
    let cy = rng.gen_range(reach.min(s / 2.0)..=(s - reach).max(s / 2.0));
    let warm = rng.gen_range(0.3..0.7);
    let core_c = mix(random_color(rng), [170.0, 50.0, 45.0], warm);
    let rim_c = mix(core_c, mix(random_color(rng), [215.0, 160.0, 140.0], warm), 0.6);
    for y in 0..size {
        for x in 0..size {
            let dx = x as f64 + 0.5 - cx;
            let dy = y as f64 + 0.5 - cy;
            let (d, theta) = (dx.hypot(dy), dy.atan2(dx));
            let r_in = core.radius(theta);
            if d <= r_in {
                label.set(x, y, ULCER);
                canvas.rgb[y * size + x] = core_c;
            } else if d <= r_in + rim.radius(theta) {
                label.set(x, y, SURROUNDING_SKIN);
                canvas.rgb[y * size + x] = rim_c;
            }
        }
    }
    close_ring(&mut label);
    canvas.add_noise(rng, 6.0);
    (canvas.into_image(), label)
}

fn texture_scene<R: Rng>(rng: &mut R, size: usize, classes: u8) -> (RgbImage, LabelImage) {
    let class = rng.gen_range(0..classes.max(1));
    let a = random_color(rng);
    let b = random_color(rng);
    let period = rng.gen_range(4.0..10.0);
    let phase = rng.gen_range(0.0..period);
    let mut canvas = Canvas::new(size);
    for y in 0..size {
        for x in 0..size {
            let (fx, fy) = (x as f64 + phase, y as f64 + phase);
            let on = match class % 4 {
                0 => (fy / period).floor() as i64 % 2 == 0,
                1 => (fx / period).floor() as i64 % 2 == 0,
                2 => ((fx / period).floor() + (fy / period).floor()) as i64 % 2 == 0,
                _ => {
                    let (u, v) = (fx % period - period / 2.0, fy % period - period / 2.0);
                    u.hypot(v) < period / 3.0
                }
            };
            canvas.rgb[y * size + x] = if on { a } else { b };
        }
    }
    canvas.add_noise(rng, 6.0);
    let label = LabelImage::from_pixels(size, size, vec![class; size * size]).expect("sized");
    (canvas.into_image(), label)
}
