//! Single-channel class-index rasters.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const BACKGROUND: u8 = 0;
pub const SURROUNDING_SKIN: u8 = 1;
pub const ULCER: u8 = 2;
/// Number of classes in the wound labelling scheme.
pub const NUM_CLASSES: usize = 3;
/// Pixels carrying this value are excluded from the loss.
pub const IGNORE_INDEX: u8 = 255;

/// Per-pixel class indices, row-major.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LabelImage {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl LabelImage {
    pub fn new(width: usize, height: usize) -> Self {
        LabelImage {
            width,
            height,
            pixels: vec![BACKGROUND; width * height],
        }
    }

    pub fn from_pixels(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if pixels.len() != width * height {
            return Err(Error::shape(format!(
                "{} pixels for a {width}x{height} label image",
                pixels.len()
            )));
        }
        Ok(LabelImage {
            width,
            height,
            pixels,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [u8] {
        &mut self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, class: u8) {
        self.pixels[y * self.width + x] = class;
    }

    pub fn count(&self, class: u8) -> usize {
        self.pixels.iter().filter(|&&p| p == class).count()
    }

    /// Fails if any pixel is outside `0..num_classes`.
    pub fn validate(&self, num_classes: usize) -> Result<()> {
        match self.pixels.iter().position(|&p| p as usize >= num_classes) {
            Some(i) => Err(Error::Data(format!(
                "label value {} at pixel ({}, {}) is not a class index below {num_classes}",
                self.pixels[i],
                i % self.width.max(1),
                i / self.width.max(1)
            ))),
            None => Ok(()),
        }
    }

    /// Nearest-neighbour resample to `width x height`.
    pub fn resize_nearest(&self, width: usize, height: usize) -> LabelImage {
        let mut out = LabelImage::new(width, height);
        for y in 0..height {
            let sy = ((y as f64 + 0.5) * self.height as f64 / height as f64) as usize;
            for x in 0..width {
                let sx = ((x as f64 + 0.5) * self.width as f64 / width as f64) as usize;
                out.set(x, y, self.get(sx.min(self.width - 1), sy.min(self.height - 1)));
            }
        }
        out
    }
}
