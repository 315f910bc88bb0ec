//! 8-bit RGB photographs: PNG I/O, resizing, and conversion to network input.

use std::io::Cursor;

use crate::error::{Error, Result};
use crate::tensor::{Shape, Tensor};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    /// Interleaved RGB, row-major.
    pub data: Vec<u8>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize) -> Self {
        RgbImage {
            width,
            height,
            data: vec![0; width * height * 3],
        }
    }

    pub fn get(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn set(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    /// Bilinear resample with pixel-centre alignment.
    pub fn resize_bilinear(&self, width: usize, height: usize) -> RgbImage {
        if (width, height) == (self.width, self.height) {
            return self.clone();
        }
        let mut out = RgbImage::new(width, height);
        let sx = self.width as f64 / width as f64;
        let sy = self.height as f64 / height as f64;
        for y in 0..height {
            let fy = ((y as f64 + 0.5) * sy - 0.5).clamp(0.0, (self.height - 1) as f64);
            let y0 = fy.floor() as usize;
            let y1 = (y0 + 1).min(self.height - 1);
            let ty = fy - y0 as f64;
            for x in 0..width {
                let fx = ((x as f64 + 0.5) * sx - 0.5).clamp(0.0, (self.width - 1) as f64);
                let x0 = fx.floor() as usize;
                let x1 = (x0 + 1).min(self.width - 1);
                let tx = fx - x0 as f64;
                let (a, b, c, d) = (self.get(x0, y0), self.get(x1, y0), self.get(x0, y1), self.get(x1, y1));
                let mut px = [0u8; 3];
                for k in 0..3 {
                    let top = a[k] as f64 * (1.0 - tx) + b[k] as f64 * tx;
                    let bottom = c[k] as f64 * (1.0 - tx) + d[k] as f64 * tx;
                    px[k] = (top * (1.0 - ty) + bottom * ty).round().clamp(0.0, 255.0) as u8;
                }
                out.set(x, y, px);
            }
        }
        out
    }

    /// `1 x 3 x H x W` tensor with values `v / 255 - 0.5`.
    pub fn to_tensor(&self) -> Tensor {
        let plane = self.width * self.height;
        let mut data = vec![0.0; 3 * plane];
        for (p, px) in self.data.chunks_exact(3).enumerate() {
            for c in 0..3 {
                data[c * plane + p] = px[c] as f64 / 255.0 - 0.5;
            }
        }
        Tensor::from_vec(Shape::new(1, 3, self.height, self.width), data).expect("sized buffer")
    }

    /// Inverse of [`RgbImage::to_tensor`] for the first batch entry.
    pub fn from_tensor(t: &Tensor) -> Result<RgbImage> {
        let [_, c, h, w] = t.shape().0;
        if c != 3 {
            return Err(Error::shape(format!("expected 3 channels, got {}", t.shape())));
        }
        let mut img = RgbImage::new(w, h);
        let plane = w * h;
        for p in 0..plane {
            for k in 0..3 {
                img.data[p * 3 + k] = ((t.data()[k * plane + p] + 0.5) * 255.0).round().clamp(0.0, 255.0) as u8;
            }
        }
        Ok(img)
    }
}

pub fn encode_rgb_png(img: &RgbImage) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(Cursor::new(&mut out), img.width as u32, img.height as u32);
        enc.set_color(png::ColorType::Rgb);
        enc.set_depth(png::BitDepth::Eight);
        let mut w = enc
            .write_header()
            .map_err(|e| Error::Format(format!("png header: {e}")))?;
        w.write_image_data(&img.data)
            .map_err(|e| Error::Format(format!("png data: {e}")))?;
        w.finish().map_err(|e| Error::Format(format!("png finish: {e}")))?;
    }
    Ok(out)
}

/// Reads an 8-bit grey, grey-alpha, RGB, RGBA or paletted PNG as RGB.
pub fn decode_rgb_png(bytes: &[u8]) -> Result<RgbImage> {
    let mut dec = png::Decoder::new(Cursor::new(bytes));
    dec.set_transformations(png::Transformations::EXPAND | png::Transformations::STRIP_16);
    let mut reader = dec
        .read_info()
        .map_err(|e| Error::Format(format!("invalid png: {e}")))?;
    let mut buf = vec![0; reader.output_buffer_size().unwrap_or(0)];
    let frame = reader
        .next_frame(&mut buf)
        .map_err(|e| Error::Format(format!("png data: {e}")))?;
    let (w, h) = (frame.width as usize, frame.height as usize);
    let channels = match frame.color_type {
        png::ColorType::Grayscale => 1,
        png::ColorType::GrayscaleAlpha => 2,
        png::ColorType::Rgb => 3,
        png::ColorType::Rgba => 4,
        other => return Err(Error::Format(format!("unsupported png colour type {other:?}"))),
    };
    let mut img = RgbImage::new(w, h);
    for (p, px) in buf[..w * h * channels].chunks_exact(channels).enumerate() {
        let rgb = if channels < 3 { [px[0]; 3] } else { [px[0], px[1], px[2]] };
        img.data[p * 3..p * 3 + 3].copy_from_slice(&rgb);
    }
    Ok(img)
}
