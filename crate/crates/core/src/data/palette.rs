//! 8-bit paletted PNG encoding of label images with the Pascal-VOC colour map.

use std::io::Cursor;

use crate::error::{Error, Result};
use crate::label::{LabelImage, IGNORE_INDEX, NUM_CLASSES};

/// The 256-entry Pascal-VOC colour map: index 0 black, 1 (128,0,0), 2 (0,128,0), ...
pub fn voc_palette() -> [[u8; 3]; 256] {
    let mut map = [[0u8; 3]; 256];
    for (i, entry) in map.iter_mut().enumerate() {
        let mut c = i;
        let (mut r, mut g, mut b) = (0u8, 0u8, 0u8);
        for j in 0..8 {
            r |= ((c & 1) as u8) << (7 - j);
            g |= (((c >> 1) & 1) as u8) << (7 - j);
            b |= (((c >> 2) & 1) as u8) << (7 - j);
            c >>= 3;
        }
        *entry = [r, g, b];
    }
    map
}

/// Encodes class indices as a palette-mode PNG. Values other than the classes and the
/// ignore index are rejected.
pub fn encode_paletted_png(label: &LabelImage) -> Result<Vec<u8>> {
    encode_paletted_png_with(label, NUM_CLASSES)
}

/// [`encode_paletted_png`] for a label set of `num_classes` classes.
pub fn encode_paletted_png_with(label: &LabelImage, num_classes: usize) -> Result<Vec<u8>> {
    if let Some(&bad) = label
        .pixels()
        .iter()
        .find(|&&p| p as usize >= num_classes && p != IGNORE_INDEX)
    {
        return Err(Error::Data(format!("label value {bad} is not a class index")));
    }
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(Cursor::new(&mut out), label.width() as u32, label.height() as u32);
        enc.set_color(png::ColorType::Indexed);
        enc.set_depth(png::BitDepth::Eight);
        enc.set_palette(voc_palette().concat());
        let mut w = enc
            .write_header()
            .map_err(|e| Error::Format(format!("png header: {e}")))?;
        w.write_image_data(label.pixels())
            .map_err(|e| Error::Format(format!("png data: {e}")))?;
        w.finish().map_err(|e| Error::Format(format!("png finish: {e}")))?;
    }
    Ok(out)
}

struct Paletted {
    width: usize,
    height: usize,
    indices: Vec<u8>,
    palette: Vec<[u8; 3]>,
}

fn read_paletted(bytes: &[u8]) -> Result<Paletted> {
    let mut dec = png::Decoder::new(Cursor::new(bytes));
    dec.set_transformations(png::Transformations::IDENTITY);
    let mut reader = dec
        .read_info()
        .map_err(|e| Error::Format(format!("invalid png: {e}")))?;
    let info = reader.info();
    if info.color_type != png::ColorType::Indexed || info.bit_depth != png::BitDepth::Eight {
        return Err(Error::Format(format!(
            "expected 8-bit palette png, found {:?} at {:?}",
            info.color_type, info.bit_depth
        )));
    }
    let palette = info
        .palette
        .as_ref()
        .map(|p| p.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect())
        .unwrap_or_default();
    let (width, height) = (info.width as usize, info.height as usize);
    let mut buf = vec![0; reader.output_buffer_size().unwrap_or(width * height)];
    let frame = reader
        .next_frame(&mut buf)
        .map_err(|e| Error::Format(format!("png data: {e}")))?;
    buf.truncate(frame.buffer_size());
    Ok(Paletted {
        width,
        height,
        indices: buf,
        palette,
    })
}

pub fn decode_paletted_png(bytes: &[u8]) -> Result<LabelImage> {
    decode_paletted_png_with(bytes, NUM_CLASSES)
}

pub fn decode_paletted_png_with(bytes: &[u8], num_classes: usize) -> Result<LabelImage> {
    let p = read_paletted(bytes)?;
    if let Some(&bad) = p
        .indices
        .iter()
        .find(|&&v| v as usize >= num_classes && v != IGNORE_INDEX)
    {
        return Err(Error::Data(format!("palette index {bad} is not a class index")));
    }
    LabelImage::from_pixels(p.width, p.height, p.indices)
}

/// The PLTE colours stored in a paletted PNG.
pub fn decode_palette(bytes: &[u8]) -> Result<Vec<[u8; 3]>> {
    Ok(read_paletted(bytes)?.palette)
}
