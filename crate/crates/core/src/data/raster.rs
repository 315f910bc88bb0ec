//! Polygon scanline fill into label images.

use super::annotation::{Polygon, RegionAnnotation};
use crate::error::{Error, Result};
use crate::label::{LabelImage, SURROUNDING_SKIN, ULCER};

/// Marks pixels whose centre lies inside `poly` under the even-odd rule.
///
/// A centre exactly on a crossing counts as inside on the left end of a span and outside
/// on the right end, so shared edges between adjacent polygons are never double-filled.
pub fn fill_polygon(poly: &Polygon, width: usize, height: usize, mut mark: impl FnMut(usize, usize)) {
    let mut xs = Vec::new();
    for y in 0..height {
        let yc = y as f64 + 0.5;
        xs.clear();
        for (a, b) in poly.edges() {
            if (a.y <= yc) != (b.y <= yc) {
                xs.push(a.x + (yc - a.y) * (b.x - a.x) / (b.y - a.y));
            }
        }
        xs.sort_by(|p, q| p.total_cmp(q));
        for span in xs.chunks_exact(2) {
            // Pixel x is covered when span[0] <= x + 0.5 < span[1].
            let start = (span[0] - 0.5).ceil().max(0.0);
            let end = (span[1] - 0.5).ceil().min(width as f64);
            if end <= start {
                continue;
            }
            for x in start as usize..end as usize {
                mark(x, y);
            }
        }
    }
}

/// Rasterizes an annotation: surrounding skin, then ulcer on top, background elsewhere.
pub fn rasterize(ann: &RegionAnnotation, width: usize, height: usize) -> Result<LabelImage> {
    if ann.roi.area() == 0.0 {
        return Err(Error::ingestion(
            format!("annotation[{}]/roi", ann.image_id),
            "ROI has zero area",
        ));
    }
    for poly in ann.ulcer.iter().chain(&ann.surrounding_skin).chain([&ann.roi]) {
        if poly
            .points
            .iter()
            .any(|p| p.x < 0.0 || p.y < 0.0 || p.x > width as f64 || p.y > height as f64)
        {
            return Err(Error::ingestion(
                format!("annotation[{}]", ann.image_id),
                format!("polygon exceeds the {width}x{height} raster"),
            ));
        }
    }
    let mut label = LabelImage::new(width, height);
    for poly in &ann.surrounding_skin {
        fill_polygon(poly, width, height, |x, y| label.set(x, y, SURROUNDING_SKIN));
    }
    for poly in &ann.ulcer {
        fill_polygon(poly, width, height, |x, y| label.set(x, y, ULCER));
    }
    Ok(label)
}
