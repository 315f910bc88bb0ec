pub mod annotation;
pub mod folds;
pub mod image;
pub mod manifest;
pub mod palette;
pub mod raster;
pub mod synth;

pub use annotation::{parse_annotation, serialize_annotation, AnnotationImporter, Point, Polygon, RegionAnnotation, XmlSchema};
pub use folds::{make_fold_plan, Fold, FoldPlan, NUM_FOLDS};
pub use image::{decode_rgb_png, encode_rgb_png, RgbImage};
pub use manifest::{
    load_dataset, load_dataset_with, load_record, read_manifest, write_dataset, write_dataset_with, write_manifest,
    ManifestRecord, MANIFEST_FILE,
};
pub use palette::{
    decode_palette, decode_paletted_png, decode_paletted_png_with, encode_paletted_png, encode_paletted_png_with,
    voc_palette,
};
pub use raster::{fill_polygon, rasterize};
pub use synth::{generate, generate_samples, generate_synthetic_dataset, SynthKind};

use crate::label::LabelImage;
use crate::tensor::Tensor;

/// One image ready for training or evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: String,
    /// `1 x 3 x H x W` network input.
    pub image: Tensor,
    pub label: LabelImage,
    pub healthy: bool,
}
