//! FCN-AlexNet, FCN-32s, FCN-16s and FCN-8s graphs, checkpoints and weight transfer.

mod checkpoint;
mod graph;
mod model;

pub use checkpoint::{load_pretrained, Checkpoint, CheckpointMeta, LoadMode, LoadReport, NamedTensor};
pub use graph::{ConvRole, FusionMode, Grads, Graph, Node, NodeKind, ParamMut, Plan, Trace};
pub use model::{
    build_model, predict_labels, ModelSpec, SegModel, Variant, INPUT_CHANNELS, MIN_CHANNELS,
    MIN_INPUT_EXTENT,
};
