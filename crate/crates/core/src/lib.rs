pub mod arch;
pub mod data;
pub mod error;
pub mod label;
pub mod metrics;
pub mod ops;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use label::LabelImage;
pub use tensor::{Shape, Tensor};
