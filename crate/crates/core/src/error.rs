use thiserror::Error;

/// Errors produced anywhere in the segmentation engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("ingestion error at {path}: {message}")]
    Ingestion { path: String, message: String },
    #[error("format error: {0}")]
    Format(String),
    #[error("training diverged at batch {batch} (epoch {epoch}): loss is not finite")]
    Divergence { epoch: usize, batch: usize },
    #[error("stage {stage} ({name}): {source}")]
    Stage {
        stage: usize,
        name: String,
        #[source]
        source: Box<Error>,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn ingestion(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Ingestion {
            path: path.into(),
            message: message.into(),
        }
    }
}
