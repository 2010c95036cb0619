use std::path::PathBuf;

use crate::prompts::Polarity;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("non-finite value produced by {op}")]
    Numeric { op: &'static str },
    #[error("at most {limit} {polarity} clicks fit in the prompt slots")]
    Capacity { polarity: Polarity, limit: usize },
    #[error("click ({x}, {y}) lies outside the {width}×{height} image")]
    OutOfBounds { x: usize, y: usize, width: usize, height: usize },
    #[error("positive order map needs at least one positive click")]
    EmptyPrompt,
    #[error("expected a {expected} click")]
    Polarity { expected: Polarity },
    #[error("validation error: {0}")]
    Validation(String),
    #[error("prediction already matches the ground truth")]
    NoError,
    #[error("nothing to undo")]
    NothingToUndo,
    #[error("dataset error: {0}")]
    Dataset(String),
    #[error("scene generation gave up after {0} attempts")]
    Generation(usize),
    #[error("corrupt {}: {reason}", describe(path))]
    Corruption { path: PathBuf, reason: String },
    #[error("format error: {0}")]
    Format(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("training diverged at step {step}: loss is not finite")]
    Divergence { step: u64 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Image(#[from] image::ImageError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

fn describe(path: &std::path::Path) -> String {
    if path.as_os_str().is_empty() {
        "data".into()
    } else {
        format!("file {}", path.display())
    }
}
