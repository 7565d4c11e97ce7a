use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown key `{0}`")]
    UnknownKey(String),

    #[error("key `{0}` is not assigned to a typing hand")]
    NotHanded(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("unknown input format `{0}`")]
    Format(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("schema mismatch: {0}")]
    Schema(String),

    #[error("degenerate labels: {0}")]
    DegenerateLabels(String),

    #[error("cannot stratify: class `{class}` has {count} rows, fewer than {folds} folds")]
    Stratify { class: String, count: usize, folds: usize },

    #[error("no data: {0}")]
    NoData(String),

    #[error("invalid layout: {0}")]
    Layout(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
