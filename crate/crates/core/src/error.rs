use thiserror::Error;

/// Errors produced by model construction, training, evaluation and IO.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: expected {expected:?}, got {actual:?}{}", context_suffix(.context))]
    ShapeMismatch {
        expected: Vec<usize>,
        actual: Vec<usize>,
        context: String,
    },

    #[error("inconsistent network spec: layer {layer} ({kind}) cannot accept input shape {input:?}: {reason}")]
    InconsistentSpec {
        layer: usize,
        kind: String,
        input: Vec<usize>,
        reason: String,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("sample weights are degenerate: {0}")]
    DegenerateWeights(String),

    #[error("stage {requested} cannot be trained: {trained} stages trained so far (stages are sequential)")]
    StageOrder { requested: usize, trained: usize },

    #[error("model has {trained} of {total} stages trained; operation requires a fully trained model")]
    Untrained { trained: usize, total: usize },

    #[error("AUC/ROC undefined: scores contain only label {0}")]
    SingleClass(u8),

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error("format error in {path} at offset {offset}: {reason}")]
    Format {
        path: String,
        offset: u64,
        reason: String,
    },

    #[error("archive version {found} not supported (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error("archive checksum mismatch: payload corrupted")]
    Checksum,

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(String),
}

fn context_suffix(context: &str) -> String {
    if context.is_empty() {
        String::new()
    } else {
        format!(" ({context})")
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serde(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
