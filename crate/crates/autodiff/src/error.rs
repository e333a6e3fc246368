use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ShapeError {
    #[error("{op}: incompatible shapes {left:?} and {right:?}")]
    Mismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("{op}: {detail} (shape {shape:?})")]
    Invalid {
        op: &'static str,
        shape: (usize, usize),
        detail: String,
    },
    #[error("tensor data has {found} values, shape {shape:?} needs {expected}")]
    DataLength {
        shape: (usize, usize),
        expected: usize,
        found: usize,
    },
}

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint i/o on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("checkpoint json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported checkpoint format {format:?} version {version}")]
    Format { format: String, version: u32 },
    #[error("checkpoint parameter {name:?}: {detail}")]
    Parameter { name: String, detail: String },
}
