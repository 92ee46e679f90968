use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A caller broke an operation's precondition.
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("could not place {requested} vehicles on the {lane}: {reason}")]
    Placement {
        requested: usize,
        lane: &'static str,
        reason: String,
    },
    #[error("checkpoint: {0}")]
    Checkpoint(#[from] CheckpointError),
    #[error("trajectory data: {0}")]
    Trace(#[from] TraceError),
    #[error("missing prerequisite: {0}")]
    Prerequisite(String),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }
}

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("unsupported format version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("shape mismatch: expected layers {expected:?}, found {found:?}")]
    ShapeMismatch {
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("corrupt file: {0}")]
    Corrupt(String),
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("line {line}: {message}")]
    Malformed { line: u64, message: String },
    #[error("line {line}: frame {frame} for vehicle {vehicle} does not increase (previous {previous})")]
    NonMonotoneFrame {
        line: u64,
        vehicle: i64,
        frame: i64,
        previous: i64,
    },
}
