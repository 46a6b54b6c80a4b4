use std::fmt;
use std::path::PathBuf;

/// Result alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors emitted by the engine, data pipeline, and training loop.
#[derive(Debug)]
pub enum Error {
    /// A kernel or layer received a tensor whose dimensions do not match the
    /// declared spec. `axis` names the offending axis.
    Dimension {
        op: &'static str,
        axis: &'static str,
        expected: usize,
        got: usize,
    },
    /// A model could not be assembled from the given configuration.
    Construction { what: String },
    /// Invalid configuration value (bad hyperparameter, unknown key, ...).
    Config { what: String },
    /// A gradient was requested for a value that is not on the tape.
    TapeLookup { id: usize, len: usize },
    /// Dataset root does not match the fixed five-class taxonomy.
    Taxonomy { what: String },
    /// Splitting could not be performed on the given index.
    Split { what: String },
    /// An image file could not be decoded.
    Decode { path: PathBuf, reason: String },
    /// A class label is outside 0..num_classes.
    Label { index: usize, value: usize },
    /// Checkpoint file is corrupt, version-mismatched, or incompatible.
    Checkpoint { what: String },
    /// Weight import failed; `slot` names the first offending parameter.
    Import { slot: String, reason: String },
    /// Evaluation or batching over an empty index.
    EmptyIndex { what: &'static str },
    /// Training halted on a non-finite loss or gradient.
    TrainingHalt { what: String },
    /// Underlying I/O failure.
    Io { context: String, source: std::io::Error },
}

impl Error {
    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io { context: context.into(), source }
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Dimension { op, axis, expected, got } => {
                write!(f, "{op}: dimension mismatch on {axis}: expected {expected}, got {got}")
            }
            Error::Construction { what } => write!(f, "model construction failed: {what}"),
            Error::Config { what } => write!(f, "invalid configuration: {what}"),
            Error::TapeLookup { id, len } => {
                write!(f, "value id {id} is not on the tape (tape holds {len} values)")
            }
            Error::Taxonomy { what } => write!(f, "dataset taxonomy error: {what}"),
            Error::Split { what } => write!(f, "split error: {what}"),
            Error::Decode { path, reason } => {
                write!(f, "cannot decode image {}: {reason}", path.display())
            }
            Error::Label { index, value } => {
                write!(f, "label out of range at sample {index}: {value}")
            }
            Error::Checkpoint { what } => write!(f, "checkpoint error: {what}"),
            Error::Import { slot, reason } => write!(f, "weight import failed at slot {slot}: {reason}"),
            Error::EmptyIndex { what } => write!(f, "{what} requires a non-empty dataset index"),
            Error::TrainingHalt { what } => write!(f, "training halted: {what}"),
            Error::Io { context, source } => write!(f, "{context}: {source}"),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io { source, .. } => Some(source),
            _ => None,
        }
    }
}
