use alloc::string::String;

use thiserror::Error;

/// Errors raised while reading catalog, normalization and event files.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("schema error: {0}")]
    Schema(String),
    #[error("line {line}: unknown build `{name}` (off-race production, e.g. via mind control; game rejected)")]
    UnknownBuild { line: usize, name: String },
    #[error("line {line}: unknown enemy type `{name}`")]
    UnknownEnemy { line: usize, name: String },
    #[error("line {line}: frame {frame} precedes previous frame {previous}")]
    Order { line: usize, frame: u64, previous: u64 },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LookupError {
    #[error("unknown build id {0}")]
    BuildId(usize),
    #[error("unknown build name `{0}`")]
    BuildName(String),
    #[error("unknown enemy type id {0}")]
    EnemyId(usize),
    #[error("unknown enemy type name `{0}`")]
    EnemyName(String),
}

/// Raised by the forward model when a log contradicts the tracked state.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConsistencyError {
    #[error("frame {frame}: `{build}` destroyed but none is owned")]
    DestroyedMissing { frame: u64, build: String },
    #[error("frame {frame}: `{build}` cannot be destroyed (not a unit or building)")]
    DestroyedNotMaterial { frame: u64, build: String },
    #[error("frame {frame} lies before state frame {state_frame}")]
    TimeReversal { frame: u64, state_frame: u64 },
}

/// Binary dataset and model file errors.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FormatError {
    #[error("bad magic bytes")]
    Magic,
    #[error("unsupported version {0}")]
    Version(u32),
    #[error("truncated input")]
    Truncated,
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid content: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NetError {
    #[error("shape error: expected {expected} values, got {actual}")]
    Shape { expected: usize, actual: usize },
    #[error("invalid topology: {0}")]
    Topology(String),
    #[error("non-finite gradient; update rejected")]
    NonFiniteGradient,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PolicyError {
    #[error("excluded probability mass leaves a degenerate distribution")]
    Degenerate,
    #[error("exclusion set covers every build")]
    ExcludesAll,
    #[error("model was built for a different {0}")]
    Incompatible(&'static str),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrainError {
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("split requires at least 2 games, got {0}")]
    TooFewGames(usize),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Net(#[from] NetError),
}
