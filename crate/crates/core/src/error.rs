use thiserror::Error;

/// Errors raised while building or querying a model graph.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("duplicate node name `{0}`")]
    DuplicateName(String),
    #[error("node `{node}`: unresolved reference `{reference}`")]
    UnresolvedReference { node: String, reference: String },
    #[error("node `{0}`: cycle detected")]
    Cycle(String),
    #[error("node `{node}`: {dist} expects {expected} parameters, got {got}")]
    Arity {
        node: String,
        dist: String,
        expected: usize,
        got: usize,
    },
    #[error("node `{node}`: {msg}")]
    Invalid { node: String, msg: String },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("dimension set is empty")]
    EmptyDims,
    #[error("dimension {0} is out of range")]
    DimOutOfRange(usize),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SamplerError {
    #[error("{kind} cannot update block {block:?}: {reason}")]
    Unsupported {
        kind: String,
        block: Vec<usize>,
        reason: String,
    },
    #[error("unknown sampler kind `{0}`")]
    UnknownKind(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiagnosticsError {
    #[error("chain has zero variance")]
    DegenerateChain,
    #[error("need at least {needed} samples, got {got}")]
    InsufficientData { needed: usize, got: usize },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BlockingError {
    #[error("malformed correlation matrix: {0}")]
    MalformedCorrelation(String),
}

/// Top-level error for the engine, benchmarks and CLI.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Sampler(#[from] SamplerError),
    #[error(transparent)]
    Diagnostics(#[from] DiagnosticsError),
    #[error(transparent)]
    Blocking(#[from] BlockingError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("kernel does not cover dimensions {0:?}")]
    InvalidKernel(Vec<usize>),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
