use thiserror::Error;

use crate::analysis::UnsafeWitness;

/// Problems loading or restructuring grammars, views and logs.
#[derive(Debug, Error)]
pub enum ModelError {
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("unknown module `{0}`")]
    UnknownModule(String),
    #[error("production {production}: module `{module}` has no occurrence #{ordinal}")]
    UnknownOccurrence {
        production: usize,
        module: String,
        ordinal: usize,
    },
    #[error("module `{module}`: port {port} out of range")]
    PortOutOfRange { module: String, port: usize },
    #[error("module `{0}`: dependency matrix shape does not match its ports")]
    DependencyShape(String),
    #[error("production {0}: simple workflow has a cycle")]
    Cyclic(usize),
    #[error("`{0}` is not a composite module of the grammar")]
    NotComposite(String),
    #[error("invalid grammar: {0}")]
    Invalid(String),
}

/// Outcomes of static analysis that prevent labeling.
#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("unsafe: production {} induces {:?} for `{}`, expected {:?}", .0.production, .0.induced, .0.module, .0.expected)]
    Unsafe(Box<UnsafeWitness>),
    #[error("unproductive composites: {0:?}")]
    Unproductive(Vec<String>),
    #[error("missing dependency matrix for `{0}`")]
    MissingDependency(String),
    #[error("dependency matrix for `{0}` has the wrong shape or an empty row/column")]
    BadDependency(String),
    #[error("grammar is not strictly linear-recursive ({0})")]
    NotStrictlyLinear(&'static str),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RunError {
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("node `{0}` is already expanded")]
    AlreadyExpanded(String),
    #[error("node `{0}` is atomic")]
    NotComposite(String),
    #[error("unknown production {0}")]
    UnknownProduction(usize),
    #[error("production {production} rewrites `{lhs}`, not `{target}`")]
    WrongLhs {
        production: usize,
        lhs: String,
        target: String,
    },
    #[error("malformed step log line {line}: {reason}")]
    BadLog { line: usize, reason: String },
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CodecError {
    #[error("truncated label")]
    Truncated,
    #[error("varint overflow")]
    Overflow,
    #[error("{0} trailing bytes after label")]
    Trailing(usize),
    #[error("invalid label: {0}")]
    Invalid(&'static str),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DecodeError {
    #[error("data item is not visible in the view (hidden edge label {0})")]
    NotVisible(String),
    #[error("edge label {0} does not exist in the view grammar")]
    UnknownEdge(String),
    #[error("labels disagree with the view: {0}")]
    Mismatch(String),
}
