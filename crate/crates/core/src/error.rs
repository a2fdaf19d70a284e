use thiserror::Error;

use crate::graph::Edge;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("self-loop on node {0}")]
    SelfLoop(usize),
    #[error("graph contains a directed cycle")]
    Cyclic,
    #[error("node {node} out of range for p = {p}")]
    NodeOutOfRange { node: usize, p: usize },
    #[error("p = {p} exceeds the supported maximum of {max}")]
    TooManyNodes { p: usize, max: usize },
    #[error("exhaustive enumeration limited to p <= {max}, got {p}")]
    EnumerationTooLarge { p: usize, max: usize },
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("node {node} would have {degree} allowed parents, cap is {cap}")]
    CapExceeded {
        node: usize,
        degree: usize,
        cap: usize,
    },
    #[error("edge {0} already in the search space")]
    EdgePresent(Edge),
    #[error("edge {0} not in the search space")]
    EdgeAbsent(Edge),
    #[error("not a permutation")]
    NotAPermutation,
    #[error("parse error: {0}")]
    Parse(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumericError {
    #[error("log-minus-exp requires c >= b, got c = {c}, b = {b}")]
    NegativeDifference { c: f64, b: f64 },
    #[error("matrix is not positive definite (pivot {pivot} = {value})")]
    NotPositiveDefinite { pivot: usize, value: f64 },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("distribution does not sum to one (total {0})")]
    Unnormalized(f64),
}

#[derive(Debug, Error)]
pub enum DataError {
    #[error("data set needs at least one row")]
    Empty,
    #[error("row {row} has {got} columns, expected {expected}")]
    Ragged {
        row: usize,
        got: usize,
        expected: usize,
    },
    #[error("missing or non-numeric value at row {row}, column {col}: {value:?}")]
    BadValue {
        row: usize,
        col: usize,
        value: String,
    },
    #[error("invalid hyperparameter: {0}")]
    Hyper(String),
    #[error(transparent)]
    Numeric(#[from] NumericError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error)]
pub enum TableError {
    #[error("node {node}: expansion to {size} candidate parents exceeds cap {cap}")]
    CapExceeded {
        node: usize,
        size: usize,
        cap: usize,
    },
    #[error("node {node}: {src} is not a plus-one candidate")]
    NotACandidate { node: usize, src: usize },
    #[error("node {node}: {src} is not an allowed parent")]
    NotAllowed { node: usize, src: usize },
    #[error("node {node}: {m} candidate parents is too many for a dense table")]
    TooWide { node: usize, m: usize },
    #[error("tables were built for a different search space")]
    SpaceMismatch,
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Numeric(#[from] NumericError),
}

#[derive(Debug, Error)]
pub enum ChainError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("initial space has in-degree {degree} at node {node}, above cap {cap}; raise --cap or prune the space")]
    InitialSpaceOverCap {
        node: usize,
        degree: usize,
        cap: usize,
    },
    #[error(transparent)]
    Table(#[from] TableError),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("exact computation limited to p <= {max}, got {p}")]
    TooLarge { p: usize, max: usize },
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Numeric(#[from] NumericError),
    #[error(transparent)]
    Table(#[from] TableError),
}

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("trace is empty")]
    EmptyTrace,
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
}
