//! Bayesian structure learning for Gaussian DAG models by order MCMC over a
//! search space that grows and shrinks through a birth-death kernel.
//!
//! The crate is organised bottom-up:
//!
//! - [`graph`]: DAGs, search spaces, topological orders, enumeration helpers.
//! - [`logspace`], [`linalg`]: log-domain arithmetic and small Cholesky routines.
//! - [`bge`]: data sets and the BGe local score.
//! - [`tables`]: per-node score tables and their expansion/contraction.
//! - [`order`]: the fixed-space order kernel and DAG sampling given an order.
//! - [`brood`]: birth-death rates, the space kernel, the mixture chain.
//! - [`oracle`]: brute-force posteriors, error bounds and exact transition matrices.
//! - [`synth`]: random graphs, linear SEM data and a PC skeleton initializer.
//! - [`metrics`]: edge probabilities and ranking metrics.

pub mod bge;
pub mod brood;
pub mod error;
pub mod graph;
pub mod linalg;
pub mod logspace;
pub mod metrics;
pub mod oracle;
pub mod order;
pub mod synth;
pub mod tables;

pub use bge::{BgeHyper, BgeScore, DataSet};
pub use brood::{run_chain, BroodChain, BroodConfig, ChainTrace};
pub use error::{
    ChainError, DataError, GraphError, MetricsError, NumericError, OracleError, TableError,
};
pub use graph::{Dag, Edge, NodeSet, SearchSpace, TopOrder};
pub use logspace::LogScore;
pub use metrics::{EdgeMode, EdgeProbMatrix, MetricsReport};
pub use oracle::{ExactPosterior, TvReport};
pub use tables::TableSet;
