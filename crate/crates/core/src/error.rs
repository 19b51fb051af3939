use thiserror::Error;

use crate::position::CutLocation;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum Error {
    #[error("invalid shape a={a} b={b}: both sizes must be at least 2")]
    InvalidShape { a: usize, b: usize },

    #[error("invalid table: entry {value} at {index} is outside [0, {limit})")]
    InvalidTable {
        index: usize,
        value: usize,
        limit: usize,
    },

    #[error("dimension mismatch: expected {expected:?}, found {found:?}")]
    DimMismatch {
        expected: Vec<usize>,
        found: Vec<usize>,
    },

    #[error("positions have different shapes")]
    ShapeMismatch,

    #[error("cut ({}, {}) is not available at this position", .0.x, .0.y)]
    UnavailableCut(CutLocation),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("size guard: {what} = {value} exceeds limit {limit}")]
    SizeGuard {
        what: &'static str,
        value: usize,
        limit: usize,
    },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("propagation did not reach a fixpoint within {0} sweeps")]
    IterationCap(usize),

    #[error("minimization stopped after {nodes} nodes with bracket [{lower}, {upper}]")]
    Partial {
        lower: u64,
        upper: u64,
        nodes: usize,
    },

    #[error("internal error: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, Error>;
