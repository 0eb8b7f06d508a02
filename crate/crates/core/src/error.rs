use thiserror::Error;

use crate::form::MultiIndex;

#[derive(Debug, Error)]
pub enum Error {
    #[error("index {index} already present in {multi}")]
    DuplicateIndex { index: usize, multi: MultiIndex },
    #[error("index {index} not present in {multi}")]
    MissingIndex { index: usize, multi: MultiIndex },
    #[error("invalid multi-index: {0}")]
    InvalidIndex(String),
    #[error("degree mismatch: {left} vs {right}")]
    DegreeMismatch { left: usize, right: usize },
    #[error("fields live on different grids")]
    GridMismatch,
    #[error("array length {got} does not match grid size {expected}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("invalid domain: {0}")]
    InvalidDomain(String),
    #[error("invalid resolution {resolution}: {reason}")]
    Resolution { resolution: usize, reason: String },
    #[error("grid needs ~{needed} bytes, budget is {budget}")]
    MemoryBudget { needed: usize, budget: usize },
    #[error("degree {q} out of range for dimension {n}")]
    DegreeOutOfRange { q: usize, n: usize },
    #[error("geometry: {0}")]
    Geometry(String),
    #[error("profile: {0}")]
    Profile(String),
    #[error("slice form is not dbar-closed (relative residual {0:.3e})")]
    NotClosed(f64),
    #[error("schedule: {0}")]
    Schedule(String),
    #[error("solver: {0}")]
    Solver(String),
}

pub type Result<T> = std::result::Result<T, Error>;
