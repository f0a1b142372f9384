use thiserror::Error;

use crate::sinkhorn::EntropicSolution;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("marginal {marginal}: weight {index} is not positive ({value})")]
    NonPositiveWeight {
        marginal: String,
        index: usize,
        value: f64,
    },
    #[error("marginal {marginal}: weights sum to {sum}, expected 1 within 1e-12")]
    WeightSumMismatch { marginal: String, sum: f64 },
    #[error("marginal {marginal}: points {first} and {second} coincide")]
    DuplicatePoint {
        marginal: String,
        first: usize,
        second: usize,
    },
    #[error("marginal {marginal}: point {index} has dimension {found}, expected {expected}")]
    MixedDimension {
        marginal: String,
        index: usize,
        expected: usize,
        found: usize,
    },
    #[error("marginal {marginal}: {reason}")]
    InvalidMarginal { marginal: String, reason: String },
    #[error("product of support sizes overflows the exact integer range")]
    Overflow,
    #[error("product space has {size} cells, limit is {limit}")]
    TooLarge { size: u64, limit: u64 },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid cost: {0}")]
    InvalidCost(String),
    #[error("invalid permutation: {0}")]
    InvalidPermutation(String),
    #[error("map on marginal {marginal} does not preserve weights at index {index}")]
    NotMeasurePreserving { marginal: usize, index: usize },
    #[error("group closure exceeds cap of {cap} elements")]
    GroupTooLarge { cap: usize },
    #[error("finite-cost infeasible: no transport plan avoids the forbidden (+inf) cells")]
    FiniteCostInfeasible,
    #[error("every cell of the cost is forbidden")]
    AllCellsForbidden,
    #[error("entropic solver did not reach tolerance after {} iterations", .0.report.iterations)]
    NotConverged(Box<EntropicSolution>),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("all marginals must be identical")]
    MarginalsNotIdentical,
    #[error("no finite-cost tuple passes through point {index} of marginal {marginal}")]
    UnboundedConjugate { marginal: usize, index: usize },
    #[error("potentials violate the required ordering by {violation:e}")]
    OrderViolated { violation: f64 },
    #[error("cost is not invariant under the action (deviation {deviation:e})")]
    CostNotInvariant { deviation: f64 },
    #[error("input potentials are infeasible (violation {violation:e})")]
    InfeasibleInput { violation: f64 },
    #[error("map has period {found}, expected a divisor of {expected}")]
    PeriodMismatch { expected: usize, found: usize },
    #[error("hypothesis violated: {0}")]
    HypothesisViolated(String),
    #[error("generators do not commute")]
    NotCommuting,
    #[error("simplex failed: {0}")]
    Numerical(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
