//! Crate-wide error type. Variants are split between input/validation
//! problems (schema, invariants, infeasible hints) and execution failures
//! (budget overruns, unbound sources); the CLI maps the two groups to
//! distinct exit codes.

use crate::cost::JoinMethod;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A plan node needed statistics that were not declared or derivable.
    #[error("missing statistics for {0}")]
    MissingStats(String),

    /// Defensive: a nonzero-size dataset reported zero rows, which violates
    /// the `DatasetStats` construction invariant upstream.
    #[error("zero cardinality with nonzero size ({size_bytes} bytes)")]
    ZeroCardinality { size_bytes: u64 },

    /// Malformed JSON or an unknown operator / enum tag.
    #[error("schema error: {0}")]
    Schema(String),

    /// Structurally valid input with out-of-range or inconsistent values.
    #[error("invariant violation: {0}")]
    Invariant(String),

    /// A join hint named a method that cannot run for this join.
    #[error("infeasible join hint {hint}: {reason}")]
    InfeasibleHint { hint: JoinMethod, reason: String },

    /// A hash build exceeded the memory budget at execution time. This means
    /// the feasibility gate was fed stats that were wrong at selection time;
    /// it is a hard failure, not a recoverable state.
    #[error("hash build of {actual} bytes exceeds memory budget of {budget} bytes in task {task}")]
    OutOfBudget { actual: u64, budget: u64, task: usize },

    /// A scan referenced a dataset name with no bound source.
    #[error("unbound source dataset: {0}")]
    UnboundSource(String),

    /// A re-selection would have required recomputing a completed stage.
    /// Impossible by construction (re-selection only rewrites the pending
    /// join's own exchanges); kept as a guard.
    #[error("re-optimization conflicts with a completed stage: {0}")]
    ReoptimizationConflict(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Exit code the CLI should use for this error: 2 for input/validation
    /// problems, 3 for execution failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::MissingStats(_)
            | Error::Schema(_)
            | Error::Invariant(_)
            | Error::InfeasibleHint { .. }
            | Error::Io(_)
            | Error::Json(_) => 2,
            Error::ZeroCardinality { .. }
            | Error::OutOfBudget { .. }
            | Error::UnboundSource(_)
            | Error::ReoptimizationConflict(_) => 3,
        }
    }
}
