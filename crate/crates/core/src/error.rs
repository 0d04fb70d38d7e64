//! Error types shared across the crate.
//!
//! Everything fallible returns [`Error`]. Diagnostic payloads are carried as
//! `f64` regardless of the scalar type the computation ran in, so the error
//! enum stays non-generic and cheap to pass around.

use thiserror::Error;

/// A single defect found while validating an MDP.
#[derive(Debug, Clone, PartialEq)]
pub enum MdpViolation {
    /// Transition row `transition[s][a]` does not sum to 1 within tolerance.
    NonStochasticRow { state: usize, action: usize, sum: f64 },
    /// The initial state distribution does not sum to 1 within tolerance.
    NonStochasticInitialDist { sum: f64 },
    /// A probability entry is negative. `table` names which table.
    NegativeEntry { table: &'static str, index: usize, value: f64 },
    /// Discount factor outside `(0, 1]`.
    BadDiscount { value: f64 },
}

impl std::fmt::Display for MdpViolation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            MdpViolation::NonStochasticRow { state, action, sum } => {
                write!(f, "transition row (s={state}, a={action}) sums to {sum}, not 1")
            }
            MdpViolation::NonStochasticInitialDist { sum } => {
                write!(f, "initial distribution sums to {sum}, not 1")
            }
            MdpViolation::NegativeEntry { table, index, value } => {
                write!(f, "negative entry {value} in {table} at flat index {index}")
            }
            MdpViolation::BadDiscount { value } => {
                write!(f, "discount {value} outside (0, 1]")
            }
        }
    }
}

/// A state-action pair the dataset fails to cover.
#[derive(Debug, Clone, PartialEq)]
pub struct CoverageViolation {
    pub state: usize,
    pub action: usize,
    /// Mass the target policy's visitation puts on the pair.
    pub target_mass: f64,
    /// Mass the dataset puts on the pair (below the coverage epsilon).
    pub dataset_mass: f64,
}

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid MDP: {}", format_list(.0))]
    InvalidMdp(Vec<MdpViolation>),

    #[error("invalid policy: {}", format_list(.0))]
    InvalidPolicy(Vec<MdpViolation>),

    #[error("shape mismatch for {what}: expected length {expected}, got {got}")]
    ShapeMismatch { what: &'static str, expected: usize, got: usize },

    #[error("operator needs a policy but none was supplied")]
    MissingPolicy,

    #[error("linear system is singular (pivot {pivot:.3e} at column {column})")]
    SingularSystem { column: usize, pivot: f64 },

    #[error("operation requires discount < 1 but the MDP is undiscounted")]
    UndiscountedUnsupported,

    #[error("value identity violated: primal form {primal} vs visitation form {visitation} (|diff| = {diff:.3e})")]
    IdentityMismatch { primal: f64, visitation: f64, diff: f64 },

    #[error("chain is not ergodic: power iteration residual {residual:.3e} after {iters} iterations")]
    NotErgodic { residual: f64, iters: usize },

    #[error("{what} exceeds the budget: limit {limit}, got {got}")]
    BudgetExceeded { what: &'static str, limit: usize, got: usize },

    #[error("{context}: no convergence within {iters} iterations (residual {residual:.3e})")]
    Nonconvergence { context: &'static str, iters: usize, residual: f64 },

    #[error("domain error: {0}")]
    DomainError(String),

    #[error("support violation at flat index {index}: reference mass {reference} but candidate mass {candidate}")]
    SupportViolation { index: usize, reference: f64, candidate: f64 },

    #[error("constrained conjugate is only available for the KL generator, not {generator}")]
    UnsupportedConstrainedGenerator { generator: String },

    #[error("problem is infeasible: {0}")]
    Infeasible(String),

    #[error("dataset fails to cover the target policy: {}", format_list(.0.iter().map(|v| format!("(s={}, a={}) target {:.3e} vs dataset {:.3e}", v.state, v.action, v.target_mass, v.dataset_mass)).collect::<Vec<_>>().as_slice()))]
    CoverageError(Vec<CoverageViolation>),

    #[error("closed form is unsupported for generator {generator}; only square has one")]
    ClosedFormUnsupported { generator: String },

    #[error("objective or gradient became non-finite at iteration {iter}")]
    NonFiniteObjective { iter: usize },

    #[error("inner solve did not converge: {context} (residual {residual:.3e})")]
    InnerNonconvergence { context: &'static str, residual: f64 },

    #[error("method {method} has no catalog entry")]
    MissingCatalogEntry { method: String },

    #[error("unknown method string: {0}")]
    UnknownMethod(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

fn format_list<T: std::fmt::Display>(items: &[T]) -> String {
    items.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; ")
}
