//! Error type shared across the crate.

use crate::dirac::VariationalReport;
use crate::field::VertexField;

/// Errors produced by graph construction, linear solves and the nonlinear solvers.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("graph has no vertices")]
    EmptyGraph,

    #[error("duplicate vertex id `{0}`")]
    DuplicateVertex(String),

    #[error("unknown vertex id `{0}`")]
    UnknownVertex(String),

    #[error("graph is not connected")]
    Disconnected,

    #[error("self-loop on vertex `{0}`")]
    SelfLoop(String),

    #[error("edge weight must be positive and finite, got {weight} on `{u}`-`{v}`")]
    BadEdgeWeight { u: String, v: String, weight: f64 },

    #[error("vertex measure must be positive and finite, got {mu} on `{id}`")]
    BadMeasure { id: String, mu: f64 },

    #[error("vertex field is bound to a different graph")]
    GraphMismatch,

    #[error("field has {got} values but the graph has {expected} vertices")]
    LengthMismatch { got: usize, expected: usize },

    #[error("field contains a non-finite value at index {index}")]
    NonFiniteValue { index: usize },

    #[error("right-hand side is incompatible: |∫f dμ| = {integral:.3e} exceeds {tolerance:.3e}")]
    CompatibilityViolated { integral: f64, tolerance: f64 },

    #[error("linear solve stagnated: residual {residual:.3e} after {iterations} iterations")]
    SolveFailed { residual: f64, iterations: usize },

    #[error("screening constant must be positive, got {0}")]
    NonpositiveK(f64),

    #[error("screening constant {k} is below the monotonicity threshold 2λ = {min}")]
    ScreeningBelowTwoLambda { k: f64, min: f64 },

    #[error("parameter {name} must be positive, got {value}")]
    NonpositiveParameter { name: &'static str, value: f64 },

    #[error("vortex list must be nonempty")]
    NoVortices,

    #[error("iterate exceeds the exp-overflow guard (max u = {max_u:.3e})")]
    ExpOverflow { max_u: f64 },

    #[error("solver hit the iteration budget without reaching the residual target")]
    MaxIterationsExceeded(Box<(VertexField, VariationalReport)>),

    #[error("no succeeding upper bracket found after {doublings} doublings (last λ = {last:.6e})")]
    BudgetExhausted { last: f64, doublings: usize },

    #[error("expected exactly 2 additional critical points, found {0}")]
    AmbiguousCriticalSet(usize),

    #[error("period vectors are degenerate: {0}")]
    DegenerateLattice(String),

    #[error("the τ = 1/2 + i preset needs an even refinement n, got {0}")]
    OddRefinement(u32),

    #[error("malformed graph file: {0}")]
    MalformedGraphFile(String),

    #[error("malformed solution file: {0}")]
    MalformedSolutionFile(String),

    #[error("solution was computed on a different graph (hash mismatch)")]
    GraphHashMismatch,
}

pub type Result<T> = std::result::Result<T, Error>;
