use thiserror::Error;

/// Errors raised anywhere in the discretization and solve pipeline.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid grid: axis {axis} has {count} nodes, need at least 3")]
    InvalidGrid { axis: usize, count: usize },

    #[error("invalid domain: axis {axis} has hi <= lo")]
    InvalidDomain { axis: usize },

    #[error("stencil out of range at node {node}: offset {offset:?} is not in the extended grid")]
    StencilOutOfRange { node: usize, offset: Vec<isize> },

    #[error("node {node} is not an interior node")]
    NotInterior { node: usize },

    #[error("invalid problem: {0}")]
    InvalidProblem(String),

    #[error("unknown problem '{0}'")]
    UnknownProblem(String),

    #[error("invalid scheme parameters: {0}")]
    InvalidParams(String),

    #[error("problem evaluation produced {value} at x = {x:?}")]
    ProblemEval { x: Vec<f64>, value: f64 },

    #[error("problem '{0}' does not provide analytic partial derivatives")]
    MissingPartials(String),

    #[error("problem '{0}' is not affine in (P, q, v)")]
    NotLinear(String),

    #[error("singular system: {reason}")]
    Singular { reason: String, condition_estimate: Option<f64> },

    #[error("iteration diverged: {0}")]
    Diverged(String),

    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
