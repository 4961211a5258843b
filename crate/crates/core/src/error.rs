use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("exponential digraph needs a power-of-two node count, got {0}")]
    NotPowerOfTwo(usize),

    #[error("graph is not strongly connected")]
    NotStronglyConnected,

    #[error("no strongly connected geometric digraph found within {budget} attempts (radius {radius}, drop probability {drop_prob})")]
    RetryBudgetExhausted { budget: usize, radius: f64, drop_prob: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("power iteration did not converge in {iterations} iterations (last residual {residual:e})")]
    PerronNotConverged { iterations: usize, residual: f64 },

    #[error("invalid objective: {0}")]
    InvalidObjective(String),

    #[error("node {0} has an empty local dataset")]
    EmptyLocalDataset(usize),

    #[error("reference solver did not converge in {iterations} iterations (gradient norm {grad_norm:e})")]
    SolverNotConverged { iterations: usize, grad_norm: f64 },

    #[error("cannot partition {samples} samples over {nodes} nodes")]
    TooFewSamples { samples: usize, nodes: usize },

    #[error("dataset {path}: {message}")]
    Dataset { path: PathBuf, message: String },

    #[error("invalid step size: {0}")]
    InvalidStep(String),

    #[error("step size {alpha} exceeds the {which} bound alpha <= {bound}")]
    StepBoundViolated { which: &'static str, alpha: f64, bound: f64 },

    #[error("step size {alpha} is infeasible: alpha^2 must stay below k1/(2 k2) = {limit}")]
    InfeasibleStep { alpha: f64, limit: f64 },

    #[error("contraction factor sigma_B = {0} must lie in [0, 1)")]
    NotContractive(f64),

    #[error("theta * mu must exceed 1 (theta > 1/mu), got {0}")]
    ThetaTooSmall(f64),

    #[error("non-finite iterate at k = {k}")]
    NonFinite { k: usize },

    #[error("eigenvector estimate became non-positive at node {node}")]
    NonPositiveWeight { node: usize },

    #[error("invalid trace: {0}")]
    InvalidTrace(String),

    #[error("config error at `{field}`: {message}")]
    Config { field: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }
}
