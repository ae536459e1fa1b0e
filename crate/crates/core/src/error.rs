use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid domain: {0}")]
    Domain(String),

    #[error("unsupported configuration: {0}")]
    Config(String),

    #[error("evaluation produced a non-finite value: {0}")]
    Evaluation(String),

    #[error("scalar root search did not converge (last residual {residual:e})")]
    ProxNoConvergence { residual: f64 },

    #[error("nonlinear system unsolved after {restarts} restarts (best residual norm {residual_norm:e})")]
    Unsolved { residual_norm: f64, restarts: usize },

    #[error("risk diverges: {0}")]
    Divergence(String),

    #[error("gradient descent diverged: {0}")]
    StepSize(String),

    #[error("matrix is numerically rank-deficient: {0}")]
    Conditioning(String),

    #[error("robust margin infeasible: {0}")]
    Infeasible(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}
