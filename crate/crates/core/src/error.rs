use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A cell touching `Ω^n` was not active at step `n-1`, so the previous
    /// solution is not available there. Usually `δ` is too small for `Δt`.
    #[error("extension coverage violated at step {step}: cell {cell} intersects the domain but was inactive at the previous step")]
    ExtensionCoverage { step: usize, cell: usize },

    #[error("linear solver did not converge after {iterations} iterations (relative residual {residual:.3e})")]
    SolverDivergence { iterations: usize, residual: f64 },

    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },

    #[error("run failed at step {step}: {source}")]
    Step {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// Strips any `Step` wrapper.
    pub fn root(&self) -> &Error {
        match self {
            Error::Step { source, .. } => source.root(),
            other => other,
        }
    }
}
