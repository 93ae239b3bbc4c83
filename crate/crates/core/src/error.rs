use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("{name} is not positive definite at node {node} (t = {time})")]
    NotPositiveDefinite {
        name: String,
        node: usize,
        time: f64,
    },

    #[error("integration diverged at t = {time}")]
    Divergence { time: f64 },

    #[error(
        "no periodic solution: monodromy spectral radius {radius:.12} is not below one ({context})"
    )]
    Unstable { radius: f64, context: String },

    #[error("no convergence after {iterations} iterations (last residual {last:.3e})")]
    NonConvergence {
        iterations: usize,
        last: f64,
        history: Vec<f64>,
    },

    #[error("assumption violated: {0}")]
    Assumption(String),

    #[error("degenerate solution: {0}")]
    Degenerate(String),

    #[error("iteration {iteration}: {source}")]
    AtIteration {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn at_iteration(self, iteration: usize) -> Self {
        match self {
            e @ Error::AtIteration { .. } => e,
            e => Error::AtIteration {
                iteration,
                source: Box::new(e),
            },
        }
    }

    /// The innermost error, skipping iteration wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::AtIteration { source, .. } => source.root(),
            e => e,
        }
    }

    /// Process exit status used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self.root() {
            Error::Config(_) | Error::InvalidInput(_) | Error::Dimension(_) => 2,
            Error::NonConvergence { .. } | Error::Divergence { .. } => 3,
            Error::Unstable { .. }
            | Error::Assumption(_)
            | Error::NotPositiveDefinite { .. }
            | Error::Degenerate(_) => 4,
            Error::Io(_) => 5,
            Error::AtIteration { .. } => unreachable!(),
        }
    }
}
