//! Laboratory for proactive-recommendation steering experiments: build a
//! simulated feedback world on top of a rating + trust corpus, learn an
//! interference-aware outcome estimator, and search neighbor exposure
//! assignments that steer target users toward a target item at bounded
//! experience cost.

pub mod backbones;
pub mod corpus;
pub mod estimator;
pub mod evaluation;
pub mod mat;
pub mod optim;
pub mod persist;
pub mod pipeline;
pub mod plot;
pub mod rng;
pub mod simworld;
pub mod steering;
pub mod synth;

/// Crate-wide error type; `exit_code` groups variants for the CLI.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {msg}")]
    Parse { path: String, line: usize, msg: String },
    #[error("{0}")]
    InvalidInput(String),
    #[error("{0}")]
    Artifact(String),
    #[error("training diverged after {accepted} accepted epochs")]
    Diverged { accepted: usize },
    #[error("{0}")]
    Convergence(String),
}

impl Error {
    pub fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        Error::Io { path: path.display().to_string(), source }
    }

    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    /// Process exit code: 2 for input problems, 3 for convergence problems.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. } | Error::Parse { .. } | Error::InvalidInput(_) | Error::Artifact(_) => 2,
            Error::Diverged { .. } | Error::Convergence(_) => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

/// Numerically stable logistic function, clamped into the open interval
/// (0, 1) so downstream logarithms and ratios stay finite.
pub fn sigmoid(x: f64) -> f64 {
    let s = if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    };
    s.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
}
