use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A parameter failed validation. `path` names the offending item.
    #[error("invalid parameter `{path}`: {reason}")]
    Validation { path: String, reason: String },

    /// Non-finite state while integrating a flow map.
    #[error("flow integration diverged at step {step} of {steps}")]
    FlowDivergence { step: usize, steps: usize },

    /// Non-finite state while simulating a path.
    #[error("path diverged at time {time}")]
    PathDivergence { time: f64 },

    /// Too many paths of an ensemble diverged.
    #[error("{diverged} of {n_paths} paths diverged (limit 0.1%)")]
    EnsembleDivergence { diverged: usize, n_paths: usize },

    /// Jump-quadrature cache would exceed the configured memory cap.
    #[error("jump quadrature cache needs {estimate} bytes, cap is {cap} bytes")]
    CacheTooLarge { estimate: usize, cap: usize },

    /// Explicit time stepping blew up.
    #[error("unstable time stepping at t = {time}: max |p| grew from {before:e} to {after:e} in one step")]
    Instability { time: f64, before: f64, after: f64 },

    /// Two objects built for different geometries were combined.
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

impl Error {
    pub(crate) fn validation(path: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Validation {
            path: path.into(),
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
