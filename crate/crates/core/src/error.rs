use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// `vee` was handed a matrix whose symmetric part is not negligible.
    #[error("matrix is not skew-symmetric (|S + S^T|_F = {asymmetry:.3e})")]
    NotSkew { asymmetry: f64 },

    #[error("Newton iteration did not converge after {iterations} iterations (residual {residual:.3e}); try a smaller time step")]
    NewtonDiverged { iterations: usize, residual: f64 },

    #[error("singular Newton jacobian")]
    SingularJacobian,

    #[error("generalized inertia is singular or ill-conditioned")]
    IllConditionedInertia,

    #[error("integrator failed at step {step}: {source}")]
    Step {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid value for `{field}`: {reason}")]
    Validation { field: String, reason: String },

    #[error("failed to parse {path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn validation(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Validation {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn at_step(self, step: usize) -> Self {
        match self {
            e @ Error::Step { .. } => e,
            e => Error::Step {
                step,
                source: Box::new(e),
            },
        }
    }
}
