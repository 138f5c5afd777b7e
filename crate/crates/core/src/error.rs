use thiserror::Error;

use crate::dynamics::Trajectory;
use crate::gauge::GaugeSolution;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Error)]
pub enum Error {
    /// Malformed input: empty lists, non-finite entries, bad config values.
    #[error("invalid input: {0}")]
    Validation(String),

    #[error("frequencies {first} and {second} coincide (indices {i}, {j}); the system is not controllable")]
    Controllability {
        i: usize,
        j: usize,
        first: f64,
        second: f64,
    },

    #[error("work budget exceeded: {0}")]
    Budget(String),

    #[error("gradient of the support function is undefined at z = 0")]
    GradientUndefined,

    #[error("chain rule through z(p) is near-singular: z[{index}] = {value:e} <= {guard:e}")]
    NearSingular { index: usize, value: f64, guard: f64 },

    #[error("gauge solver did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence {
        iterations: usize,
        residual: f64,
        best: Box<GaugeSolution>,
    },

    #[error("simulation failed at t = {time}: {reason}")]
    Simulation {
        time: f64,
        reason: String,
        partial: Box<Trajectory>,
    },

    #[error("time-optimal search exhausted its budget: {0}")]
    SearchExhausted(String),
}

impl Error {
    /// True for failures of a numerical procedure, as opposed to bad input.
    pub fn is_numeric(&self) -> bool {
        !matches!(
            self,
            Error::Validation(_) | Error::Controllability { .. } | Error::Budget(_)
        )
    }
}

// The partial trajectory can be huge; keep `unwrap` messages readable.
impl std::fmt::Debug for Error {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Error::Simulation { partial, .. } => {
                write!(f, "{self} [{} recorded rows]", partial.len())
            }
            _ => write!(f, "{self}"),
        }
    }
}
