use thiserror::Error;

/// Errors surfaced by the solvers, the model setup and the scenario runner.
#[derive(Debug, Error)]
pub enum Error {
    #[error("grid needs at least 2 cells per side, got {0}")]
    GridTooCoarse(usize),

    #[error("field length {got} does not match {expected} nodes")]
    LengthMismatch { expected: usize, got: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("linear solver did not converge after {iterations} iterations (relative residual {residual:.3e})")]
    LinearSolve { iterations: usize, residual: f64 },

    #[error("Newton iteration failed after {iterations} iterations: {reason} (residual {residual:.3e})")]
    Newton {
        iterations: usize,
        residual: f64,
        reason: &'static str,
        last_iterate: Vec<f64>,
    },

    #[error("fixed-point iteration did not converge after {iterations} iterations (residual {residual:.3e})")]
    FixedPoint {
        iterations: usize,
        residual: f64,
        last_iterate: Vec<f64>,
    },

    #[error("time step {step} failed: {source}")]
    Step {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("marching did not reach stationarity within {steps} steps (last max step difference {last_diff:.3e})")]
    StepCapReached { steps: usize, last_diff: f64 },

    #[error("unstable Richardson extrapolation: stability {stability:.3e} exceeds {threshold:.3e}")]
    UnstableExtrapolation { stability: f64, threshold: f64 },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for errors caused by bad input rather than a numerical failure.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::Config(_)
                | Error::InvalidParameter(_)
                | Error::GridTooCoarse(_)
                | Error::LengthMismatch { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
