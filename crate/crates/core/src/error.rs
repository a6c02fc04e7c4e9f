use thiserror::Error;

/// Errors raised by the simulation and spectral routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("map violates H1: minimum derivative {min_derivative} is not positive")]
    FailsH1 { min_derivative: f64 },

    #[error("{what} did not converge after {iterations} iterations")]
    NoConvergence { what: &'static str, iterations: usize },

    #[error("no sign change of Lambda found for q in [-5, 5] (lambda0 = {lambda0})")]
    NoBracket { lambda0: f64 },

    #[error("moment curve is not convex: second difference {second_difference} at q = {q}")]
    ConvexityViolation { q: f64, second_difference: f64 },

    #[error("validation failed: {0}")]
    ValidationFailed(String),

    #[error("passage band violated: need 0 < eps < d0 < delta <= r_min, got eps={epsilon}, d0={d0}, delta={delta}, r_min={r_min}")]
    BadBand {
        epsilon: f64,
        d0: f64,
        delta: f64,
        r_min: f64,
    },

    #[error("two-point image hit the diagonal where the observable is singular")]
    DiagonalHit,

    #[error("orbit merged onto the diagonal after {iterate} iterates")]
    OrbitMerged { iterate: usize },

    #[error("only {hits} minus-events at the smallest epsilon (need {required})")]
    TooFewHits { hits: usize, required: usize },

    #[error("fit window [{lo}, {hi}] holds only {points} usable points")]
    WindowTooNarrow { lo: f64, hi: f64, points: usize },

    #[error("log-distance expectation diverged ({value}) at pair ({x}, {y})")]
    Divergent { x: f64, y: f64, value: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}
