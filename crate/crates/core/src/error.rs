use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A model or measure parameter violates its domain constraint.
    #[error("invalid parameter `{name}`: {constraint} (got {value})")]
    InvalidParameter { name: &'static str, constraint: &'static str, value: f64 },

    #[error("invalid Lévy measure: {0}")]
    InvalidMeasure(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("quadrature did not converge: estimated error {achieved:.3e} exceeds requested {requested:.3e} after {subdivisions} subdivisions")]
    QuadratureFailure { achieved: f64, requested: f64, subdivisions: usize },

    /// The small-jump truncation leaves an unusable (infinite or absurd) jump rate.
    #[error("jump intensity beyond truncation threshold {threshold} is not finite (rate {rate})")]
    InfiniteIntensity { threshold: f64, rate: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

impl Error {
    pub(crate) fn param(name: &'static str, constraint: &'static str, value: f64) -> Self {
        Error::InvalidParameter { name, constraint, value }
    }
}
