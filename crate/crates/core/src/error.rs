//! Error type shared across the crate.
//!
//! Validation problems (bad arguments, malformed files, shape
//! mismatches) are kept distinct from the two overflow conditions that
//! abort a pipeline run: coefficients outside the one-bit range and
//! quantizer state escaping its stability bound. The CLI maps the two
//! groups to different exit codes.

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument is outside its mathematical domain.
    #[error("domain: {0}")]
    Domain(String),

    /// Tensor or grid shapes do not line up.
    #[error("shape: {0}")]
    Shape(String),

    /// A stated precondition of an operation does not hold.
    #[error("precondition: {0}")]
    Precondition(String),

    /// Coefficients reach the one-bit range; the quantizer downstream
    /// would not be stable.
    #[error("coefficient overflow: |a|_inf = {inf_norm} is not below 1")]
    CoefficientOverflow { inf_norm: f64 },

    /// The noise-shaping state left its stability bound. Never clipped
    /// silently; the offending fiber and step are reported.
    #[error(
        "quantizer state overflow on fiber {fiber:?} along axis {axis} at step {step}: \
         |u| = {value:.3} exceeds bound {bound}"
    )]
    StabilityOverflow {
        fiber: Vec<usize>,
        axis: usize,
        step: usize,
        value: f64,
        bound: f64,
    },

    /// Structural problem in a network graph.
    #[error("graph: {0}")]
    Graph(String),

    /// Malformed serialized artifact.
    #[error("format: {0}")]
    Format(String),

    /// A requested build exceeds a configured size cap.
    #[error("resource cap exceeded: {what} = {needed} > cap {cap}")]
    ResourceCap {
        what: &'static str,
        needed: usize,
        cap: usize,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub fn precondition(msg: impl Into<String>) -> Self {
        Error::Precondition(msg.into())
    }

    pub fn graph(msg: impl Into<String>) -> Self {
        Error::Graph(msg.into())
    }

    pub fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }

    /// True for the two conditions that indicate a numerically
    /// impossible run rather than bad input.
    pub fn is_overflow(&self) -> bool {
        matches!(
            self,
            Error::CoefficientOverflow { .. } | Error::StabilityOverflow { .. }
        )
    }
}
