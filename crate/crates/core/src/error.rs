use thiserror::Error;

/// Errors raised by the numerical laboratory.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A configuration value violates a structural invariant.
    #[error("configuration error: {0}")]
    Config(String),

    /// A function was called outside its documented contract.
    #[error("contract violation: {0}")]
    Contract(String),

    /// The zero locus is not transversal at a root.
    #[error("transversality violation at {point:?}: |df/dx| = {slope:e}")]
    Transversality { point: [f64; 3], slope: f64 },

    /// An axis line crosses the zero locus in a way that is not a union of graphs.
    #[error("graph condition violated: {0}")]
    GraphCondition(String),

    /// The requested accuracy could not be certified.
    #[error("tolerance not met: achieved {achieved:e}, requested {requested:e}")]
    ToleranceNotMet { achieved: f64, requested: f64 },

    /// Parsing of a textual representation failed.
    #[error("parse error: {0}")]
    Parse(String),

    /// The operation is not defined for this variant.
    #[error("unsupported: {0}")]
    Unsupported(String),
}

pub type Result<T> = std::result::Result<T, Error>;
