use thiserror::Error;

/// Library-wide error type. Variants map onto the failure classes the
/// operations distinguish: bad inputs, analytic domain violations, quadrature
/// tolerance failures, contract violations between ensembles, resource
/// refusals, and existence-gate refusals.
#[derive(Debug, Error)]
pub enum SpdeError {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("tolerance not attainable: {0}")]
    Tolerance(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("capacity exceeded: {0}")]
    Capacity(String),

    #[error("existence gate refused: upsilon {} not below threshold {threshold}",
            .upsilon.map_or("divergent".to_string(), |u| u.to_string()))]
    GateRefused {
        upsilon: Option<f64>,
        threshold: f64,
    },
}

pub type Result<T> = std::result::Result<T, SpdeError>;

impl SpdeError {
    pub fn parameter(msg: impl Into<String>) -> Self {
        SpdeError::Parameter(msg.into())
    }

    pub fn domain(msg: impl Into<String>) -> Self {
        SpdeError::Domain(msg.into())
    }

    pub fn tolerance(msg: impl Into<String>) -> Self {
        SpdeError::Tolerance(msg.into())
    }

    pub fn contract(msg: impl Into<String>) -> Self {
        SpdeError::Contract(msg.into())
    }

    pub fn capacity(msg: impl Into<String>) -> Self {
        SpdeError::Capacity(msg.into())
    }
}
