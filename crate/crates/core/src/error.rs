use thiserror::Error;

/// Errors raised by the physical model, the integrator and the solvers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("degenerate deformation basis: mass matrix is not positive definite")]
    DegenerateBasis,

    /// A deformation gradient with non-positive determinant was encountered.
    #[error("singular configuration: det F = {det:e} at quadrature node {node}")]
    SingularConfiguration { node: usize, det: f64 },

    /// Some material point came closer to the planet than the impact radius.
    #[error("impact proximity: node {node} at distance {distance:e} from the planet")]
    ImpactProximity { node: usize, distance: f64 },

    #[error("singular point: {0}")]
    Singularity(&'static str),

    #[error("Newton iteration did not converge after {iterations} iterations (last residual {:e})", trace.last().copied().unwrap_or(f64::NAN))]
    NoConvergence { iterations: usize, trace: Vec<f64> },

    #[error("degenerate catalog: principal moments {0:?} are not strictly distinct")]
    DegenerateCatalog([f64; 3]),

    #[error("insufficient data: {0}")]
    InsufficientData(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn ensure_positive(name: &'static str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name,
            reason: format!("must be positive and finite, got {value}"),
        })
    }
}

pub(crate) fn ensure_non_negative(name: &'static str, value: f64) -> Result<()> {
    if value.is_finite() && value >= 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name,
            reason: format!("must be non-negative and finite, got {value}"),
        })
    }
}
