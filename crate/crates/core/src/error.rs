use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("correlation {rho} is infeasible for these prior means; feasible range is [{lo}, {hi}]")]
    InfeasibleCorrelation { rho: f64, lo: f64, hi: f64 },

    /// A mixture component would need a gamma function at a nonpositive argument.
    #[error("degenerate prior: {0}")]
    DegeneratePrior(String),

    #[error("joint density is undefined when a prior cell count is zero (mass lies on a lower-dimensional set)")]
    DegenerateDensity,

    #[error("invalid trial state: {0}")]
    State(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("resource limit exceeded: {0}")]
    Resource(String),

    #[error("no tau in [{tau_min}, {tau_max}] reaches type I error {target}; error at tau = {tau_max} is {alpha_at_max}")]
    InfeasibleCalibration {
        target: f64,
        tau_min: f64,
        tau_max: f64,
        alpha_at_max: f64,
    },

    #[error("quadrature did not converge: {0}")]
    Quadrature(String),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
