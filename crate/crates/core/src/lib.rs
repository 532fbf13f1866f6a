//! Bayesian toxicity monitoring for two-cohort Phase II trials.
//!
//! The prior on the pair of toxicity rates is the Dirichlet-based bivariate
//! beta distribution. Posteriors are finite mixtures (of bivariate betas for
//! the joint law, of betas for each marginal), so exceedance probabilities
//! and the frequentist operating characteristics of the resulting stopping
//! rules can be computed exactly.
//!
//! All numerical code is generic over [`Real`] (`f32` or `f64`). The aliases
//! at the crate root fix the scalar to `f64`, which is what the CLI and the
//! HTTP service use.

pub mod bivariate;
pub mod error;
pub mod monitoring;
pub mod numerics;
pub mod oc;
pub mod posterior;
pub mod quadrature;

use std::fmt::{Debug, Display};

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

pub use error::{Error, Result};
pub use monitoring::{Cell, CohortStatus, Rule};
pub use posterior::{Cohort, DataSummary};

/// Floating point scalar the numerical core is written against.
pub trait Real:
    Float + FloatConst + FromPrimitive + ToPrimitive + Debug + Display + Default + Send + Sync + 'static
{
    /// Lossy conversion from `f64`, used for literal constants.
    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("finite literal")
    }

    #[inline]
    fn from_count(n: u32) -> Self {
        Self::from_u32(n).expect("count fits")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}

pub type AlphaVector = bivariate::AlphaVector<f64>;
pub type PriorElicitation = bivariate::PriorElicitation<f64>;
pub type BetaMixture = posterior::BetaMixture<f64>;
pub type JointBBetaMixture = posterior::JointBBetaMixture<f64>;
pub type TrialConfig = monitoring::TrialConfig<f64>;
pub type TrialState = monitoring::TrialState<f64>;
pub type Decision = monitoring::Decision<f64>;
pub type BoundaryTable = monitoring::BoundaryTable;
pub type TrueToxicity = oc::TrueToxicity<f64>;
pub type OcResult = oc::OcResult<f64>;
pub type OcEngine = oc::OcEngine<f64>;

pub type AlphaVectorF32 = bivariate::AlphaVector<f32>;
pub type BetaMixtureF32 = posterior::BetaMixture<f32>;
