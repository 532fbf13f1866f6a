//! Conjugate updates of the bivariate beta prior under two independent
//! binomial likelihoods.
//!
//! The joint posterior is a finite mixture of bivariate betas, one component
//! per way of splitting each cohort's observed toxic and non-toxic subjects
//! between the two potential-outcome cells they are compatible with. Each
//! marginal collapses to a mixture of `n_other + 1` betas whose weights are
//! sums of beta-binomial kernels.
//!
//! Weights are always formed as natural logs and normalized with
//! log-sum-exp; the scaling constants never appear explicitly.

use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use serde::{Deserialize, Serialize};

use crate::bivariate::{AlphaVector, BetaShape};
use crate::numerics::{beta_sf, ln_beta, ln_beta_pdf, ln_choose, ln_gamma, lse};
use crate::{Error, Real, Result};

/// Components whose log-weight falls this far below the largest one are
/// dropped from marginal mixtures. `exp(-45) < 3e-20`, so even a few
/// thousand dropped components move any probability by less than 1e-15.
pub const LOG_WEIGHT_CUTOFF: f64 = 45.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Cohort {
    One,
    Two,
}

impl Cohort {
    pub const BOTH: [Cohort; 2] = [Cohort::One, Cohort::Two];

    pub fn index(self) -> usize {
        match self {
            Cohort::One => 0,
            Cohort::Two => 1,
        }
    }

    pub fn other(self) -> Cohort {
        match self {
            Cohort::One => Cohort::Two,
            Cohort::Two => Cohort::One,
        }
    }
}

impl TryFrom<u8> for Cohort {
    type Error = String;

    fn try_from(v: u8) -> std::result::Result<Self, Self::Error> {
        match v {
            1 => Ok(Cohort::One),
            2 => Ok(Cohort::Two),
            other => Err(format!("cohort must be 1 or 2, got {other}")),
        }
    }
}

impl From<Cohort> for u8 {
    fn from(c: Cohort) -> u8 {
        c.index() as u8 + 1
    }
}

impl std::fmt::Display for Cohort {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.index() + 1)
    }
}

/// Enrolled subjects and observed toxicities per cohort.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSummary {
    pub n1: u32,
    pub k1: u32,
    pub n2: u32,
    pub k2: u32,
}

impl DataSummary {
    pub fn new(n1: u32, k1: u32, n2: u32, k2: u32) -> Result<Self> {
        let d = Self { n1, k1, n2, k2 };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k1 > self.n1 || self.k2 > self.n2 {
            return Err(Error::domain(format!("toxicity counts exceed enrollment: {self:?}")));
        }
        Ok(())
    }

    /// `(n, k)` for one cohort.
    pub fn counts(&self, cohort: Cohort) -> (u32, u32) {
        match cohort {
            Cohort::One => (self.n1, self.k1),
            Cohort::Two => (self.n2, self.k2),
        }
    }

    pub fn with_counts(mut self, cohort: Cohort, n: u32, k: u32) -> Self {
        match cohort {
            Cohort::One => {
                self.n1 = n;
                self.k1 = k;
            }
            Cohort::Two => {
                self.n2 = n;
                self.k2 = k;
            }
        }
        self
    }

    /// Exchanges the two cohorts.
    pub fn swap(&self) -> Self {
        Self { n1: self.n2, k1: self.k2, n2: self.n1, k2: self.k1 }
    }

    pub fn total_n(&self) -> u32 {
        self.n1 + self.n2
    }

    pub fn total_k(&self) -> u32 {
        self.k1 + self.k2
    }
}

/// One weighted beta component.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaComponent<T> {
    pub w: T,
    pub a: T,
    pub b: T,
}

/// Finite mixture of beta distributions with weights summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BetaMixture<T> {
    pub components: Vec<BetaComponent<T>>,
}

impl<T: Real> BetaMixture<T> {
    pub fn single(shape: BetaShape<T>) -> Self {
        Self { components: vec![BetaComponent { w: T::one(), a: shape.a, b: shape.b }] }
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn total_weight(&self) -> T {
        self.components.iter().fold(T::zero(), |s, c| s + c.w)
    }

    pub fn mean(&self) -> T {
        self.components.iter().fold(T::zero(), |s, c| s + c.w * c.a / (c.a + c.b))
    }

    /// `P(theta > x)` under the mixture.
    pub fn survival(&self, x: T) -> T {
        let p = self.components.iter().fold(T::zero(), |s, c| s + c.w * beta_sf(x, c.a, c.b));
        p.max(T::zero()).min(T::one())
    }

    pub fn density(&self, x: T) -> T {
        if !(x > T::zero() && x < T::one()) {
            return T::zero();
        }
        self.components.iter().fold(T::zero(), |s, c| s + c.w * ln_beta_pdf(x, c.a, c.b).exp())
    }

    /// Builds a mixture from unnormalized log-weights, dropping components
    /// far below the dominant one.
    fn from_log_weights(parts: Vec<(T, T, T)>) -> Result<Self> {
        let logs: Vec<T> = parts.iter().map(|p| p.0).collect();
        let max = logs.iter().copied().fold(T::neg_infinity(), T::max);
        if max == T::neg_infinity() {
            return Err(Error::DegeneratePrior("posterior has no mass".into()));
        }
        let cutoff = max - T::lit(LOG_WEIGHT_CUTOFF);
        let kept: Vec<(T, T, T)> = parts.into_iter().filter(|p| p.0 >= cutoff).collect();
        let logs: Vec<T> = kept.iter().map(|p| p.0).collect();
        let total = lse(&logs);
        Ok(Self {
            components: kept
                .into_iter()
                .map(|(lw, a, b)| BetaComponent { w: (lw - total).exp(), a, b })
                .collect(),
        })
    }
}

/// One component of the joint posterior: the prior shifted by `z`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointComponent<T> {
    pub weight: T,
    pub alpha: AlphaVector<T>,
    /// Integer shift `[z11, z10, z01, z00]` added to the prior cells.
    pub z: [u32; 4],
}

/// Finite mixture of bivariate betas.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointBBetaMixture<T> {
    pub components: Vec<JointComponent<T>>,
}

impl<T: Real> JointBBetaMixture<T> {
    pub fn total_weight(&self) -> T {
        self.components.iter().fold(T::zero(), |s, c| s + c.weight)
    }

    /// Joint density of the mixture. Requires every component cell positive.
    pub fn density(&self, x: T, y: T) -> Result<T> {
        let mut total = T::zero();
        for c in &self.components {
            total = total + c.weight * c.alpha.joint_density(x, y)?;
        }
        Ok(total)
    }

    /// Integrates out the other cohort. Components sharing the same marginal
    /// shape are merged; the result is ordered by increasing first shape.
    pub fn marginal(&self, cohort: Cohort) -> BetaMixture<T> {
        let mut merged: Vec<(u32, BetaComponent<T>)> = Vec::new();
        for c in &self.components {
            let (key, a, b) = match cohort {
                Cohort::One => (c.z[0] + c.z[1], c.alpha.a1p(), c.alpha.a0p()),
                Cohort::Two => (c.z[0] + c.z[2], c.alpha.ap1(), c.alpha.ap0()),
            };
            match merged.iter_mut().find(|(k, _)| *k == key) {
                Some((_, comp)) => comp.w = comp.w + c.weight,
                None => merged.push((key, BetaComponent { w: c.weight, a, b })),
            }
        }
        merged.sort_by_key(|(k, _)| *k);
        BetaMixture { components: merged.into_iter().map(|(_, c)| c).collect() }
    }
}

fn require_positive<T: Real>(args: &[T], what: &str) -> Result<()> {
    if args.iter().any(|&a| !(a > T::zero())) {
        return Err(Error::DegeneratePrior(format!(
            "{what}: gamma argument is not positive ({args:?}); a zero prior cell is not shifted by the data"
        )));
    }
    Ok(())
}

/// Full joint posterior as a mixture over the latent splits
/// `(x1, x2, y1, y2)` of each cohort's toxic and non-toxic subjects.
///
/// Component `alpha + z` with
/// `z = (x1 + y1, k1 - x1 + y2, x2 + k2 - y1, n1 - k1 - x2 + n2 - k2 - y2)`
/// and weight proportional to the four binomial coefficients times `B(alpha + z)`.
pub fn joint_posterior<T: Real>(prior: &AlphaVector<T>, d: &DataSummary) -> Result<JointBBetaMixture<T>> {
    prior.validate()?;
    d.validate()?;
    let DataSummary { n1, k1, n2, k2 } = *d;
    let (m1, m2) = (n1 - k1, n2 - k2);
    let mut logs = Vec::new();
    let mut comps = Vec::new();
    for x1 in 0..=k1 {
        for x2 in 0..=m1 {
            for y1 in 0..=k2 {
                for y2 in 0..=m2 {
                    let z = [x1 + y1, k1 - x1 + y2, x2 + k2 - y1, m1 - x2 + m2 - y2];
                    let alpha = prior.shifted(z);
                    let cells = alpha.cells();
                    require_positive(&cells, "joint posterior component")?;
                    let lw = ln_choose::<T>(k1, x1)
                        + ln_choose::<T>(m1, x2)
                        + ln_choose::<T>(k2, y1)
                        + ln_choose::<T>(m2, y2)
                        + cells.iter().fold(T::zero(), |s, &c| s + ln_gamma(c));
                    logs.push(lw);
                    comps.push((alpha, z));
                }
            }
        }
    }
    let total = lse(&logs);
    Ok(JointBBetaMixture {
        components: comps
            .into_iter()
            .zip(logs)
            .map(|((alpha, z), lw)| JointComponent { weight: (lw - total).exp(), alpha, z })
            .collect(),
    })
}

/// Marginal posterior of cohort 1 as a beta mixture over
/// `y = 0..=n2`: component `Be(a1+ + k1 + n2 - y, a0+ + n1 - k1 + y)` with
/// weight
///
/// ```text
/// g1(y) ∝ Γ(a1+ + k1 + n2 - y) Γ(a0+ + n1 - k1 + y)
///         Σ_{y2} C(k2, y - y2) C(n2 - k2, y2)
///                B(a00 + y2, a01 + y - y2) B(a10 + n2 - k2 - y2, a11 + k2 - y + y2)
/// ```
///
/// with `y2` from `max(0, y - k2)` to `min(n2 - k2, y)`.
fn cohort_one_marginal<T: Real>(prior: &AlphaVector<T>, d: &DataSummary) -> Result<BetaMixture<T>> {
    let DataSummary { n1, k1, n2, k2 } = *d;
    let m2 = n2 - k2;
    let AlphaVector { a11, a10, a01, a00 } = *prior;
    let c = T::from_count;
    if n2 == 0 {
        let (a, b) = (prior.a1p() + c(k1), prior.a0p() + c(n1 - k1));
        require_positive(&[a, b], "marginal component")?;
        return Ok(BetaMixture { components: vec![BetaComponent { w: T::one(), a, b }] });
    }
    let mut parts = Vec::with_capacity(n2 as usize + 1);
    let mut inner = Vec::with_capacity(n2 as usize + 1);
    for y in 0..=n2 {
        let a = prior.a1p() + c(k1 + n2 - y);
        let b = prior.a0p() + c(n1 - k1 + y);
        require_positive(&[a, b], "marginal component")?;
        inner.clear();
        for y2 in y.saturating_sub(k2)..=m2.min(y) {
            let args = [a00 + c(y2), a01 + c(y - y2), a10 + c(m2 - y2), a11 + c(k2 + y2 - y)];
            require_positive(&args, "marginal weight")?;
            inner.push(
                ln_choose::<T>(k2, y - y2)
                    + ln_choose::<T>(m2, y2)
                    + ln_beta(args[0], args[1])
                    + ln_beta(args[2], args[3]),
            );
        }
        parts.push((ln_gamma(a) + ln_gamma(b) + lse(&inner), a, b));
    }
    BetaMixture::from_log_weights(parts)
}

/// Marginal posterior of one cohort's toxicity rate.
pub fn marginal_posterior<T: Real>(prior: &AlphaVector<T>, d: &DataSummary, cohort: Cohort) -> Result<BetaMixture<T>> {
    prior.validate()?;
    d.validate()?;
    match cohort {
        Cohort::One => cohort_one_marginal(prior, d),
        // cohort 2 is cohort 1 after relabeling (a10 <-> a01, data swapped)
        Cohort::Two => cohort_one_marginal(&prior.swap_cohorts(), &d.swap()),
    }
}

fn check_threshold<T: Real>(theta0: T) -> Result<()> {
    if !(theta0 >= T::zero() && theta0 <= T::one()) {
        return Err(Error::domain(format!("threshold must lie in [0, 1], got {theta0}")));
    }
    Ok(())
}

/// `P(theta_i > theta0 | data)` under the bivariate beta prior.
pub fn exceedance_correlated<T: Real>(prior: &AlphaVector<T>, d: &DataSummary, theta0: T, cohort: Cohort) -> Result<T> {
    check_threshold(theta0)?;
    Ok(marginal_posterior(prior, d, cohort)?.survival(theta0))
}

/// Single-arm posterior of one cohort under its own beta marginal prior.
pub fn independent_posterior<T: Real>(prior: &AlphaVector<T>, n: u32, k: u32, cohort: Cohort) -> Result<BetaShape<T>> {
    prior.validate()?;
    if k > n {
        return Err(Error::domain(format!("k = {k} exceeds n = {n}")));
    }
    let (a, b) = match cohort {
        Cohort::One => (prior.a1p(), prior.a0p()),
        Cohort::Two => (prior.ap1(), prior.ap0()),
    };
    let post = BetaShape::new(a + T::from_count(k), b + T::from_count(n - k));
    require_positive(&[post.a, post.b], "independent posterior")?;
    Ok(post)
}

/// `P(theta_i > theta0 | n_i, k_i)` ignoring the other cohort.
pub fn exceedance_independent<T: Real>(prior: &AlphaVector<T>, n: u32, k: u32, theta0: T, cohort: Cohort) -> Result<T> {
    check_threshold(theta0)?;
    Ok(independent_posterior(prior, n, k, cohort)?.survival(theta0))
}

/// Pooled posterior: the two marginal priors averaged, updated with the
/// combined counts.
pub fn pooled_posterior<T: Real>(prior: &AlphaVector<T>, d: &DataSummary) -> Result<BetaShape<T>> {
    prior.validate()?;
    d.validate()?;
    let two = T::lit(2.0);
    let a = (two * prior.a11 + prior.a10 + prior.a01) / two + T::from_count(d.total_k());
    let b = (two * prior.a00 + prior.a01 + prior.a10) / two + T::from_count(d.total_n() - d.total_k());
    require_positive(&[a, b], "pooled posterior")?;
    Ok(BetaShape::new(a, b))
}

/// `P(theta > theta0 | n1 + n2, k1 + k2)`; the same for both cohorts.
pub fn exceedance_pooled<T: Real>(prior: &AlphaVector<T>, d: &DataSummary, theta0: T) -> Result<T> {
    check_threshold(theta0)?;
    Ok(pooled_posterior(prior, d)?.survival(theta0))
}

/// Memo of marginal mixtures for one prior. Reads behave exactly like
/// calling [`marginal_posterior`]; concurrent fills of the same key are
/// idempotent.
#[derive(Debug)]
pub struct PosteriorCache<T> {
    prior: AlphaVector<T>,
    map: RwLock<HashMap<(DataSummary, Cohort), Arc<BetaMixture<T>>>>,
}

impl<T: Real> PosteriorCache<T> {
    pub fn new(prior: AlphaVector<T>) -> Result<Self> {
        prior.validate()?;
        Ok(Self { prior, map: RwLock::new(HashMap::new()) })
    }

    pub fn prior(&self) -> &AlphaVector<T> {
        &self.prior
    }

    pub fn marginal(&self, d: &DataSummary, cohort: Cohort) -> Result<Arc<BetaMixture<T>>> {
        let key = (*d, cohort);
        if let Some(hit) = self.map.read().expect("cache lock").get(&key) {
            return Ok(Arc::clone(hit));
        }
        let mix = Arc::new(marginal_posterior(&self.prior, d, cohort)?);
        let mut map = self.map.write().expect("cache lock");
        Ok(Arc::clone(map.entry(key).or_insert(mix)))
    }

    pub fn len(&self) -> usize {
        self.map.read().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table2_prior() -> AlphaVector<f64> {
        AlphaVector::new(0.36, 0.24, 0.24, 2.16).unwrap()
    }

    #[test]
    fn no_data_joint_is_the_prior() {
        let a = table2_prior();
        let j = joint_posterior(&a, &DataSummary::default()).unwrap();
        assert_eq!(j.components.len(), 1);
        assert_eq!(j.components[0].alpha, a);
        assert!((j.components[0].weight - 1.0).abs() < 1e-15);
    }

    #[test]
    fn joint_component_count_and_weights() {
        let d = DataSummary::new(4, 2, 3, 1).unwrap();
        let j = joint_posterior(&table2_prior(), &d).unwrap();
        assert_eq!(j.components.len(), 3 * 3 * 2 * 3);
        assert!((j.total_weight() - 1.0).abs() < 1e-12);
        for c in &j.components {
            assert!(c.weight >= 0.0);
            assert_eq!(c.z.iter().sum::<u32>(), 7);
        }
    }

    #[test]
    fn cohort_two_without_data_reduces_to_single_beta() {
        let a = table2_prior();
        for (n1, k1) in [(0, 0), (3, 1), (7, 7)] {
            let m = marginal_posterior(&a, &DataSummary::new(n1, k1, 0, 0).unwrap(), Cohort::One).unwrap();
            assert_eq!(m.len(), 1);
            let c = m.components[0];
            assert!((c.w - 1.0).abs() < 1e-15);
            assert!((c.a - (0.6 + k1 as f64)).abs() < 1e-14);
            assert!((c.b - (2.4 + (n1 - k1) as f64)).abs() < 1e-14);
        }
    }

    #[test]
    fn marginal_matches_collapsed_joint() {
        let a = AlphaVector::new(0.7f64, 0.3, 1.1, 2.0).unwrap();
        let d = DataSummary::new(4, 3, 3, 1).unwrap();
        for cohort in Cohort::BOTH {
            let direct = marginal_posterior(&a, &d, cohort).unwrap();
            let mut collapsed = joint_posterior(&a, &d).unwrap().marginal(cohort);
            // direct ordering runs from the largest first shape down
            collapsed.components.reverse();
            assert_eq!(direct.len(), collapsed.len());
            for (p, q) in direct.components.iter().zip(&collapsed.components) {
                assert!((p.a - q.a).abs() < 1e-12 && (p.b - q.b).abs() < 1e-12);
                assert!((p.w - q.w).abs() < 1e-12, "{p:?} vs {q:?}");
            }
        }
    }

    #[test]
    fn exceedance_examples() {
        let a = table2_prior();
        let d = DataSummary::new(3, 3, 0, 0).unwrap();
        assert!(exceedance_correlated(&a, &d, 0.2, Cohort::One).unwrap() >= 0.98);
        let d = DataSummary::new(6, 4, 6, 0).unwrap();
        assert!(exceedance_correlated(&a, &d, 0.2, Cohort::One).unwrap() < 0.98);
        let d = DataSummary::new(6, 5, 6, 0).unwrap();
        assert!(exceedance_correlated(&a, &d, 0.2, Cohort::One).unwrap() >= 0.98);

        let d = DataSummary::new(4, 2, 5, 3).unwrap();
        assert!(exceedance_correlated(&a, &d, 1e-9, Cohort::One).unwrap() > 1.0 - 1e-9);
        assert!(exceedance_correlated(&a, &d, 1.0 - 1e-9, Cohort::One).unwrap() < 1e-9);
        assert!(exceedance_correlated(&a, &d, 1.2, Cohort::One).is_err());
    }

    #[test]
    fn independent_examples() {
        let a = table2_prior();
        for (n, k) in [(3, 3), (4, 4), (5, 4)] {
            assert!(exceedance_independent(&a, n, k, 0.2, Cohort::One).unwrap() >= 0.98, "{n} {k}");
        }
        assert!(exceedance_independent(&a, 3, 2, 0.2, Cohort::One).unwrap() < 0.98);
        assert_eq!(exceedance_independent(&a, 3, 0, 0.0, Cohort::One).unwrap(), 1.0);
        assert!(exceedance_independent(&a, 2, 3, 0.2, Cohort::One).is_err());
    }

    #[test]
    fn pooled_examples() {
        let a = table2_prior();
        let p = pooled_posterior(&a, &DataSummary::default()).unwrap();
        assert!((p.a - 0.6).abs() < 1e-15 && (p.b - 2.4).abs() < 1e-15);
        // Be(6.6, 8.4) survival at 0.2 is 0.97965..., just under 0.98
        let d = DataSummary::new(6, 6, 6, 0).unwrap();
        let v = exceedance_pooled(&a, &d, 0.2).unwrap();
        assert!((v - 0.97965349781265870943).abs() < 1e-12);
        let d = DataSummary::new(6, 7, 6, 0);
        assert!(d.is_err());
        let d = DataSummary::new(7, 7, 7, 0).unwrap();
        assert!(exceedance_pooled(&a, &d, 0.2).unwrap() >= 0.98);
        let d = DataSummary::new(5, 2, 8, 4).unwrap();
        assert_eq!(exceedance_pooled(&a, &d, 0.2).unwrap(), exceedance_pooled(&a, &d.swap(), 0.2).unwrap());
    }

    #[test]
    fn degenerate_prior_is_reported() {
        // rho = 1 with equal means leaves a10 = a01 = 0
        let a = AlphaVector::new(0.6, 0.0, 0.0, 2.4).unwrap();
        let d = DataSummary::new(2, 1, 2, 0).unwrap();
        assert!(matches!(marginal_posterior(&a, &d, Cohort::One), Err(Error::DegeneratePrior(_))));
        assert!(matches!(joint_posterior(&a, &d), Err(Error::DegeneratePrior(_))));
    }

    #[test]
    fn cache_is_transparent() {
        let a = table2_prior();
        let cache = PosteriorCache::new(a).unwrap();
        let d = DataSummary::new(5, 2, 5, 1).unwrap();
        let first = cache.marginal(&d, Cohort::Two).unwrap();
        let again = cache.marginal(&d, Cohort::Two).unwrap();
        assert!(Arc::ptr_eq(&first, &again));
        assert_eq!(*first, marginal_posterior(&a, &d, Cohort::Two).unwrap());
        assert_eq!(cache.len(), 1);
    }

    #[test]
    fn mixture_json_is_a_list_of_wab() {
        let m = BetaMixture { components: vec![BetaComponent { w: 1.0, a: 0.6, b: 2.4 }] };
        assert_eq!(serde_json::to_string(&m).unwrap(), r#"[{"w":1.0,"a":0.6,"b":2.4}]"#);
    }

    #[test]
    fn cohort_json_is_numeric() {
        assert_eq!(serde_json::to_string(&Cohort::Two).unwrap(), "2");
        assert_eq!(serde_json::from_str::<Cohort>("1").unwrap(), Cohort::One);
        assert!(serde_json::from_str::<Cohort>("3").is_err());
    }
}
