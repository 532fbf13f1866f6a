//! Dirichlet-based bivariate beta prior.
//!
//! With `(U11, U10, U01, U00) ~ Dirichlet(a11, a10, a01, a00)` the pair
//! `X = U11 + U10`, `Y = U11 + U01` has beta marginals
//! `X ~ Be(a11 + a10, a01 + a00)` and `Y ~ Be(a11 + a01, a10 + a00)` and
//! correlation `(a11 a00 - a10 a01) / sqrt(a1+ a+1 a0+ a+0)`.
//!
//! Cell counts may be zero for posterior mixture arithmetic (data shifts the
//! gamma arguments away from zero) but the joint density needs all four
//! strictly positive.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::numerics::ln_gamma;
use crate::quadrature::integrate_endpoint_singular;
use crate::{Error, Real, Result};

/// Four Dirichlet parameters, interpretable as imaginary subject counts by
/// potential-outcome cell: toxic in both cohorts, only cohort 1, only
/// cohort 2, neither.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlphaVector<T> {
    pub a11: T,
    pub a10: T,
    pub a01: T,
    pub a00: T,
}

/// Interpretable prior summaries from which an [`AlphaVector`] is solved.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorElicitation<T> {
    /// Prior mean toxicity in cohort 1.
    pub p1: T,
    /// Prior mean toxicity in cohort 2.
    pub p2: T,
    /// Effective sample size, the total pseudo-count.
    pub ess: T,
    pub rho: T,
}

/// Shape parameters of a univariate beta distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaShape<T> {
    pub a: T,
    pub b: T,
}

impl<T: Real> BetaShape<T> {
    pub fn new(a: T, b: T) -> Self {
        Self { a, b }
    }

    pub fn mean(&self) -> T {
        self.a / (self.a + self.b)
    }

    /// `P(theta > x)`.
    pub fn survival(&self, x: T) -> T {
        crate::numerics::beta_sf(x, self.a, self.b)
    }
}

/// Closed interval of feasible prior correlations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RhoRange<T> {
    pub lo: T,
    pub hi: T,
}

impl<T: Real> RhoRange<T> {
    pub fn contains(&self, rho: T) -> bool {
        rho >= self.lo && rho <= self.hi
    }
}

impl<T: Real> AlphaVector<T> {
    pub fn new(a11: T, a10: T, a01: T, a00: T) -> Result<Self> {
        let alpha = Self { a11, a10, a01, a00 };
        alpha.validate()?;
        Ok(alpha)
    }

    /// All components finite and nonnegative with a positive total.
    pub fn validate(&self) -> Result<()> {
        let cells = self.cells();
        if cells.iter().any(|c| !c.is_finite() || *c < T::zero()) {
            return Err(Error::domain(format!(
                "alpha components must be finite and nonnegative, got {cells:?}"
            )));
        }
        if !(self.ess() > T::zero()) {
            return Err(Error::domain("alpha components must not all be zero"));
        }
        Ok(())
    }

    /// `[a11, a10, a01, a00]`.
    pub fn cells(&self) -> [T; 4] {
        [self.a11, self.a10, self.a01, self.a00]
    }

    pub fn ess(&self) -> T {
        self.a11 + self.a10 + self.a01 + self.a00
    }

    /// `a1+ = a11 + a10`, the cohort-1 toxic pseudo-count.
    pub fn a1p(&self) -> T {
        self.a11 + self.a10
    }

    /// `a+1 = a11 + a01`, the cohort-2 toxic pseudo-count.
    pub fn ap1(&self) -> T {
        self.a11 + self.a01
    }

    /// `a0+ = a01 + a00`.
    pub fn a0p(&self) -> T {
        self.a01 + self.a00
    }

    /// `a+0 = a10 + a00`.
    pub fn ap0(&self) -> T {
        self.a10 + self.a00
    }

    /// Relabels the cohorts, exchanging `a10` and `a01`.
    pub fn swap_cohorts(&self) -> Self {
        Self { a11: self.a11, a10: self.a01, a01: self.a10, a00: self.a00 }
    }

    /// Componentwise shift by nonnegative integer counts `[z11, z10, z01, z00]`.
    pub fn shifted(&self, z: [u32; 4]) -> Self {
        Self {
            a11: self.a11 + T::from_count(z[0]),
            a10: self.a10 + T::from_count(z[1]),
            a01: self.a01 + T::from_count(z[2]),
            a00: self.a00 + T::from_count(z[3]),
        }
    }

    fn check_margins(&self) -> Result<()> {
        self.validate()?;
        let zero = T::zero();
        if !(self.a1p() > zero && self.ap1() > zero && self.a0p() > zero && self.ap0() > zero) {
            return Err(Error::domain("every marginal sum of alpha must be positive"));
        }
        Ok(())
    }

    /// Pearson correlation of `X` and `Y`.
    pub fn correlation(&self) -> Result<T> {
        self.check_margins()?;
        let num = self.a11 * self.a00 - self.a10 * self.a01;
        let den = (self.a1p() * self.ap1() * self.a0p() * self.ap0()).sqrt();
        Ok((num / den).max(-T::one()).min(T::one()))
    }

    /// Beta marginals of `X` (cohort 1) and `Y` (cohort 2).
    pub fn marginal_params(&self) -> Result<(BetaShape<T>, BetaShape<T>)> {
        self.check_margins()?;
        Ok((BetaShape::new(self.a1p(), self.a0p()), BetaShape::new(self.ap1(), self.ap0())))
    }

    /// Reads the interpretable summaries back off the cell counts.
    pub fn summarize(&self) -> Result<PriorElicitation<T>> {
        let rho = self.correlation()?;
        let ess = self.ess();
        Ok(PriorElicitation { p1: self.a1p() / ess, p2: self.ap1() / ess, ess, rho })
    }

    /// `ln B(alpha) = Σ ln Γ(a_ij) - ln Γ(Σ a_ij)`; requires all cells positive.
    pub fn ln_multivariate_beta(&self) -> Result<T> {
        let cells = self.cells();
        if cells.iter().any(|&c| !(c > T::zero())) {
            return Err(Error::DegeneratePrior(format!("multivariate beta needs positive cells, got {cells:?}")));
        }
        Ok(cells.iter().fold(T::zero(), |s, &c| s + ln_gamma(c)) - ln_gamma(self.ess()))
    }

    /// Joint density of `(X, Y)` at `(x, y)` by adaptive quadrature of the
    /// one-dimensional mixing integral over `u = U11`.
    ///
    /// This is a validation tool; the monitoring path never calls it.
    pub fn joint_density(&self, x: T, y: T) -> Result<T> {
        self.joint_density_tol(x, y, T::lit(1e-8))
    }

    pub fn joint_density_tol(&self, x: T, y: T, rel_tol: T) -> Result<T> {
        self.validate()?;
        let zero = T::zero();
        let one = T::one();
        if self.cells().iter().any(|&c| c == zero) {
            return Err(Error::DegenerateDensity);
        }
        if !(x > zero && x < one && y > zero && y < one) {
            return Err(Error::domain(format!("joint density needs 0 < x, y < 1, got ({x}, {y})")));
        }
        let ln_norm = self.ln_multivariate_beta()?;
        let lo = (x + y - one).max(zero);
        let hi = x.min(y);
        let lo_is_zero = x + y <= one;
        let hi_is_x = x <= y;
        let hi_is_y = y <= x;
        let [a11, a10, a01, a00] = self.cells();

        // the integrand behaves like d^(p - 1) at each endpoint
        let on_antidiagonal = x + y == one;
        let p_lo = match (lo_is_zero, on_antidiagonal) {
            (_, true) => a11 + a00 - one,
            (true, false) => a11,
            (false, false) => a00,
        };
        let p_hi = match (hi_is_x, hi_is_y) {
            (true, true) => a10 + a01 - one,
            (true, false) => a10,
            _ => a01,
        };
        if p_lo <= zero || p_hi <= zero {
            // non-integrable on the diagonal or antidiagonal itself
            return Ok(T::infinity());
        }

        // cell masses as offsets from the nearer endpoint, exact near either diagonal
        let lo_gap = (one - x - y).abs();
        let hi_gap = (x - y).abs();
        let integrand = |_u: T, d_lo: T, d_hi: T| {
            let (u11, u00) = if lo_is_zero { (d_lo, lo_gap + d_lo) } else { (lo_gap + d_lo, d_lo) };
            let (u10, u01) = if hi_is_x { (d_hi, hi_gap + d_hi) } else { (hi_gap + d_hi, d_hi) };
            if u11 <= zero || u10 <= zero || u01 <= zero || u00 <= zero {
                return zero;
            }
            let ln_f = (a11 - one) * u11.ln() + (a10 - one) * u10.ln() + (a01 - one) * u01.ln()
                + (a00 - one) * u00.ln()
                - ln_norm;
            ln_f.exp()
        };
        integrate_endpoint_singular(integrand, lo, hi, Some(p_lo), Some(p_hi), rel_tol)
    }

    /// Draws `count` pairs `(x, y)`. Each draw normalizes four independent
    /// gamma variates to a Dirichlet vector and sums cells.
    pub fn sample(&self, count: usize, seed: u64) -> Result<Vec<(T, T)>> {
        self.validate()?;
        let cells = self.cells();
        let positive = cells.iter().filter(|&&c| c > T::zero()).count();
        if positive < 2 {
            return Err(Error::domain("sampling needs at least two positive alpha components"));
        }
        let gammas: Vec<Option<Gamma<f64>>> = cells
            .iter()
            .map(|&c| {
                let shape = c.as_f64();
                (shape > 0.0).then(|| Gamma::new(shape, 1.0).expect("positive shape"))
            })
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::with_capacity(count);
        while out.len() < count {
            let mut g = [0.0f64; 4];
            for (slot, dist) in g.iter_mut().zip(&gammas) {
                if let Some(d) = dist {
                    *slot = d.sample(&mut rng);
                }
            }
            let total: f64 = g.iter().sum();
            if !(total > 0.0) {
                // all draws underflowed; redraw
                continue;
            }
            let x = (g[0] + g[1]) / total;
            let y = (g[0] + g[2]) / total;
            out.push((T::lit(x), T::lit(y)));
        }
        Ok(out)
    }
}

/// Feasible correlation interval for prior means `(p1, p2)`: the values of
/// `rho` for which every solved cell count is nonnegative. It does not
/// depend on the effective sample size.
pub fn feasible_rho_range<T: Real>(p1: T, p2: T) -> Result<RhoRange<T>> {
    let zero = T::zero();
    let one = T::one();
    for (name, p) in [("p1", p1), ("p2", p2)] {
        if !(p > zero && p < one) {
            return Err(Error::domain(format!("{name} must lie in (0, 1), got {p}")));
        }
    }
    let (q1, q2) = (one - p1, one - p2);
    let lo = -((p1 * p2) / (q1 * q2)).sqrt().min(((q1 * q2) / (p1 * p2)).sqrt());
    let hi = ((p1 * q2) / (p2 * q1)).sqrt().min(((p2 * q1) / (p1 * q2)).sqrt());
    Ok(RhoRange { lo: lo.max(-one), hi: hi.min(one) })
}

/// Solves for the cell counts matching prior means, effective sample size
/// and correlation.
pub fn elicit<T: Real>(e: &PriorElicitation<T>) -> Result<AlphaVector<T>> {
    let range = feasible_rho_range(e.p1, e.p2)?;
    if !(e.ess > T::zero()) || !e.ess.is_finite() {
        return Err(Error::domain(format!("ess must be positive, got {}", e.ess)));
    }
    if !(e.rho >= -T::one() && e.rho <= T::one()) {
        return Err(Error::domain(format!("rho must lie in [-1, 1], got {}", e.rho)));
    }
    let (p1, p2, ess) = (e.p1, e.p2, e.ess);
    let one = T::one();
    let a11 = (e.rho * (p1 * p2 * (one - p1) * (one - p2)).sqrt() + p1 * p2) * ess;
    let a10 = p1 * ess - a11;
    let a01 = p2 * ess - a11;
    let a00 = ess - (a11 + a10 + a01);
    let tol = T::lit(-1e-12);
    let mut cells = [a11, a10, a01, a00];
    if cells.iter().any(|&c| c < tol) {
        return Err(Error::InfeasibleCorrelation {
            rho: e.rho.as_f64(),
            lo: range.lo.as_f64(),
            hi: range.hi.as_f64(),
        });
    }
    for c in cells.iter_mut() {
        if *c < T::zero() {
            *c = T::zero();
        }
    }
    AlphaVector::new(cells[0], cells[1], cells[2], cells[3])
}

/// Beta density, used by the marginal checks.
pub fn beta_density<T: Real>(x: T, shape: BetaShape<T>) -> T {
    if !(x > T::zero() && x < T::one()) {
        return T::zero();
    }
    crate::numerics::ln_beta_pdf(x, shape.a, shape.b).exp()
}
