//! Independent oracles shared by the integration tests.
//!
//! Nothing here calls the crate's posterior or quadrature code. Integrals
//! use tanh-sinh rules on (0, 1) carried in log space, so integrable
//! endpoint singularities of any strength are handled without special
//! cases.

#![allow(dead_code)]

use tox2::bivariate::{AlphaVector, PriorElicitation};
use tox2::monitoring::{decide_with, Evaluator, PriorSpec, Rule, TrialConfig, TrialState};
use tox2::oc::{OcResult, TrueToxicity};
use tox2::{Cohort, CohortStatus, DataSummary};

fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// One tanh-sinh node on (0, 1): the abscissa, its complement, their logs
/// and the log of the quadrature weight.
#[derive(Debug, Clone, Copy)]
pub struct Node {
    pub x: f64,
    pub xc: f64,
    pub ln_x: f64,
    pub ln_xc: f64,
    pub ln_w: f64,
}

/// Nodes `x = 1 / (1 + exp(-pi sinh t))` for `t = -t_max..t_max` in steps of `h`.
pub fn tanh_sinh(h: f64, t_max: f64) -> Vec<Node> {
    let m = (t_max / h).round() as i64;
    (-m..=m)
        .map(|j| {
            let t = j as f64 * h;
            let s = std::f64::consts::PI * t.sinh();
            let ln_x = -softplus(-s);
            let ln_xc = -softplus(s);
            Node {
                x: ln_x.exp(),
                xc: ln_xc.exp(),
                ln_x,
                ln_xc,
                ln_w: h.ln() + (std::f64::consts::PI * t.cosh()).ln() + ln_x + ln_xc,
            }
        })
        .collect()
}

pub fn default_nodes() -> Vec<Node> {
    tanh_sinh(1.0 / 8.0, 9.0)
}

fn lse(v: &[f64]) -> f64 {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// `ln B(a, b)` by tanh-sinh quadrature of `x^(a-1) (1-x)^(b-1)`.
pub fn ln_beta_quad(a: f64, b: f64) -> f64 {
    let terms: Vec<f64> = default_nodes()
        .iter()
        .map(|n| n.ln_w + (a - 1.0) * n.ln_x + (b - 1.0) * n.ln_xc)
        .collect();
    lse(&terms)
}

/// `ln B(alpha)` through the aggregation identity
/// `B(a11, a10, a01, a00) = B(a11, a10) B(a01, a00) B(a11 + a10, a01 + a00)`.
pub fn ln_dirichlet_norm(a: &AlphaVector<f64>) -> f64 {
    ln_beta_quad(a.a11, a.a10) + ln_beta_quad(a.a01, a.a00) + ln_beta_quad(a.a11 + a.a10, a.a01 + a.a00)
}

/// Joint prior density at `(x, y)` by tanh-sinh quadrature over the
/// Dirichlet cell `u11`, with every cell written as an offset from the
/// endpoint it vanishes at.
pub fn density_quad(a: &AlphaVector<f64>, x: f64, y: f64) -> f64 {
    let ln_norm = ln_dirichlet_norm(a);
    let lo_zero = x + y <= 1.0;
    let lo_gap = (1.0 - x - y).abs();
    let hi_gap = (x - y).abs();
    let width = x.min(y) - (x + y - 1.0).max(0.0);
    let terms: Vec<f64> = default_nodes()
        .iter()
        .map(|n| {
            // offsets from the endpoints are width * x and width * (1 - x)
            let ln_dlo = width.ln() + n.ln_x;
            let ln_dhi = width.ln() + n.ln_xc;
            let far_lo = lse(&[lo_gap.ln(), ln_dlo]);
            let far_hi = lse(&[hi_gap.ln(), ln_dhi]);
            let (l11, l00) = if lo_zero { (ln_dlo, far_lo) } else { (far_lo, ln_dlo) };
            let (l10, l01) = if x <= y { (ln_dhi, far_hi) } else { (far_hi, ln_dhi) };
            n.ln_w + width.ln() + (a.a11 - 1.0) * l11 + (a.a10 - 1.0) * l10 + (a.a01 - 1.0) * l01
                + (a.a00 - 1.0) * l00
        })
        .collect();
    (lse(&terms) - ln_norm).exp()
}

fn log_pow(k: f64, ln_v: f64) -> f64 {
    if k == 0.0 {
        0.0
    } else {
        k * ln_v
    }
}

/// Posterior summaries of cohort 1 computed from the aggregation
/// representation `X ~ Be(a1+, a0+)`, `V ~ Be(a11, a10)`, `W ~ Be(a01, a00)`
/// independent and `Y = X V + (1 - X) W`, integrating the binomial
/// likelihood over the cube with the x-axis split at `theta0`.
#[derive(Debug, Clone, Copy)]
pub struct PosteriorQuad {
    pub exceedance: f64,
    pub mean: f64,
}

pub fn posterior_quad(a: &AlphaVector<f64>, d: &DataSummary, theta0: f64, cohort: Cohort) -> PosteriorQuad {
    if cohort == Cohort::Two {
        return posterior_quad(&a.swap_cohorts(), &d.swap(), theta0, Cohort::One);
    }
    let nodes = default_nodes();
    let k1 = d.k1 as f64;
    let f1 = (d.n1 - d.k1) as f64;
    let k2 = d.k2 as f64;
    let f2 = (d.n2 - d.k2) as f64;
    let (a1p, a0p) = (a.a11 + a.a10, a.a01 + a.a00);

    let v: Vec<(f64, f64, f64)> = nodes
        .iter()
        .map(|n| (n.x, n.xc, n.ln_w + a.a11 * n.ln_x + a.a10 * n.ln_xc - n.ln_x - n.ln_xc))
        .collect();
    let w: Vec<(f64, f64, f64)> = nodes
        .iter()
        .map(|n| (n.x, n.xc, n.ln_w + a.a01 * n.ln_x + a.a00 * n.ln_xc - n.ln_x - n.ln_xc))
        .collect();

    // inner integral over (v, w) of the cohort-2 likelihood at x
    let inner = |x: f64, xc: f64| -> f64 {
        let mut terms = Vec::with_capacity(v.len() * w.len());
        for &(vv, vc, lv) in &v {
            for &(ww, wc, lw) in &w {
                let y = x * vv + xc * ww;
                let yc = x * vc + xc * wc;
                terms.push(lv + lw + log_pow(k2, y.ln()) + log_pow(f2, yc.ln()));
            }
        }
        lse(&terms)
    };

    // piece [0, theta0]: x = theta0 z;  piece [theta0, 1]: 1 - x = (1 - theta0) zc
    let mut below = Vec::new();
    let mut below_mean = Vec::new();
    let mut above = Vec::new();
    let mut above_mean = Vec::new();
    for n in &nodes {
        let ln_x = theta0.ln() + n.ln_x;
        let x = ln_x.exp();
        let xc = 1.0 - x;
        let ln_xc = xc.ln();
        let t = n.ln_w + theta0.ln() + (a1p - 1.0) * ln_x + (a0p - 1.0) * ln_xc + log_pow(k1, ln_x) + log_pow(f1, ln_xc)
            + inner(x, xc);
        below.push(t);
        below_mean.push(t + ln_x);

        let ln_xc = (1.0 - theta0).ln() + n.ln_xc;
        let xc = ln_xc.exp();
        let x = theta0 + (1.0 - theta0) * n.x;
        let ln_x = x.ln();
        let t = n.ln_w + (1.0 - theta0).ln() + (a1p - 1.0) * ln_x + (a0p - 1.0) * ln_xc + log_pow(k1, ln_x)
            + log_pow(f1, ln_xc)
            + inner(x, xc);
        above.push(t);
        above_mean.push(t + ln_x);
    }
    let lb = lse(&below);
    let la = lse(&above);
    let total = lse(&[lb, la]);
    PosteriorQuad {
        exceedance: (la - total).exp(),
        mean: (lse(&[lse(&below_mean), lse(&above_mean)]) - total).exp(),
    }
}

/// Normalizing constant `ln E[L(X, Y)]` of the posterior kernel under the
/// prior, from the same representation.
pub fn ln_evidence_quad(a: &AlphaVector<f64>, d: &DataSummary) -> f64 {
    let nodes = default_nodes();
    let (a1p, a0p) = (a.a11 + a.a10, a.a01 + a.a00);
    let lb = |p: f64, q: f64| ln_beta_quad(p, q);
    let norm = lb(a1p, a0p) + lb(a.a11, a.a10) + lb(a.a01, a.a00);
    let mut terms = Vec::new();
    for nx in &nodes {
        for nv in &nodes {
            for nw in &nodes {
                let y = nx.x * nv.x + nx.xc * nw.x;
                let yc = nx.x * nv.xc + nx.xc * nw.xc;
                terms.push(
                    nx.ln_w
                        + nv.ln_w
                        + nw.ln_w
                        + (a1p - 1.0) * nx.ln_x
                        + (a0p - 1.0) * nx.ln_xc
                        + (a.a11 - 1.0) * nv.ln_x
                        + (a.a10 - 1.0) * nv.ln_xc
                        + (a.a01 - 1.0) * nw.ln_x
                        + (a.a00 - 1.0) * nw.ln_xc
                        + log_pow(d.k1 as f64, nx.ln_x)
                        + log_pow((d.n1 - d.k1) as f64, nx.ln_xc)
                        + log_pow(d.k2 as f64, y.ln())
                        + log_pow((d.n2 - d.k2) as f64, yc.ln()),
                );
            }
        }
    }
    lse(&terms) - norm
}

pub fn prior(p1: f64, p2: f64, ess: f64, rho: f64) -> PriorSpec<f64> {
    PriorSpec::Elicited(PriorElicitation { p1, p2, ess, rho })
}

/// The running design: thresholds 0.2, prior means 0.2, ESS 3.
pub fn design_cfg(rule: Rule, rho: f64, ess: f64, n: u32) -> TrialConfig<f64> {
    TrialConfig {
        theta01: 0.2,
        theta02: 0.2,
        tau: 0.98,
        max_n1: n,
        max_n2: n,
        prior: prior(0.2, 0.2, ess, rho),
        rule,
    }
}

/// Published stopping boundary table for cohort 1.
/// Index `[group][k2][n - 1]`; groups are the rows labelled rho = 0, 0.5 and
/// 0.99. `None` is a printed ".".
pub const PUBLISHED_TABLE: [[[Option<u32>; 10]; 11]; 3] = {
    const N: Option<u32> = None;
    const fn s(k: u32) -> Option<u32> {
        Some(k)
    }
    [
        [
            [N, N, s(3), s(4), s(4), s(5), s(5), s(5), s(6), s(6)],
            [N, N, s(3), s(4), s(4), s(5), s(5), s(5), s(6), s(6)],
            [N, N, s(3), s(4), s(4), s(5), s(5), s(5), s(6), s(6)],
            [N, N, s(3), s(4), s(4), s(5), s(5), s(5), s(6), s(6)],
            [N, N, N, s(4), s(4), s(5), s(5), s(5), s(6), s(6)],
            [N, N, N, N, s(4), s(4), s(5), s(5), s(6), s(6)],
            [N, N, N, N, N, s(4), s(5), s(5), s(6), s(6)],
            [N, N, N, N, N, N, s(5), s(5), s(6), s(6)],
            [N, N, N, N, N, N, N, s(5), s(6), s(6)],
            [N, N, N, N, N, N, N, N, s(5), s(6)],
            [N, N, N, N, N, N, N, N, N, s(6)],
        ],
        [
            [N, N, N, s(4), s(4), s(5), s(5), s(6), s(6), s(6)],
            [N, N, s(3), s(4), s(4), s(5), s(5), s(6), s(6), s(6)],
            [N, s(2), s(3), s(4), s(4), s(4), s(5), s(5), s(6), s(6)],
            [N, N, s(3), s(3), s(4), s(4), s(5), s(5), s(5), s(6)],
            [N, N, N, s(3), s(3), s(4), s(4), s(5), s(5), s(5)],
            [N, N, N, N, s(3), s(4), s(4), s(4), s(5), s(5)],
            [N, N, N, N, N, s(4), s(4), s(4), s(5), s(5)],
            [N, N, N, N, N, N, s(4), s(4), s(5), s(5)],
            [N, N, N, N, N, N, N, s(4), s(5), s(5)],
            [N, N, N, N, N, N, N, N, s(5), s(5)],
            [N, N, N, N, N, N, N, N, N, s(5)],
        ],
        [
            [N, N, N, N, N, s(6), s(7), s(7), s(8), s(8)],
            [N, N, N, s(4), s(5), s(5), s(6), s(7), s(7), s(8)],
            [N, s(2), s(3), s(3), s(4), s(5), s(5), s(6), s(6), s(7)],
            [N, N, s(2), s(2), s(3), s(4), s(4), s(5), s(5), s(6)],
            [N, N, N, s(2), s(2), s(3), s(3), s(4), s(4), s(5)],
            [N, N, N, N, s(2), s(2), s(2), s(3), s(3), s(4)],
            [N, N, N, N, N, s(2), s(2), s(2), s(3), s(3)],
            [N, N, N, N, N, N, s(2), s(2), s(3), s(3)],
            [N, N, N, N, N, N, N, s(3), s(3), s(3)],
            [N, N, N, N, N, N, N, N, s(3), s(3)],
            [N, N, N, N, N, N, N, N, N, s(4)],
        ],
    ]
};

pub const PUBLISHED_TABLE_RHO: [f64; 3] = [0.0, 0.5, 0.99];

/// Operating characteristics by enumerating every outcome sequence of the
/// paired schedule, driving the public state/decision API.
pub fn brute_force_oc(cfg: &TrialConfig<f64>, truth: &TrueToxicity<f64>) -> OcResult<f64> {
    #[derive(Default)]
    struct Acc {
        stop: [f64; 2],
        enrolled: [f64; 2],
        events: f64,
        stop_events: [f64; 2],
    }
    fn walk(eval: &Evaluator<f64>, cfg: &TrialConfig<f64>, th: [f64; 2], st: TrialState<f64>, p: f64, acc: &mut Acc) {
        if !st.any_active() {
            for c in Cohort::BOTH {
                let i = c.index();
                let (n, k) = st.data.counts(c);
                acc.enrolled[i] += p * n as f64;
                if st.status(c) == CohortStatus::StoppedToxicity {
                    acc.stop[i] += p;
                    acc.stop_events[i] += p * k as f64;
                }
            }
            acc.events += p * st.data.total_k() as f64;
            return;
        }
        let active: Vec<Cohort> = Cohort::BOTH.into_iter().filter(|&c| st.is_active(c)).collect();
        let outcomes = 1u32 << active.len();
        for mask in 0..outcomes {
            let mut next = st;
            let mut q = p;
            for (j, &c) in active.iter().enumerate() {
                let toxic = mask >> j & 1 == 1;
                let t = th[c.index()];
                q *= if toxic { t } else { 1.0 - t };
                next = next.apply_outcome(cfg, c, toxic).unwrap();
            }
            if q == 0.0 {
                continue;
            }
            let dec = decide_with(eval, cfg, &next).unwrap();
            walk(eval, cfg, th, next.apply_decision(&dec), q, acc);
        }
    }
    let eval = Evaluator::new(cfg).unwrap();
    let mut acc = Acc::default();
    walk(&eval, cfg, [truth.theta1, truth.theta2], TrialState::new(), 1.0, &mut acc);
    let cond = |i: usize| (acc.stop[i] >= 1e-12).then(|| acc.stop_events[i] / acc.stop[i]);
    OcResult {
        stop_prob1: acc.stop[0],
        stop_prob2: acc.stop[1],
        expected_enrolled1: acc.enrolled[0],
        expected_enrolled2: acc.enrolled[1],
        expected_events_total: acc.events,
        expected_events_at_early_stop1: cond(0),
        expected_events_at_early_stop2: cond(1),
    }
}

/// Largest absolute difference over all fields; `None` fields must agree.
pub fn max_field_diff(a: &OcResult<f64>, b: &OcResult<f64>) -> f64 {
    a.fields()
        .iter()
        .zip(b.fields().iter())
        .map(|((_, x), (_, y))| match (x, y) {
            (Some(x), Some(y)) => (x - y).abs(),
            (None, None) => 0.0,
            _ => f64::INFINITY,
        })
        .fold(0.0, f64::max)
}

/// Small deterministic generator for randomized cases (SplitMix64).
pub struct Cases(u64);

impl Cases {
    pub fn new(seed: u64) -> Self {
        Self(seed)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9e37_79b9_7f4a_7c15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    pub fn int(&mut self, lo: u32, hi: u32) -> u32 {
        lo + (self.next_u64() % u64::from(hi - lo + 1)) as u32
    }

    /// A feasible elicitation with rho drawn from the inner 90% of its range.
    pub fn elicitation(&mut self) -> PriorElicitation<f64> {
        let p1 = self.uniform(0.08, 0.6);
        let p2 = self.uniform(0.08, 0.6);
        let ess = self.uniform(0.8, 10.0);
        let r = tox2::bivariate::feasible_rho_range(p1, p2).unwrap();
        let span = r.hi - r.lo;
        let rho = self.uniform(r.lo + 0.05 * span, r.hi - 0.05 * span);
        PriorElicitation { p1, p2, ess, rho }
    }

    pub fn data(&mut self, max_n: u32) -> DataSummary {
        let n1 = self.int(0, max_n);
        let n2 = self.int(0, max_n);
        let k1 = self.int(0, n1);
        let k2 = self.int(0, n2);
        DataSummary { n1, k1, n2, k2 }
    }
}
