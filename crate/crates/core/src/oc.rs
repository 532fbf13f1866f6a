//! Frequentist operating characteristics of a monitored two-cohort trial.
//!
//! Both cohorts enroll one patient each per step and are assessed together
//! after every step. Once one cohort is stopped or reaches its cap, the
//! other continues alone, one patient per step, with decisions computed
//! against the frozen record of the first. No assessment is made when a
//! cohort reaches its cap: it is then complete, not stopped.
//!
//! The exact engine propagates the joint binomial mass of the active states
//! forward and routes it into absorbing outcomes, so every quantity below is
//! an exact finite sum. [`mc_simulate`] replays the same schedule patient
//! by patient through the public decision API and serves as an oracle.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::monitoring::{decide_with, CohortStatus, Evaluator, Rule, TrialConfig, TrialState};
use crate::posterior::{Cohort, DataSummary};
use crate::{Error, Real, Result};

/// Largest per-cohort cap the exact engine accepts.
pub const MAX_N_CAP: u32 = 60;

/// Conditional expectations are reported only when the conditioning event
/// has at least this probability.
pub const MIN_CONDITIONING_PROB: f64 = 1e-12;

const MC_CHUNK: u64 = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrueToxicity<T> {
    pub theta1: T,
    pub theta2: T,
}

impl<T: Real> TrueToxicity<T> {
    pub fn new(theta1: T, theta2: T) -> Result<Self> {
        let t = Self { theta1, theta2 };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        for t in [self.theta1, self.theta2] {
            if !(t >= T::zero() && t <= T::one()) {
                return Err(Error::domain(format!("true toxicity must lie in [0, 1], got {t}")));
            }
        }
        Ok(())
    }

    pub fn get(&self, cohort: Cohort) -> T {
        match cohort {
            Cohort::One => self.theta1,
            Cohort::Two => self.theta2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct OcResult<T> {
    pub stop_prob1: T,
    pub stop_prob2: T,
    pub expected_enrolled1: T,
    pub expected_enrolled2: T,
    pub expected_events_total: T,
    /// Expected cohort-1 toxicities given that cohort 1 stopped early.
    pub expected_events_at_early_stop1: Option<T>,
    pub expected_events_at_early_stop2: Option<T>,
}

impl<T: Copy> OcResult<T> {
    pub fn stop_prob(&self, cohort: Cohort) -> T {
        match cohort {
            Cohort::One => self.stop_prob1,
            Cohort::Two => self.stop_prob2,
        }
    }

    pub fn expected_enrolled(&self, cohort: Cohort) -> T {
        match cohort {
            Cohort::One => self.expected_enrolled1,
            Cohort::Two => self.expected_enrolled2,
        }
    }

    pub fn expected_events_at_early_stop(&self, cohort: Cohort) -> Option<T> {
        match cohort {
            Cohort::One => self.expected_events_at_early_stop1,
            Cohort::Two => self.expected_events_at_early_stop2,
        }
    }

    /// Field names and values in a fixed order.
    pub fn fields(&self) -> [(&'static str, Option<T>); 7] {
        [
            ("stopProb1", Some(self.stop_prob1)),
            ("stopProb2", Some(self.stop_prob2)),
            ("expectedEnrolled1", Some(self.expected_enrolled1)),
            ("expectedEnrolled2", Some(self.expected_enrolled2)),
            ("expectedEventsTotal", Some(self.expected_events_total)),
            ("expectedEventsAtEarlyStop1", self.expected_events_at_early_stop1),
            ("expectedEventsAtEarlyStop2", self.expected_events_at_early_stop2),
        ]
    }
}

/// Exact result plus the variance of each per-trial quantity (conditional
/// variances for the early-stop fields) and a bookkeeping check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ExactOc<T> {
    pub result: OcResult<T>,
    pub variance: OcResult<T>,
    /// Largest `|active + absorbed - 1|` seen over all recursion steps.
    pub mass_defect: T,
}

/// `P(k | n)` for `k = 0..=n` built by the forward recursion
/// `P(k+1 | n+1) = theta P(k | n) + (1 - theta) P(k+1 | n)`.
pub fn binomial_pmf_rec<T: Real>(n: u32, theta: T) -> Vec<T> {
    let mut p = vec![T::one()];
    for _ in 0..n {
        p = binomial_step(&p, theta);
    }
    p
}

fn binomial_step<T: Real>(p: &[T], theta: T) -> Vec<T> {
    let q = T::one() - theta;
    let mut next = vec![T::zero(); p.len() + 1];
    for (k, &m) in p.iter().enumerate() {
        next[k] = next[k] + q * m;
        next[k + 1] = next[k + 1] + theta * m;
    }
    next
}

#[derive(Debug, Clone, Copy)]
struct Tally<T> {
    absorbed: T,
    stop: [T; 2],
    enrolled: [T; 2],
    enrolled_sq: [T; 2],
    events: T,
    events_sq: T,
    stop_events: [T; 2],
    stop_events_sq: [T; 2],
}

impl<T: Real> Tally<T> {
    fn new() -> Self {
        let z = T::zero();
        Self {
            absorbed: z,
            stop: [z; 2],
            enrolled: [z; 2],
            enrolled_sq: [z; 2],
            events: z,
            events_sq: z,
            stop_events: [z; 2],
            stop_events_sq: [z; 2],
        }
    }

    fn absorb(&mut self, mass: T, d: &DataSummary, stopped: [bool; 2]) {
        self.absorbed = self.absorbed + mass;
        for c in Cohort::BOTH {
            let i = c.index();
            let (n, k) = d.counts(c);
            let (n, k) = (T::from_count(n), T::from_count(k));
            self.enrolled[i] = self.enrolled[i] + mass * n;
            self.enrolled_sq[i] = self.enrolled_sq[i] + mass * n * n;
            if stopped[i] {
                self.stop[i] = self.stop[i] + mass;
                self.stop_events[i] = self.stop_events[i] + mass * k;
                self.stop_events_sq[i] = self.stop_events_sq[i] + mass * k * k;
            }
        }
        let e = T::from_count(d.total_k());
        self.events = self.events + mass * e;
        self.events_sq = self.events_sq + mass * e * e;
    }

    fn finish(&self) -> (OcResult<T>, OcResult<T>) {
        let var = |m1: T, m2: T| (m2 - m1 * m1).max(T::zero());
        let cond = |i: usize| {
            let p = self.stop[i];
            if p.as_f64() < MIN_CONDITIONING_PROB {
                (None, None)
            } else {
                let m1 = self.stop_events[i] / p;
                (Some(m1), Some(var(m1, self.stop_events_sq[i] / p)))
            }
        };
        let (c1, v1) = cond(0);
        let (c2, v2) = cond(1);
        let mean = OcResult {
            stop_prob1: self.stop[0],
            stop_prob2: self.stop[1],
            expected_enrolled1: self.enrolled[0],
            expected_enrolled2: self.enrolled[1],
            expected_events_total: self.events,
            expected_events_at_early_stop1: c1,
            expected_events_at_early_stop2: c2,
        };
        let variance = OcResult {
            stop_prob1: var(self.stop[0], self.stop[0]),
            stop_prob2: var(self.stop[1], self.stop[1]),
            expected_enrolled1: var(self.enrolled[0], self.enrolled_sq[0]),
            expected_enrolled2: var(self.enrolled[1], self.enrolled_sq[1]),
            expected_events_total: var(self.events, self.events_sq),
            expected_events_at_early_stop1: v1,
            expected_events_at_early_stop2: v2,
        };
        (mean, variance)
    }
}

/// Mass that left the paired phase with one cohort still enrolling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
struct SoloKey {
    survivor: Cohort,
    n: u32,
    frozen_k: u32,
    frozen_stopped: bool,
}

/// Exact operating-characteristics engine for one configuration. The
/// exceedance probabilities of visited states are memoized, independent of
/// `tau` and of the true rates, so one engine serves a whole sweep or
/// calibration and may be shared across threads.
#[derive(Debug, Clone)]
pub struct OcEngine<T> {
    cfg: TrialConfig<T>,
    eval: Arc<Evaluator<T>>,
}

impl<T: Real> OcEngine<T> {
    pub fn new(cfg: &TrialConfig<T>) -> Result<Self> {
        cfg.validate()?;
        for n in [cfg.max_n1, cfg.max_n2] {
            if n > MAX_N_CAP {
                return Err(Error::Resource(format!("maxN {n} exceeds the exact-engine cap of {MAX_N_CAP}")));
            }
        }
        Ok(Self { cfg: *cfg, eval: Arc::new(Evaluator::new(cfg)?) })
    }

    pub fn config(&self) -> &TrialConfig<T> {
        &self.cfg
    }

    pub fn evaluator(&self) -> &Evaluator<T> {
        &self.eval
    }

    pub fn exact(&self, truth: &TrueToxicity<T>) -> Result<OcResult<T>> {
        Ok(self.exact_detailed(truth, self.cfg.tau)?.result)
    }

    pub fn exact_at_tau(&self, truth: &TrueToxicity<T>, tau: T) -> Result<OcResult<T>> {
        Ok(self.exact_detailed(truth, tau)?.result)
    }

    pub fn type_i_error_at(&self, theta2: T, tau: T) -> Result<T> {
        let truth = TrueToxicity::new(self.cfg.theta01, theta2)?;
        Ok(self.exact_at_tau(&truth, tau)?.stop_prob1)
    }

    fn stops(&self, d: &DataSummary, active: [bool; 2], tau: T) -> Result<[bool; 2]> {
        let mut stop = [false; 2];
        for c in Cohort::BOTH {
            if active[c.index()] {
                stop[c.index()] = self.eval.exceedance(d, c)? >= tau;
            }
        }
        if self.eval.rule() == Rule::Pooled && stop.iter().any(|&s| s) {
            stop = active;
        }
        Ok(stop)
    }

    pub fn exact_detailed(&self, truth: &TrueToxicity<T>, tau: T) -> Result<ExactOc<T>> {
        truth.validate()?;
        if !(tau >= T::lit(0.5) && tau <= T::one()) {
            return Err(Error::Config(format!("tau must lie in [0.5, 1], got {tau}")));
        }
        let caps = [self.cfg.max_n1, self.cfg.max_n2];
        let theta = [truth.theta1, truth.theta2];
        let paired = caps[0].min(caps[1]);
        let mut tally = Tally::new();
        let mut defect = T::zero();
        let mut solo: BTreeMap<SoloKey, Vec<T>> = BTreeMap::new();
        let mut solo_mass = T::zero();

        // Paired phase: mass[k1][k2] over states with n1 = n2 = n.
        let mut mass = vec![vec![T::one()]];
        for n in 0..paired {
            let m = n + 1;
            let next = pair_step(&mass, theta);
            let done = [m == caps[0], m == caps[1]];
            let mut kept = vec![vec![T::zero(); m as usize + 1]; m as usize + 1];
            let mut active_mass = T::zero();
            for (k1, row) in next.iter().enumerate() {
                for (k2, &p) in row.iter().enumerate() {
                    if p == T::zero() {
                        continue;
                    }
                    let d = DataSummary { n1: m, k1: k1 as u32, n2: m, k2: k2 as u32 };
                    let active = [!done[0], !done[1]];
                    let stop = self.stops(&d, active, tau)?;
                    let going = [active[0] && !stop[0], active[1] && !stop[1]];
                    match going {
                        [true, true] => {
                            kept[k1][k2] = p;
                            active_mass = active_mass + p;
                        }
                        [false, false] => tally.absorb(p, &d, stop),
                        _ => {
                            let survivor = if going[0] { Cohort::One } else { Cohort::Two };
                            let other = survivor.other();
                            let (_, frozen_k) = d.counts(other);
                            let (_, k_s) = d.counts(survivor);
                            let key = SoloKey { survivor, n: m, frozen_k, frozen_stopped: stop[other.index()] };
                            let slot = solo.entry(key).or_insert_with(|| vec![T::zero(); m as usize + 1]);
                            slot[k_s as usize] = slot[k_s as usize] + p;
                            solo_mass = solo_mass + p;
                        }
                    }
                }
            }
            mass = kept;
            defect = defect.max((active_mass + solo_mass + tally.absorbed - T::one()).abs());
        }

        // Solo phase: one-dimensional recursion for each survivor against
        // the frozen record of the other cohort.
        let mut pending = solo_mass;
        for (key, start) in solo {
            let s = key.survivor;
            let o = s.other();
            let cap = caps[s.index()];
            let mut v = start;
            pending = pending - v.iter().fold(T::zero(), |a, &b| a + b);
            for n_s in key.n..cap {
                let m = n_s + 1;
                let next = binomial_step(&v, theta[s.index()]);
                let mut kept = vec![T::zero(); next.len()];
                let mut live = T::zero();
                for (k, &p) in next.iter().enumerate() {
                    if p == T::zero() {
                        continue;
                    }
                    let d = DataSummary::default().with_counts(o, key.n, key.frozen_k).with_counts(s, m, k as u32);
                    let mut stopped = [false; 2];
                    stopped[o.index()] = key.frozen_stopped;
                    if m == cap {
                        tally.absorb(p, &d, stopped);
                        continue;
                    }
                    let mut active = [false; 2];
                    active[s.index()] = true;
                    if self.stops(&d, active, tau)?[s.index()] {
                        stopped[s.index()] = true;
                        tally.absorb(p, &d, stopped);
                    } else {
                        kept[k] = p;
                        live = live + p;
                    }
                }
                v = kept;
                defect = defect.max((live + pending + tally.absorbed - T::one()).abs());
            }
        }
        let all = mass.iter().flatten().fold(T::zero(), |a, &b| a + b);
        defect = defect.max((all + tally.absorbed - T::one()).abs());

        let (result, variance) = tally.finish();
        Ok(ExactOc { result, variance, mass_defect: defect })
    }
}

fn pair_step<T: Real>(mass: &[Vec<T>], theta: [T; 2]) -> Vec<Vec<T>> {
    let n = mass.len();
    let mut half = vec![vec![T::zero(); n]; n + 1];
    let q1 = T::one() - theta[0];
    for (k1, row) in mass.iter().enumerate() {
        for (k2, &p) in row.iter().enumerate() {
            half[k1][k2] = half[k1][k2] + q1 * p;
            half[k1 + 1][k2] = half[k1 + 1][k2] + theta[0] * p;
        }
    }
    half.iter().map(|row| binomial_step(row, theta[1])).collect()
}

/// Exact operating characteristics of `cfg` under `truth`.
pub fn exact_oc<T: Real>(cfg: &TrialConfig<T>, truth: &TrueToxicity<T>) -> Result<OcResult<T>> {
    OcEngine::new(cfg)?.exact(truth)
}

/// Probability of stopping cohort 1 early when its true rate equals its
/// threshold.
pub fn type_i_error<T: Real>(cfg: &TrialConfig<T>, theta2: T) -> Result<T> {
    OcEngine::new(cfg)?.type_i_error_at(theta2, cfg.tau)
}

/// Grid of candidate cutoffs `lo, lo + step, ..` up to `hi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TauGrid {
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
}

impl Default for TauGrid {
    fn default() -> Self {
        Self { lo: 0.5, hi: 0.9999, step: 1e-4 }
    }
}

impl TauGrid {
    fn len(&self) -> Result<usize> {
        if !(self.lo >= 0.5 && self.hi < 1.0 && self.lo <= self.hi && self.step > 0.0) {
            return Err(Error::Config(format!("invalid tau grid {self:?}")));
        }
        Ok(((self.hi - self.lo) / self.step + 1e-9).floor() as usize + 1)
    }

    /// Grid point `j`, rounded to the grid's decimal resolution.
    pub fn point(&self, j: usize) -> f64 {
        let raw = self.lo + j as f64 * self.step;
        let digits = (-self.step.log10()).ceil().max(0.0) as i32 + 1;
        let scale = 10f64.powi(digits);
        (raw * scale).round() / scale
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Calibration<T> {
    pub tau: T,
    pub achieved_alpha: T,
}

/// Smallest grid cutoff whose type I error for cohort 1 (at the given true
/// rate of cohort 2) does not exceed `target_alpha`.
pub fn calibrate_tau<T: Real>(cfg: &TrialConfig<T>, target_alpha: T, theta2: T) -> Result<Calibration<T>> {
    calibrate_tau_on(&OcEngine::new(cfg)?, target_alpha, theta2, &TauGrid::default())
}

pub fn calibrate_tau_on<T: Real>(
    engine: &OcEngine<T>,
    target_alpha: T,
    theta2: T,
    grid: &TauGrid,
) -> Result<Calibration<T>> {
    if !(target_alpha > T::zero() && target_alpha <= T::one()) {
        return Err(Error::domain(format!("target alpha must lie in (0, 1], got {target_alpha}")));
    }
    let len = grid.len()?;
    let alpha = |j: usize| engine.type_i_error_at(theta2, T::lit(grid.point(j)));
    let first = alpha(0)?;
    if first <= target_alpha {
        return Ok(Calibration { tau: T::lit(grid.point(0)), achieved_alpha: first });
    }
    let last = alpha(len - 1)?;
    if last > target_alpha {
        return Err(Error::InfeasibleCalibration {
            target: target_alpha.as_f64(),
            tau_min: grid.point(0),
            tau_max: grid.point(len - 1),
            alpha_at_max: last.as_f64(),
        });
    }
    // alpha(lo) > target >= alpha(hi)
    let (mut lo, mut hi, mut at_hi) = (0, len - 1, last);
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        let a = alpha(mid)?;
        if a <= target_alpha {
            hi = mid;
            at_hi = a;
        } else {
            lo = mid;
        }
    }
    Ok(Calibration { tau: T::lit(grid.point(hi)), achieved_alpha: at_hi })
}

/// Monte Carlo estimates with their standard errors. An early-stop field is
/// `None` when no replicate stopped that cohort (its standard error also
/// when fewer than two did).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct McResult<T> {
    pub reps: u64,
    pub seed: u64,
    pub estimate: OcResult<T>,
    pub std_error: OcResult<T>,
}

#[derive(Debug, Clone, Copy, Default)]
struct McSums {
    reps: u64,
    stops: [u64; 2],
    enrolled: [u64; 2],
    enrolled_sq: [u64; 2],
    events: u64,
    events_sq: u64,
    stop_events: [u64; 2],
    stop_events_sq: [u64; 2],
}

impl McSums {
    fn add(&mut self, o: &McSums) {
        self.reps += o.reps;
        self.events += o.events;
        self.events_sq += o.events_sq;
        for i in 0..2 {
            self.stops[i] += o.stops[i];
            self.enrolled[i] += o.enrolled[i];
            self.enrolled_sq[i] += o.enrolled_sq[i];
            self.stop_events[i] += o.stop_events[i];
            self.stop_events_sq[i] += o.stop_events_sq[i];
        }
    }

    fn record<T: Real>(&mut self, st: &TrialState<T>) {
        self.reps += 1;
        let e = u64::from(st.data.total_k());
        self.events += e;
        self.events_sq += e * e;
        for c in Cohort::BOTH {
            let i = c.index();
            let (n, k) = st.data.counts(c);
            let (n, k) = (u64::from(n), u64::from(k));
            self.enrolled[i] += n;
            self.enrolled_sq[i] += n * n;
            if st.status(c) == CohortStatus::StoppedToxicity {
                self.stops[i] += 1;
                self.stop_events[i] += k;
                self.stop_events_sq[i] += k * k;
            }
        }
    }
}

// Sample mean and standard error of the mean from integer sums.
fn mean_se(count: u64, sum: u64, sum_sq: u64) -> (Option<f64>, Option<f64>) {
    if count == 0 {
        return (None, None);
    }
    let n = count as f64;
    let mean = sum as f64 / n;
    if count < 2 {
        return (Some(mean), None);
    }
    let ss = (sum_sq as f64 - n * mean * mean).max(0.0);
    (Some(mean), Some((ss / (n - 1.0) / n).sqrt()))
}

fn simulate_one<T: Real, R: Rng>(
    eval: &Evaluator<T>,
    cfg: &TrialConfig<T>,
    truth: [f64; 2],
    rng: &mut R,
) -> Result<TrialState<T>> {
    let mut st = TrialState::new();
    while st.any_active() {
        for c in Cohort::BOTH {
            if st.is_active(c) {
                let toxic = rng.random::<f64>() < truth[c.index()];
                st = st.apply_outcome(cfg, c, toxic)?;
            }
        }
        let decision = decide_with(eval, cfg, &st)?;
        st = st.apply_decision(&decision);
    }
    Ok(st)
}

/// Simulates `reps` trials under the same schedule and decisions as the
/// exact engine. Replicates are split into fixed chunks, each drawing from
/// its own stream of a generator seeded with `seed`, so the result does not
/// depend on the number of worker threads.
pub fn mc_simulate<T: Real>(cfg: &TrialConfig<T>, truth: &TrueToxicity<T>, reps: u64, seed: u64) -> Result<McResult<T>> {
    mc_simulate_with(&Evaluator::new(cfg)?, cfg, truth, reps, seed)
}

pub fn mc_simulate_with<T: Real>(
    eval: &Evaluator<T>,
    cfg: &TrialConfig<T>,
    truth: &TrueToxicity<T>,
    reps: u64,
    seed: u64,
) -> Result<McResult<T>> {
    cfg.validate()?;
    truth.validate()?;
    if reps == 0 {
        return Err(Error::domain("reps must be at least 1"));
    }
    let theta = [truth.theta1.as_f64(), truth.theta2.as_f64()];
    let chunks = reps.div_ceil(MC_CHUNK);
    let parts: Vec<Result<McSums>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c);
            let count = MC_CHUNK.min(reps - c * MC_CHUNK);
            let mut sums = McSums::default();
            for _ in 0..count {
                sums.record(&simulate_one(eval, cfg, theta, &mut rng)?);
            }
            Ok(sums)
        })
        .collect();
    let mut total = McSums::default();
    for p in parts {
        total.add(&p?);
    }

    let n = total.reps as f64;
    let prop = |x: u64| {
        let p = x as f64 / n;
        (p, (p * (1.0 - p) / n).sqrt())
    };
    let (s1, s1e) = prop(total.stops[0]);
    let (s2, s2e) = prop(total.stops[1]);
    let (e1, e1e) = mean_se(total.reps, total.enrolled[0], total.enrolled_sq[0]);
    let (e2, e2e) = mean_se(total.reps, total.enrolled[1], total.enrolled_sq[1]);
    let (ev, eve) = mean_se(total.reps, total.events, total.events_sq);
    let (c1, c1e) = mean_se(total.stops[0], total.stop_events[0], total.stop_events_sq[0]);
    let (c2, c2e) = mean_se(total.stops[1], total.stop_events[1], total.stop_events_sq[1]);
    let t = |v: f64| T::lit(v);
    let zero = 0.0;
    Ok(McResult {
        reps,
        seed,
        estimate: OcResult {
            stop_prob1: t(s1),
            stop_prob2: t(s2),
            expected_enrolled1: t(e1.unwrap_or(zero)),
            expected_enrolled2: t(e2.unwrap_or(zero)),
            expected_events_total: t(ev.unwrap_or(zero)),
            expected_events_at_early_stop1: c1.map(t),
            expected_events_at_early_stop2: c2.map(t),
        },
        std_error: OcResult {
            stop_prob1: t(s1e),
            stop_prob2: t(s2e),
            expected_enrolled1: t(e1e.unwrap_or(zero)),
            expected_enrolled2: t(e2e.unwrap_or(zero)),
            expected_events_total: t(eve.unwrap_or(zero)),
            expected_events_at_early_stop1: c1e.map(t),
            expected_events_at_early_stop2: c2e.map(t),
        },
    })
}

/// One line of an operating-characteristics sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct OcSweepRow<T> {
    pub rule: Rule,
    pub theta1: T,
    pub theta2: T,
    pub ess: T,
    pub rho: T,
    pub tau: T,
    pub result: OcResult<T>,
}

pub const OC_CSV_HEADER: &str = "rule,theta1,theta2,ess,rho,tau,stopProb1,stopProb2,expEnrolled1,expEnrolled2,\
expEventsTotal,expEventsEarlyStop1,expEventsEarlyStop2";

impl<T: Real> OcSweepRow<T> {
    pub fn to_csv(&self) -> String {
        let opt = |v: Option<T>| v.map(|x| x.to_string()).unwrap_or_else(|| "NA".into());
        let r = &self.result;
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.rule,
            self.theta1,
            self.theta2,
            self.ess,
            self.rho,
            self.tau,
            r.stop_prob1,
            r.stop_prob2,
            r.expected_enrolled1,
            r.expected_enrolled2,
            r.expected_events_total,
            opt(r.expected_events_at_early_stop1),
            opt(r.expected_events_at_early_stop2),
        )
    }

    /// Parses one data line written by [`OcSweepRow::to_csv`].
    pub fn from_csv(line: &str) -> Result<Self> {
        let fields: Vec<&str> = line.trim_end_matches(['\r', '\n']).split(',').collect();
        if fields.len() != 13 {
            return Err(Error::Config(format!("expected 13 columns, found {}", fields.len())));
        }
        let num = |i: usize| -> Result<T> {
            fields[i]
                .parse::<f64>()
                .map(T::lit)
                .map_err(|_| Error::Config(format!("column {} is not a number: {:?}", i + 1, fields[i])))
        };
        let opt = |i: usize| -> Result<Option<T>> { if fields[i] == "NA" { Ok(None) } else { num(i).map(Some) } };
        Ok(Self {
            rule: fields[0].parse()?,
            theta1: num(1)?,
            theta2: num(2)?,
            ess: num(3)?,
            rho: num(4)?,
            tau: num(5)?,
            result: OcResult {
                stop_prob1: num(6)?,
                stop_prob2: num(7)?,
                expected_enrolled1: num(8)?,
                expected_enrolled2: num(9)?,
                expected_events_total: num(10)?,
                expected_events_at_early_stop1: opt(11)?,
                expected_events_at_early_stop2: opt(12)?,
            },
        })
    }
}
