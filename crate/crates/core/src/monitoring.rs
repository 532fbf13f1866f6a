//! Trial configuration, live state, stop/continue decisions and stopping
//! boundary tables.
//!
//! Decisions are evaluated after every enrolled patient. A cohort stops for
//! excess toxicity once its exceedance probability reaches `tau`; the other
//! cohort keeps enrolling and its decisions use the stopped cohort's frozen
//! counts. Under the pooled rule a crossing halts both cohorts at once.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::RwLock;

use serde::{Deserialize, Serialize};

use crate::bivariate::{elicit, AlphaVector, PriorElicitation};
use crate::posterior::{exceedance_correlated, exceedance_independent, exceedance_pooled, Cohort, DataSummary};
use crate::{Error, Real, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Rule {
    /// Marginal posterior under the bivariate beta prior.
    Correlated,
    /// Each cohort monitored alone under its own beta marginal prior.
    Independent,
    /// Both cohorts treated as one arm with a shared toxicity rate.
    Pooled,
}

impl Rule {
    pub const ALL: [Rule; 3] = [Rule::Correlated, Rule::Independent, Rule::Pooled];

    pub fn as_str(self) -> &'static str {
        match self {
            Rule::Correlated => "correlated",
            Rule::Independent => "independent",
            Rule::Pooled => "pooled",
        }
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Rule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "correlated" => Ok(Rule::Correlated),
            "independent" => Ok(Rule::Independent),
            "pooled" => Ok(Rule::Pooled),
            other => Err(Error::Config(format!(
                "unknown rule '{other}' (expected correlated, independent or pooled)"
            ))),
        }
    }
}

/// Prior given either by interpretable summaries or directly as cell counts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PriorSpec<T> {
    Elicited(PriorElicitation<T>),
    Alpha(AlphaVector<T>),
}

impl<T: Real> PriorSpec<T> {
    pub fn alpha(&self) -> Result<AlphaVector<T>> {
        match self {
            PriorSpec::Elicited(e) => elicit(e),
            PriorSpec::Alpha(a) => {
                a.validate()?;
                Ok(*a)
            }
        }
    }

    /// Effective sample size and correlation, as stated or implied. The
    /// correlation is NaN when a marginal of the alpha form is degenerate.
    pub fn ess_rho(&self) -> (T, T) {
        match self {
            PriorSpec::Elicited(e) => (e.ess, e.rho),
            PriorSpec::Alpha(a) => (a.ess(), a.correlation().unwrap_or_else(|_| T::nan())),
        }
    }
}

/// Design parameters of a two-cohort monitored trial.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct TrialConfig<T> {
    /// Acceptable toxicity threshold for cohort 1.
    pub theta01: T,
    pub theta02: T,
    /// Exceedance probability cutoff.
    pub tau: T,
    pub max_n1: u32,
    pub max_n2: u32,
    pub prior: PriorSpec<T>,
    pub rule: Rule,
}

impl<T: Real> TrialConfig<T> {
    pub fn validate(&self) -> Result<()> {
        let (zero, one) = (T::zero(), T::one());
        for (name, t) in [("theta01", self.theta01), ("theta02", self.theta02)] {
            if !(t > zero && t < one) {
                return Err(Error::Config(format!("{name} must lie in (0, 1), got {t}")));
            }
        }
        if !(self.tau >= T::lit(0.5) && self.tau < one) {
            return Err(Error::Config(format!("tau must lie in [0.5, 1), got {}", self.tau)));
        }
        if self.max_n1 == 0 || self.max_n2 == 0 {
            return Err(Error::Config("maximum enrollment must be at least 1 per cohort".into()));
        }
        Ok(())
    }

    /// Validates the configuration and resolves the prior cell counts.
    pub fn alpha(&self) -> Result<AlphaVector<T>> {
        self.validate()?;
        self.prior.alpha()
    }

    pub fn theta0(&self, cohort: Cohort) -> T {
        match cohort {
            Cohort::One => self.theta01,
            Cohort::Two => self.theta02,
        }
    }

    pub fn with_rule(mut self, rule: Rule) -> Self {
        self.rule = rule;
        self
    }

    pub fn with_tau(mut self, tau: T) -> Self {
        self.tau = tau;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CohortStatus {
    Active,
    StoppedToxicity,
    Completed,
}

/// Counts frozen when a cohort stopped.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StopRecord<T> {
    pub n: u32,
    pub k: u32,
    pub exceedance: T,
}

impl<C> TrialConfig<C> {
    pub fn max_n(&self, cohort: Cohort) -> u32 {
        match cohort {
            Cohort::One => self.max_n1,
            Cohort::Two => self.max_n2,
        }
    }
}

/// Live trial state. Values are immutable; transitions return new states.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct TrialState<T> {
    pub data: DataSummary,
    pub status1: CohortStatus,
    pub status2: CohortStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stop1: Option<StopRecord<T>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stop2: Option<StopRecord<T>>,
}

impl<T: Real> Default for TrialState<T> {
    fn default() -> Self {
        Self {
            data: DataSummary::default(),
            status1: CohortStatus::Active,
            status2: CohortStatus::Active,
            stop1: None,
            stop2: None,
        }
    }
}

impl<T: Real> TrialState<T> {
    pub fn new() -> Self {
        Self::default()
    }

    /// A state with the given counts, marking cohorts at their cap completed.
    pub fn from_data<C: Copy>(cfg: &TrialConfig<C>, data: DataSummary) -> Result<Self> {
        data.validate()?;
        let status = |n: u32, cap: u32| if n >= cap { CohortStatus::Completed } else { CohortStatus::Active };
        let st = Self {
            data,
            status1: status(data.n1, cfg.max_n1),
            status2: status(data.n2, cfg.max_n2),
            stop1: None,
            stop2: None,
        };
        st.check_against(cfg.max_n1, cfg.max_n2)?;
        Ok(st)
    }

    pub fn status(&self, cohort: Cohort) -> CohortStatus {
        match cohort {
            Cohort::One => self.status1,
            Cohort::Two => self.status2,
        }
    }

    pub fn stop_record(&self, cohort: Cohort) -> Option<&StopRecord<T>> {
        match cohort {
            Cohort::One => self.stop1.as_ref(),
            Cohort::Two => self.stop2.as_ref(),
        }
    }

    pub fn is_active(&self, cohort: Cohort) -> bool {
        self.status(cohort) == CohortStatus::Active
    }

    pub fn any_active(&self) -> bool {
        self.is_active(Cohort::One) || self.is_active(Cohort::Two)
    }

    fn set(&mut self, cohort: Cohort, status: CohortStatus, record: Option<StopRecord<T>>) {
        match cohort {
            Cohort::One => {
                self.status1 = status;
                self.stop1 = record;
            }
            Cohort::Two => {
                self.status2 = status;
                self.stop2 = record;
            }
        }
    }

    fn check_against(&self, max_n1: u32, max_n2: u32) -> Result<()> {
        self.data.validate().map_err(|e| Error::State(e.to_string()))?;
        for cohort in Cohort::BOTH {
            let (n, k) = self.data.counts(cohort);
            let cap = if cohort == Cohort::One { max_n1 } else { max_n2 };
            if n > cap {
                return Err(Error::State(format!("cohort {cohort} enrolled {n} > cap {cap}")));
            }
            match (self.status(cohort), self.stop_record(cohort)) {
                (CohortStatus::Completed, None) if n == cap => {}
                (CohortStatus::Completed, _) => {
                    return Err(Error::State(format!(
                        "cohort {cohort} is completed but enrolled {n} of {cap} (or carries a stop record)"
                    )))
                }
                (CohortStatus::Active, None) if n < cap => {}
                (CohortStatus::Active, _) => {
                    return Err(Error::State(format!(
                        "cohort {cohort} is active but at its cap or carries a stop record"
                    )))
                }
                (CohortStatus::StoppedToxicity, Some(r)) if r.n == n && r.k == k => {}
                (CohortStatus::StoppedToxicity, _) => {
                    return Err(Error::State(format!(
                        "cohort {cohort} is stopped but its stop record does not match its counts"
                    )))
                }
            }
        }
        Ok(())
    }

    /// Checks the state's internal consistency against the configured caps.
    pub fn validate<C: Copy>(&self, cfg: &TrialConfig<C>) -> Result<()> {
        self.check_against(cfg.max_n1, cfg.max_n2)
    }

    /// Records one patient's outcome in an active cohort.
    pub fn apply_outcome<C: Copy>(&self, cfg: &TrialConfig<C>, cohort: Cohort, toxic: bool) -> Result<Self> {
        self.validate(cfg)?;
        if !self.is_active(cohort) {
            return Err(Error::State(format!(
                "cohort {cohort} is {:?}; no further outcomes can be recorded",
                self.status(cohort)
            )));
        }
        let (n, k) = self.data.counts(cohort);
        let mut next = *self;
        next.data = self.data.with_counts(cohort, n + 1, k + u32::from(toxic));
        if n + 1 == cfg.max_n(cohort) {
            next.set(cohort, CohortStatus::Completed, None);
        }
        Ok(next)
    }

    /// Freezes every cohort flagged for stopping by `decision`.
    pub fn apply_decision(&self, decision: &Decision<T>) -> Self {
        let mut next = *self;
        for d in &decision.per_cohort {
            if d.stop && self.is_active(d.cohort) {
                let (n, k) = self.data.counts(d.cohort);
                next.set(d.cohort, CohortStatus::StoppedToxicity, Some(StopRecord { n, k, exceedance: d.exceedance }));
            }
        }
        next
    }
}

/// Computes and memoizes the exceedance probabilities of one rule for one
/// prior and pair of thresholds. Values do not depend on `tau`, so one
/// evaluator serves every cutoff and every true-rate scenario.
#[derive(Debug)]
pub struct Evaluator<T> {
    rule: Rule,
    alpha: AlphaVector<T>,
    theta0: [T; 2],
    cache: RwLock<HashMap<(DataSummary, Cohort), T>>,
}

impl<T: Real> Evaluator<T> {
    pub fn new(cfg: &TrialConfig<T>) -> Result<Self> {
        let alpha = cfg.alpha()?;
        Self::from_parts(cfg.rule, alpha, cfg.theta01, cfg.theta02)
    }

    pub fn from_parts(rule: Rule, alpha: AlphaVector<T>, theta01: T, theta02: T) -> Result<Self> {
        alpha.validate()?;
        Ok(Self { rule, alpha, theta0: [theta01, theta02], cache: RwLock::new(HashMap::new()) })
    }

    pub fn rule(&self) -> Rule {
        self.rule
    }

    pub fn alpha(&self) -> &AlphaVector<T> {
        &self.alpha
    }

    fn compute(&self, d: &DataSummary, cohort: Cohort) -> Result<T> {
        let theta0 = self.theta0[cohort.index()];
        match self.rule {
            Rule::Correlated => exceedance_correlated(&self.alpha, d, theta0, cohort),
            Rule::Independent => {
                let (n, k) = d.counts(cohort);
                exceedance_independent(&self.alpha, n, k, theta0, cohort)
            }
            Rule::Pooled => exceedance_pooled(&self.alpha, d, theta0),
        }
    }

    /// `P(theta_cohort > theta0_cohort | d)` under this evaluator's rule.
    pub fn exceedance(&self, d: &DataSummary, cohort: Cohort) -> Result<T> {
        let key = (*d, cohort);
        if let Some(&v) = self.cache.read().expect("evaluator lock").get(&key) {
            return Ok(v);
        }
        let v = self.compute(d, cohort)?;
        self.cache.write().expect("evaluator lock").insert(key, v);
        Ok(v)
    }

    /// Smallest toxicity count for `cohort`, holding its enrollment and the
    /// other cohort's counts fixed, whose exceedance reaches `tau`.
    pub fn boundary_k(&self, d: &DataSummary, cohort: Cohort, tau: T) -> Result<Option<u32>> {
        let (n, _) = d.counts(cohort);
        for k in 0..=n {
            if self.exceedance(&d.with_counts(cohort, n, k), cohort)? >= tau {
                return Ok(Some(k));
            }
        }
        Ok(None)
    }

    pub fn cached_len(&self) -> usize {
        self.cache.read().expect("evaluator lock").len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CohortDecision<T> {
    pub cohort: Cohort,
    pub exceedance: T,
    pub stop: bool,
    pub status: CohortStatus,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Decision<T> {
    pub rule: Rule,
    pub per_cohort: [CohortDecision<T>; 2],
}

impl<T> Decision<T> {
    pub fn cohort(&self, cohort: Cohort) -> &CohortDecision<T> {
        &self.per_cohort[cohort.index()]
    }
}

/// Decides stop/continue for every active cohort from the full current
/// data. Stopped cohorts report their frozen record; completed cohorts
/// report the current exceedance and never stop.
pub fn decide<T: Real>(cfg: &TrialConfig<T>, st: &TrialState<T>) -> Result<Decision<T>> {
    let eval = Evaluator::new(cfg)?;
    decide_with(&eval, cfg, st)
}

/// [`decide`] with a caller-supplied evaluator (which must match `cfg`).
pub fn decide_with<T: Real>(eval: &Evaluator<T>, cfg: &TrialConfig<T>, st: &TrialState<T>) -> Result<Decision<T>> {
    cfg.validate()?;
    st.validate(cfg)?;
    let mut out = [Cohort::One, Cohort::Two].map(|cohort| CohortDecision {
        cohort,
        exceedance: T::zero(),
        stop: false,
        status: st.status(cohort),
    });
    for cohort in Cohort::BOTH {
        let slot = &mut out[cohort.index()];
        match st.status(cohort) {
            CohortStatus::StoppedToxicity => {
                let rec = st.stop_record(cohort).expect("validated stop record");
                slot.exceedance = rec.exceedance;
                slot.stop = true;
            }
            CohortStatus::Completed => {
                slot.exceedance = eval.exceedance(&st.data, cohort)?;
            }
            CohortStatus::Active => {
                let p = eval.exceedance(&st.data, cohort)?;
                slot.exceedance = p;
                slot.stop = p >= cfg.tau;
            }
        }
    }
    if eval.rule() == Rule::Pooled && out.iter().any(|d| d.stop && d.status == CohortStatus::Active) {
        for d in out.iter_mut() {
            if d.status == CohortStatus::Active {
                d.stop = true;
            }
        }
    }
    Ok(Decision { rule: eval.rule(), per_cohort: out })
}

/// One recorded patient outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrialEvent {
    pub seq: u64,
    pub cohort: Cohort,
    pub toxic: bool,
}

/// Result of replaying an event log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Replay<T> {
    pub state: TrialState<T>,
    pub decision: Decision<T>,
}

/// Replays an event log from an empty trial: each outcome is recorded, a
/// decision is taken, and any stop is frozen into the state before the
/// next event. Sequence numbers must be strictly increasing.
pub fn replay<T: Real>(cfg: &TrialConfig<T>, events: &[TrialEvent]) -> Result<Replay<T>> {
    let eval = Evaluator::new(cfg)?;
    let mut state = TrialState::new();
    let mut decision = decide_with(&eval, cfg, &state)?;
    let mut last_seq = None;
    for ev in events {
        if let Some(prev) = last_seq {
            if ev.seq <= prev {
                return Err(Error::State(format!("event seq {} does not follow {prev}", ev.seq)));
            }
        }
        last_seq = Some(ev.seq);
        state = state.apply_outcome(cfg, ev.cohort, ev.toxic)?;
        decision = decide_with(&eval, cfg, &state)?;
        state = state.apply_decision(&decision);
    }
    Ok(Replay { state, decision })
}

/// One cell of a stopping boundary table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cell {
    /// Minimal cohort-1 toxicity count that stops cohort 1.
    Stop(u32),
    /// No count up to `n` stops cohort 1.
    None,
    /// `k2 > n`, impossible.
    NotApplicable,
}

impl Cell {
    pub fn value(self) -> Option<u32> {
        match self {
            Cell::Stop(k) => Some(k),
            _ => None,
        }
    }

    fn token(self) -> String {
        match self {
            Cell::Stop(k) => k.to_string(),
            Cell::None => "none".into(),
            Cell::NotApplicable => "na".into(),
        }
    }

    fn parse(tok: &str) -> Result<Self> {
        match tok {
            "none" => Ok(Cell::None),
            "na" => Ok(Cell::NotApplicable),
            other => other
                .parse()
                .map(Cell::Stop)
                .map_err(|_| Error::Config(format!("bad boundary cell '{other}'"))),
        }
    }
}

impl Serialize for Cell {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Cell::Stop(k) => s.serialize_u32(*k),
            Cell::None => s.serialize_str("none"),
            Cell::NotApplicable => s.serialize_str("na"),
        }
    }
}

impl<'de> Deserialize<'de> for Cell {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(u32),
            Tok(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(k) => Ok(Cell::Stop(k)),
            Raw::Tok(t) => Cell::parse(&t).map_err(serde::de::Error::custom),
        }
    }
}

/// Cohort-1 stopping boundaries with equal enrollment `n1 = n2 = n`.
/// `rows[k2][n - 1]` is the cell for `k2` cohort-2 toxicities.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct BoundaryTable {
    pub rule: Rule,
    pub n_max: u32,
    pub rows: Vec<Vec<Cell>>,
}

impl BoundaryTable {
    /// Cell at `(k2, n)` for `1 <= n <= n_max`; any `k2 > n` is not applicable.
    pub fn cell(&self, k2: u32, n: u32) -> Cell {
        assert!(n >= 1 && n <= self.n_max, "n = {n} outside 1..={}", self.n_max);
        if k2 > n {
            return Cell::NotApplicable;
        }
        self.rows[k2 as usize][(n - 1) as usize]
    }

    pub fn row(&self, k2: u32) -> &[Cell] {
        &self.rows[k2 as usize]
    }

    /// CSV with header `k2,1,..,n_max`; cells are counts, `none` or `na`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("k2");
        for n in 1..=self.n_max {
            out.push_str(&format!(",{n}"));
        }
        out.push('\n');
        for (k2, row) in self.rows.iter().enumerate() {
            out.push_str(&k2.to_string());
            for c in row {
                out.push(',');
                out.push_str(&c.token());
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str, rule: Rule) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::Config("empty boundary CSV".into()))?;
        let cols: Vec<&str> = header.split(',').collect();
        if cols.first() != Some(&"k2") {
            return Err(Error::Config("boundary CSV header must start with k2".into()));
        }
        let n_max = (cols.len() - 1) as u32;
        let mut rows = Vec::new();
        for (i, line) in lines.enumerate() {
            let toks: Vec<&str> = line.split(',').collect();
            if toks.len() != cols.len() || toks[0] != i.to_string() {
                return Err(Error::Config(format!("malformed boundary CSV row {i}")));
            }
            rows.push(toks[1..].iter().map(|t| Cell::parse(t)).collect::<Result<Vec<_>>>()?);
        }
        Ok(Self { rule, n_max, rows })
    }

    /// Fixed-width text rendering with `.` for empty cells.
    pub fn to_text(&self) -> String {
        let mut out = format!("stopping boundary for cohort 1 ({} rule), n1 = n2 = n\n", self.rule);
        out.push_str("k2 \\ n");
        for n in 1..=self.n_max {
            out.push_str(&format!("{n:>4}"));
        }
        out.push('\n');
        for (k2, row) in self.rows.iter().enumerate() {
            out.push_str(&format!("{k2:>6}"));
            for c in row {
                let t = match c {
                    Cell::Stop(k) => k.to_string(),
                    _ => ".".into(),
                };
                out.push_str(&format!("{t:>4}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Builds the cohort-1 boundary table for `n = 1..=n_max`, `k2 = 0..=n_max`.
pub fn boundary_table<T: Real>(cfg: &TrialConfig<T>, n_max: u32) -> Result<BoundaryTable> {
    let eval = Evaluator::new(cfg)?;
    boundary_table_with(&eval, cfg.tau, n_max)
}

pub fn boundary_table_with<T: Real>(eval: &Evaluator<T>, tau: T, n_max: u32) -> Result<BoundaryTable> {
    if n_max == 0 {
        return Err(Error::Config("n_max must be at least 1".into()));
    }
    let mut rows = Vec::with_capacity(n_max as usize + 1);
    for k2 in 0..=n_max {
        let mut row = Vec::with_capacity(n_max as usize);
        for n in 1..=n_max {
            if k2 > n {
                row.push(Cell::NotApplicable);
                continue;
            }
            let d = DataSummary { n1: n, k1: 0, n2: n, k2 };
            row.push(match eval.boundary_k(&d, Cohort::One, tau)? {
                Some(k) => Cell::Stop(k),
                None => Cell::None,
            });
        }
        rows.push(row);
    }
    Ok(BoundaryTable { rule: eval.rule(), n_max, rows })
}
