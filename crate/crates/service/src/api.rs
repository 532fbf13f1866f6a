//! Request and response bodies, and the handlers that map one onto the other.

use axum::extract::FromRequest;
use axum::Json;
use serde::{Deserialize, Serialize};
use tox2::monitoring::{decide_with, CohortDecision, Evaluator, Rule, TrialConfig, TrialState};
use tox2::oc::{Calibration, OcEngine, OcSweepRow, TauGrid, TrueToxicity};
use tox2::{BoundaryTable, Cohort, CohortStatus, DataSummary};

use crate::error::ApiError;

/// Largest enrollment cap accepted by the operating-characteristics endpoints.
pub const OC_MAX_N: u32 = 50;
/// Largest number of (theta1, theta2) points in one request.
pub const OC_MAX_POINTS: usize = 100;
/// Largest boundary table served.
pub const TABLE_MAX_N: u32 = 60;
/// Largest what-if horizon.
pub const WHATIF_MAX_HORIZON: u32 = 50;
/// Largest enrollment per cohort in a decision or what-if state.
pub const STATE_MAX_N: u32 = 500;

/// JSON body extractor whose rejections use the service's error format.
#[derive(FromRequest)]
#[from_request(via(axum::Json), rejection(ApiError))]
pub struct Body<T>(pub T);

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct DecisionRequest {
    pub config: TrialConfig<f64>,
    pub state: TrialState<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct CohortView {
    pub cohort: Cohort,
    pub exceedance: f64,
    pub stop: bool,
    pub status: CohortStatus,
    /// Smallest toxicity count at the cohort's current enrollment, other
    /// cohort held fixed, that reaches the cutoff.
    pub boundary_k: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct RuleView {
    pub rule: Rule,
    pub per_cohort: [CohortView; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct DecisionResponse {
    pub rule: Rule,
    pub per_cohort: [CohortView; 2],
    pub rule_comparison: Vec<RuleView>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct WhatIfRequest {
    pub config: TrialConfig<f64>,
    pub state: TrialState<f64>,
    pub horizon: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct WhatIfCell {
    pub j1: u32,
    pub j2: u32,
    pub data: DataSummary,
    pub per_cohort: [CohortDecision<f64>; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct WhatIfResponse {
    pub rule: Rule,
    pub horizon: u32,
    /// `cells[j1][j2]`; a cohort that is not active contributes a single index.
    pub cells: Vec<Vec<WhatIfCell>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct BoundaryTableRequest {
    pub config: TrialConfig<f64>,
    /// Defaults to the smaller enrollment cap.
    pub n_max: Option<u32>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct OcRequest {
    pub config: TrialConfig<f64>,
    pub theta1: Vec<f64>,
    pub theta2: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct OcResponse {
    pub rows: Vec<OcSweepRow<f64>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct CalibrateRequest {
    pub config: TrialConfig<f64>,
    pub target_alpha: f64,
    pub theta2: f64,
    pub grid: Option<TauGrid>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct CalibrateResponse {
    pub rule: Rule,
    #[serde(flatten)]
    pub calibration: Calibration<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Health {
    pub status: &'static str,
    pub name: &'static str,
    pub version: &'static str,
}

fn check_state(cfg: &TrialConfig<f64>, st: &TrialState<f64>) -> Result<(), ApiError> {
    cfg.validate()?;
    st.validate(cfg)?;
    if st.data.n1.max(st.data.n2) > STATE_MAX_N {
        return Err(ApiError::too_large(format!("enrollment above {STATE_MAX_N} per cohort is not served")));
    }
    Ok(())
}

fn views(eval: &Evaluator<f64>, cfg: &TrialConfig<f64>, st: &TrialState<f64>) -> Result<[CohortView; 2], ApiError> {
    let d = decide_with(eval, cfg, st)?;
    let view = |c: &CohortDecision<f64>| -> Result<CohortView, ApiError> {
        let (n, _) = st.data.counts(c.cohort);
        let boundary_k = if n == 0 { None } else { eval.boundary_k(&st.data, c.cohort, cfg.tau)? };
        Ok(CohortView { cohort: c.cohort, exceedance: c.exceedance, stop: c.stop, status: c.status, boundary_k })
    };
    Ok([view(&d.per_cohort[0])?, view(&d.per_cohort[1])?])
}

pub fn decision(req: &DecisionRequest) -> Result<DecisionResponse, ApiError> {
    check_state(&req.config, &req.state)?;
    let mut comparison = Vec::with_capacity(3);
    let mut chosen = None;
    for rule in Rule::ALL {
        let cfg = req.config.with_rule(rule);
        let per_cohort = views(&Evaluator::new(&cfg)?, &cfg, &req.state)?;
        if rule == req.config.rule {
            chosen = Some(per_cohort.clone());
        }
        comparison.push(RuleView { rule, per_cohort });
    }
    Ok(DecisionResponse {
        rule: req.config.rule,
        per_cohort: chosen.expect("configured rule is one of the three"),
        rule_comparison: comparison,
    })
}

/// State after `j` more toxicities among `horizon` more patients in every
/// active cohort; cohorts that reach their cap complete.
fn project(cfg: &TrialConfig<f64>, st: &TrialState<f64>, horizon: u32, j: [u32; 2]) -> TrialState<f64> {
    let mut next = *st;
    for cohort in Cohort::BOTH {
        if !st.is_active(cohort) {
            continue;
        }
        let (n, k) = st.data.counts(cohort);
        let n = n + horizon;
        next.data = next.data.with_counts(cohort, n, k + j[cohort.index()]);
        if n == cfg.max_n(cohort) {
            match cohort {
                Cohort::One => next.status1 = CohortStatus::Completed,
                Cohort::Two => next.status2 = CohortStatus::Completed,
            }
        }
    }
    next
}

pub fn whatif(req: &WhatIfRequest) -> Result<WhatIfResponse, ApiError> {
    let (cfg, st, h) = (&req.config, &req.state, req.horizon);
    check_state(cfg, st)?;
    if h > WHATIF_MAX_HORIZON {
        return Err(ApiError::too_large(format!("horizon above {WHATIF_MAX_HORIZON} is not served")));
    }
    for cohort in Cohort::BOTH {
        let remaining = cfg.max_n(cohort) - st.data.counts(cohort).0;
        if st.is_active(cohort) && h > remaining {
            return Err(ApiError::unprocessable(
                "horizon_exceeds_capacity",
                format!("horizon {h} exceeds the {remaining} remaining places in cohort {cohort}"),
            ));
        }
    }
    let span = |c: Cohort| if st.is_active(c) { h } else { 0 };
    let eval = Evaluator::new(cfg)?;
    let mut cells = Vec::new();
    for j1 in 0..=span(Cohort::One) {
        let mut row = Vec::new();
        for j2 in 0..=span(Cohort::Two) {
            let next = project(cfg, st, h, [j1, j2]);
            let d = decide_with(&eval, cfg, &next)?;
            row.push(WhatIfCell { j1, j2, data: next.data, per_cohort: d.per_cohort });
        }
        cells.push(row);
    }
    Ok(WhatIfResponse { rule: cfg.rule, horizon: h, cells })
}

pub fn boundary_table(req: &BoundaryTableRequest) -> Result<BoundaryTable, ApiError> {
    let cfg = &req.config;
    cfg.validate()?;
    let n_max = req.n_max.unwrap_or(cfg.max_n1.min(cfg.max_n2));
    if n_max > TABLE_MAX_N {
        return Err(ApiError::too_large(format!("boundary tables above n = {TABLE_MAX_N} are not served")));
    }
    Ok(tox2::monitoring::boundary_table(cfg, n_max)?)
}

fn check_oc_caps(cfg: &TrialConfig<f64>) -> Result<(), ApiError> {
    if cfg.max_n1.max(cfg.max_n2) > OC_MAX_N {
        return Err(ApiError::too_large(format!("operating characteristics are served for maxN up to {OC_MAX_N}")));
    }
    Ok(())
}

pub fn oc(req: &OcRequest) -> Result<OcResponse, ApiError> {
    let cfg = &req.config;
    check_oc_caps(cfg)?;
    let points = req.theta1.len() * req.theta2.len();
    if points > OC_MAX_POINTS {
        return Err(ApiError::too_large(format!("{points} grid points requested; at most {OC_MAX_POINTS} are served")));
    }
    if points == 0 {
        return Err(ApiError::unprocessable("domain", "theta1 and theta2 must each list at least one value"));
    }
    let engine = OcEngine::new(cfg)?;
    let (ess, rho) = cfg.prior.ess_rho();
    let mut rows = Vec::with_capacity(points);
    for &theta2 in &req.theta2 {
        for &theta1 in &req.theta1 {
            let result = engine.exact(&TrueToxicity::new(theta1, theta2)?)?;
            rows.push(OcSweepRow { rule: cfg.rule, theta1, theta2, ess, rho, tau: cfg.tau, result });
        }
    }
    Ok(OcResponse { rows })
}

pub fn calibrate(req: &CalibrateRequest) -> Result<CalibrateResponse, ApiError> {
    let cfg = &req.config;
    check_oc_caps(cfg)?;
    let engine = OcEngine::new(cfg)?;
    let grid = req.grid.unwrap_or_default();
    let calibration = tox2::oc::calibrate_tau_on(&engine, req.target_alpha, req.theta2, &grid)?;
    Ok(CalibrateResponse { rule: cfg.rule, calibration })
}

pub fn health() -> Health {
    Health { status: "ok", name: env!("CARGO_PKG_NAME"), version: env!("CARGO_PKG_VERSION") }
}

pub type Reply<T> = Result<Json<T>, ApiError>;
