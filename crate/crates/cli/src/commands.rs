use std::io::Write;
use std::path::PathBuf;

use clap::{Args, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use tox2::bivariate::{feasible_rho_range, BetaShape, RhoRange};
use tox2::monitoring::{replay, PriorSpec, TrialEvent};
use tox2::oc::{calibrate_tau_on, mc_simulate, OcSweepRow, TauGrid, OC_CSV_HEADER};
use tox2::{
    AlphaVector, CohortStatus, Decision, OcEngine, OcResult, PriorElicitation, Rule, TrialConfig, TrialState, TrueToxicity,
};

use crate::design::{ConfigFile, DesignArgs, Format, Sweep};
use crate::CliError;

type Out<'a> = &'a mut dyn Write;

fn json_line<T: Serialize>(out: Out, v: &T) -> Result<(), CliError> {
    let s = serde_json::to_string_pretty(v).map_err(|e| CliError::usage(e.to_string()))?;
    writeln!(out, "{s}")?;
    Ok(())
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_else(|| "NA".into())
}

fn opt_fixed(v: Option<f64>, digits: usize) -> String {
    v.map(|x| format!("{x:.digits$}")).unwrap_or_else(|| "NA".into())
}

// ---- elicit ----

#[derive(Debug, Args)]
pub struct ElicitArgs {
    #[command(flatten)]
    design: DesignArgs,
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct ElicitOutput {
    prior: PriorElicitation,
    alpha: AlphaVector,
    feasible_rho: RhoRange<f64>,
    marginals: [BetaShape<f64>; 2],
}

pub fn elicit(args: &ElicitArgs, out: Out) -> Result<(), CliError> {
    let d = args.design.resolve()?;
    let alpha = d.config.prior.alpha()?;
    let prior = match d.config.prior {
        PriorSpec::Elicited(e) => e,
        PriorSpec::Alpha(a) => a.summarize()?,
    };
    let feasible_rho = feasible_rho_range(prior.p1, prior.p2)?;
    let (m1, m2) = alpha.marginal_params()?;
    let r = ElicitOutput { prior, alpha, feasible_rho, marginals: [m1, m2] };
    match d.format {
        Format::Json => json_line(out, &r)?,
        Format::Csv => {
            writeln!(out, "p1,p2,ess,rho,a11,a10,a01,a00,rhoLo,rhoHi")?;
            let a = r.alpha;
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                prior.p1, prior.p2, prior.ess, prior.rho, a.a11, a.a10, a.a01, a.a00, feasible_rho.lo, feasible_rho.hi
            )?;
        }
        Format::Table => {
            let a = r.alpha;
            writeln!(out, "prior        p1 = {}, p2 = {}, ESS = {}, rho = {}", prior.p1, prior.p2, prior.ess, prior.rho)?;
            writeln!(out, "cell counts  a11 = {:.6}  a10 = {:.6}  a01 = {:.6}  a00 = {:.6}", a.a11, a.a10, a.a01, a.a00)?;
            writeln!(out, "feasible rho [{}, {}]", feasible_rho.lo, feasible_rho.hi)?;
            for (i, m) in r.marginals.iter().enumerate() {
                writeln!(out, "cohort {} marginal  Beta({:.6}, {:.6})", i + 1, m.a, m.b)?;
            }
        }
    }
    Ok(())
}

// ---- boundary-table ----

#[derive(Debug, Args)]
pub struct BoundaryArgs {
    #[command(flatten)]
    design: DesignArgs,
    /// Largest equal enrollment n; defaults to the smaller cap.
    #[arg(long)]
    n_max: Option<u32>,
}

pub fn boundary_table(args: &BoundaryArgs, out: Out) -> Result<(), CliError> {
    let d = args.design.resolve()?;
    let cfg = &d.config;
    let n_max = args.n_max.unwrap_or(cfg.max_n1.min(cfg.max_n2));
    let t = tox2::monitoring::boundary_table(cfg, n_max)?;
    match d.format {
        Format::Json => json_line(out, &t)?,
        Format::Csv => write!(out, "{}", t.to_csv())?,
        Format::Table => write!(out, "{}", t.to_text())?,
    }
    Ok(())
}

// ---- decide ----

#[derive(Debug, Args)]
pub struct DecideArgs {
    #[command(flatten)]
    design: DesignArgs,
    /// Event log: a JSON array of `{seq, cohort, toxic}`, or an object with
    /// `events` and an optional `config`.
    #[arg(long, value_name = "FILE")]
    log: PathBuf,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum EventLog {
    Events(Vec<TrialEvent>),
    Export(LogExport),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LogExport {
    config: Option<TrialConfig>,
    events: Vec<TrialEvent>,
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct DecideOutput {
    rule: Rule,
    events: usize,
    state: TrialState,
    decision: Decision,
}

fn status_word(s: CohortStatus) -> &'static str {
    match s {
        CohortStatus::Active => "continue",
        CohortStatus::StoppedToxicity => "stop",
        CohortStatus::Completed => "complete",
    }
}

pub fn decide(args: &DecideArgs, out: Out) -> Result<(), CliError> {
    let (log_config, events) = match crate::design::read_json::<EventLog>(&args.log)? {
        EventLog::Events(e) => (None, e),
        EventLog::Export(x) => (x.config, x.events),
    };
    let base = match args.design.base()? {
        Some(f) => Some(f),
        None => log_config.map(|config| ConfigFile { config, sweep: Sweep::default(), format: None }),
    };
    let d = args.design.resolve_over(base, false)?;
    let r = replay(&d.config, &events)?;
    let o = DecideOutput { rule: d.config.rule, events: events.len(), state: r.state, decision: r.decision };
    match d.format {
        Format::Json => json_line(out, &o)?,
        Format::Csv => {
            writeln!(out, "cohort,n,k,status,decision,exceedance")?;
            for c in &o.decision.per_cohort {
                let (n, k) = o.state.data.counts(c.cohort);
                writeln!(out, "{},{n},{k},{},{},{}", c.cohort, ser_status(c.status), status_word(c.status), c.exceedance)?;
            }
        }
        Format::Table => {
            writeln!(out, "{} rule after {} events", o.rule, o.events)?;
            writeln!(out, "cohort    n    k  decision  exceedance")?;
            for c in &o.decision.per_cohort {
                let (n, k) = o.state.data.counts(c.cohort);
                writeln!(out, "{:>6} {n:>4} {k:>4}  {:<8}  {:.6}", c.cohort.to_string(), status_word(c.status), c.exceedance)?;
            }
        }
    }
    Ok(())
}

fn ser_status(s: CohortStatus) -> String {
    serde_json::to_value(s).ok().and_then(|v| v.as_str().map(str::to_owned)).unwrap_or_default()
}

// ---- oc ----

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TauMode {
    /// Use the configured cutoff.
    Fixed,
    /// Calibrate the cutoff per rule and prior to the target type I error.
    Calibrated,
}

#[derive(Debug, Args)]
pub struct OcArgs {
    #[command(flatten)]
    design: DesignArgs,
    /// True cohort-1 toxicities.
    #[arg(long, value_delimiter = ',')]
    theta1: Vec<f64>,
    /// True cohort-2 toxicities.
    #[arg(long, value_delimiter = ',')]
    theta2: Vec<f64>,
    /// Rules to evaluate; defaults to the configured rule.
    #[arg(long, value_delimiter = ',')]
    rules: Vec<Rule>,
    /// Emit the grid behind one of the published operating-characteristic
    /// figures: 2 is type I error over ESS, 3 to 5 sweep both true rates.
    #[arg(long, value_parser = clap::value_parser!(u8).range(2..=5), conflicts_with_all = ["theta1", "theta2"])]
    figure: Option<u8>,
    #[arg(long, value_enum, default_value_t = TauMode::Fixed)]
    tau_mode: TauMode,
    /// Type I error target in calibrated mode.
    #[arg(long, default_value_t = 0.1)]
    target_alpha: f64,
    /// True cohort-2 rate at which calibration holds; defaults to theta02.
    #[arg(long)]
    calibration_theta2: Option<f64>,
}

/// Panels and axis shared by the published figures.
const FIGURE_RATES: [f64; 4] = [0.1, 0.2, 0.3, 0.4];

struct Grid {
    rules: Vec<Rule>,
    theta1: Vec<f64>,
    theta2: Vec<f64>,
    designs: Vec<TrialConfig>,
    format: Format,
}

fn oc_grid(args: &OcArgs) -> Result<Grid, CliError> {
    let d = args.design.resolve_over(args.design.base()?, true)?;
    let (cfg, mut sweep, format) = (d.config, d.sweep, d.format);
    let pick = |flag: &[f64], file: Option<Vec<f64>>, default: f64| -> Vec<f64> {
        if !flag.is_empty() {
            flag.to_vec()
        } else {
            file.unwrap_or_else(|| vec![default])
        }
    };
    let mut theta1 = pick(&args.theta1, sweep.theta1.take(), cfg.theta01);
    let mut theta2 = pick(&args.theta2, sweep.theta2.take(), cfg.theta02);
    match args.figure {
        Some(2) => {
            if !args.design.ess.is_empty() {
                return Err(CliError::usage("--figure 2 sweeps ESS itself; drop --ess"));
            }
            theta1 = vec![cfg.theta01];
            theta2 = FIGURE_RATES.to_vec();
            sweep.ess = Some((1..=10).map(f64::from).collect());
        }
        Some(_) => {
            theta1 = FIGURE_RATES.to_vec();
            theta2 = FIGURE_RATES.to_vec();
        }
        None => {}
    }
    let rules = if !args.rules.is_empty() {
        args.rules.clone()
    } else if args.figure.is_some() {
        Rule::ALL.to_vec()
    } else {
        vec![cfg.rule]
    };
    let priors = if sweep.ess.is_none() && sweep.rho.is_none() {
        vec![cfg.prior]
    } else {
        let base = match cfg.prior {
            PriorSpec::Elicited(e) => e,
            PriorSpec::Alpha(a) => a.summarize()?,
        };
        let ess = sweep.ess.unwrap_or(vec![base.ess]);
        let rho = sweep.rho.unwrap_or(vec![base.rho]);
        let mut v = Vec::new();
        for &e in &ess {
            for &r in &rho {
                v.push(PriorSpec::Elicited(PriorElicitation { ess: e, rho: r, ..base }));
            }
        }
        v
    };
    if theta1.is_empty() || theta2.is_empty() || priors.is_empty() {
        return Err(CliError::usage("empty sweep grid"));
    }
    let mut designs = Vec::new();
    for &rule in &rules {
        for &prior in &priors {
            designs.push(TrialConfig { prior, rule, ..cfg });
        }
    }
    Ok(Grid { rules, theta1, theta2, designs, format })
}

pub fn oc(args: &OcArgs, out: Out) -> Result<(), CliError> {
    let grid = oc_grid(args)?;
    log::info!(
        "{} rules x {} designs x {} x {} rate pairs",
        grid.rules.len(),
        grid.designs.len() / grid.rules.len(),
        grid.theta1.len(),
        grid.theta2.len()
    );
    let blocks: Vec<Vec<OcSweepRow<f64>>> = grid
        .designs
        .par_iter()
        .map(|cfg| -> Result<Vec<OcSweepRow<f64>>, CliError> {
            let engine = OcEngine::new(cfg)?;
            let tau = match args.tau_mode {
                TauMode::Fixed => cfg.tau,
                TauMode::Calibrated => {
                    let at = args.calibration_theta2.unwrap_or(cfg.theta02);
                    let c = calibrate_tau_on(&engine, args.target_alpha, at, &TauGrid::default())?;
                    log::info!("{} rule {:?}: tau {} gives alpha {}", cfg.rule, cfg.prior, c.tau, c.achieved_alpha);
                    c.tau
                }
            };
            let (ess, rho) = cfg.prior.ess_rho();
            let mut rows = Vec::with_capacity(grid.theta1.len() * grid.theta2.len());
            for &theta2 in &grid.theta2 {
                for &theta1 in &grid.theta1 {
                    let result = engine.exact_at_tau(&TrueToxicity::new(theta1, theta2)?, tau)?;
                    rows.push(OcSweepRow { rule: cfg.rule, theta1, theta2, ess, rho, tau, result });
                }
            }
            Ok(rows)
        })
        .collect::<Result<_, _>>()?;
    let rows: Vec<_> = blocks.into_iter().flatten().collect();
    match grid.format {
        Format::Json => json_line(out, &rows)?,
        Format::Csv => {
            writeln!(out, "{OC_CSV_HEADER}")?;
            for r in &rows {
                writeln!(out, "{}", r.to_csv())?;
            }
        }
        Format::Table => {
            writeln!(
                out,
                "{:<12}{:>7}{:>7}{:>6}{:>7}{:>8}{:>9}{:>9}{:>8}{:>8}{:>8}{:>8}{:>8}",
                "rule", "theta1", "theta2", "ess", "rho", "tau", "stop1", "stop2", "enr1", "enr2", "events", "early1", "early2"
            )?;
            for r in &rows {
                let x = &r.result;
                writeln!(
                    out,
                    "{:<12}{:>7.3}{:>7.3}{:>6.2}{:>7.3}{:>8.4}{:>9.5}{:>9.5}{:>8.3}{:>8.3}{:>8.3}{:>8}{:>8}",
                    r.rule.as_str(),
                    r.theta1,
                    r.theta2,
                    r.ess,
                    r.rho,
                    r.tau,
                    x.stop_prob1,
                    x.stop_prob2,
                    x.expected_enrolled1,
                    x.expected_enrolled2,
                    x.expected_events_total,
                    opt_fixed(x.expected_events_at_early_stop1, 3),
                    opt_fixed(x.expected_events_at_early_stop2, 3),
                )?;
            }
        }
    }
    Ok(())
}

// ---- calibrate ----

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    #[command(flatten)]
    design: DesignArgs,
    #[arg(long, default_value_t = 0.1)]
    target_alpha: f64,
    /// True cohort-2 rate; defaults to theta02.
    #[arg(long)]
    theta2: Option<f64>,
    /// Rules to calibrate; defaults to the configured rule.
    #[arg(long, value_delimiter = ',')]
    rules: Vec<Rule>,
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct CalibrationRow {
    rule: Rule,
    target_alpha: f64,
    theta2: f64,
    tau: f64,
    achieved_alpha: f64,
}

pub fn calibrate(args: &CalibrateArgs, out: Out) -> Result<(), CliError> {
    let d = args.design.resolve()?;
    let rules = if args.rules.is_empty() { vec![d.config.rule] } else { args.rules.clone() };
    let theta2 = args.theta2.unwrap_or(d.config.theta02);
    let rows: Vec<CalibrationRow> = rules
        .par_iter()
        .map(|&rule| -> Result<CalibrationRow, CliError> {
            let engine = OcEngine::new(&d.config.with_rule(rule))?;
            let c = calibrate_tau_on(&engine, args.target_alpha, theta2, &TauGrid::default())?;
            Ok(CalibrationRow { rule, target_alpha: args.target_alpha, theta2, tau: c.tau, achieved_alpha: c.achieved_alpha })
        })
        .collect::<Result<_, _>>()?;
    match d.format {
        Format::Json => json_line(out, &rows)?,
        Format::Csv => {
            writeln!(out, "rule,targetAlpha,theta2,tau,achievedAlpha")?;
            for r in &rows {
                writeln!(out, "{},{},{},{},{}", r.rule, r.target_alpha, r.theta2, r.tau, r.achieved_alpha)?;
            }
        }
        Format::Table => {
            writeln!(out, "{:<12}{:>8}{:>8}{:>9}{:>10}", "rule", "target", "theta2", "tau", "alpha")?;
            for r in &rows {
                writeln!(
                    out,
                    "{:<12}{:>8}{:>8}{:>9.4}{:>10.5}",
                    r.rule.as_str(),
                    r.target_alpha,
                    r.theta2,
                    r.tau,
                    r.achieved_alpha
                )?;
            }
        }
    }
    Ok(())
}

// ---- simulate ----

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    design: DesignArgs,
    /// True cohort-1 toxicity; defaults to theta01.
    #[arg(long)]
    theta1: Option<f64>,
    /// True cohort-2 toxicity; defaults to theta02.
    #[arg(long)]
    theta2: Option<f64>,
    #[arg(long, default_value_t = 100_000)]
    reps: u64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct SimulateOutput {
    theta1: f64,
    theta2: f64,
    reps: u64,
    seed: u64,
    exact: OcResult,
    estimate: OcResult,
    std_error: OcResult,
}

pub fn simulate(args: &SimulateArgs, out: Out) -> Result<(), CliError> {
    let d = args.design.resolve()?;
    if args.reps == 0 {
        return Err(CliError::usage("--reps must be at least 1"));
    }
    let truth = TrueToxicity::new(args.theta1.unwrap_or(d.config.theta01), args.theta2.unwrap_or(d.config.theta02))?;
    let exact = OcEngine::new(&d.config)?.exact(&truth)?;
    let mc = mc_simulate(&d.config, &truth, args.reps, args.seed)?;
    let o = SimulateOutput {
        theta1: truth.theta1,
        theta2: truth.theta2,
        reps: mc.reps,
        seed: mc.seed,
        exact,
        estimate: mc.estimate,
        std_error: mc.std_error,
    };
    let fields = exact.fields().into_iter().zip(mc.estimate.fields()).zip(mc.std_error.fields());
    match d.format {
        Format::Json => json_line(out, &o)?,
        Format::Csv => {
            writeln!(out, "field,exact,estimate,stdError")?;
            for (((name, e), (_, m)), (_, s)) in fields {
                writeln!(out, "{name},{},{},{}", opt(e), opt(m), opt(s))?;
            }
        }
        Format::Table => {
            writeln!(out, "{} rule, theta = ({}, {}), {} replicates, seed {}", d.config.rule, o.theta1, o.theta2, o.reps, o.seed)?;
            writeln!(out, "{:<28}{:>10}{:>10}{:>10}", "field", "exact", "estimate", "se")?;
            for (((name, e), (_, m)), (_, s)) in fields {
                writeln!(out, "{name:<28}{:>10}{:>10}{:>10}", opt_fixed(e, 5), opt_fixed(m, 5), opt_fixed(s, 5))?;
            }
        }
    }
    Ok(())
}

// ---- serve ----

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, env = "TOX2_BIND", default_value = tox2_service::DEFAULT_BIND)]
    bind: String,
    /// Allowed CORS origin; repeat for several. Any origin when absent.
    #[arg(long = "cors-origin")]
    cors_origins: Vec<String>,
    /// Largest accepted request body in bytes.
    #[arg(long, default_value_t = 256 * 1024)]
    body_limit: usize,
}

pub fn serve(args: &ServeArgs) -> Result<(), CliError> {
    let opts = tox2_service::Options { cors_origins: args.cors_origins.clone(), body_limit: args.body_limit };
    tox2_service::run(&args.bind, opts).map_err(|e| CliError { code: 1, message: e.to_string() })
}
