//! Trial design resolution: defaults, then the `--config` file, then flags.

use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde::Deserialize;
use tox2::bivariate::PriorElicitation;
use tox2::monitoring::PriorSpec;
use tox2::{Rule, TrialConfig};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Table,
    Csv,
    Json,
}

/// Optional sweep grids carried by a config file.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub theta1: Option<Vec<f64>>,
    pub theta2: Option<Vec<f64>>,
    pub ess: Option<Vec<f64>>,
    pub rho: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub config: TrialConfig,
    #[serde(default)]
    pub sweep: Sweep,
    pub format: Option<Format>,
}

/// Design used when neither a file nor flags say otherwise: prior means 0.2,
/// ESS 3, correlation 0.5, thresholds 0.2, cutoff 0.98, 20 per cohort.
pub fn default_config() -> TrialConfig {
    TrialConfig {
        theta01: 0.2,
        theta02: 0.2,
        tau: 0.98,
        max_n1: 20,
        max_n2: 20,
        prior: PriorSpec::Elicited(PriorElicitation { p1: 0.2, p2: 0.2, ess: 3.0, rho: 0.5 }),
        rule: Rule::Correlated,
    }
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::usage(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))
}

#[derive(Debug, Clone, Default, Args)]
pub struct DesignArgs {
    /// JSON file with `config` and optional `sweep` and `format` keys.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Prior mean toxicity in cohort 1.
    #[arg(long)]
    pub p1: Option<f64>,
    #[arg(long)]
    pub p2: Option<f64>,
    /// Prior effective sample size; `oc` accepts a comma-separated list.
    #[arg(long, value_delimiter = ',')]
    pub ess: Vec<f64>,
    /// Prior correlation between the cohort rates; `oc` accepts a list.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub rho: Vec<f64>,
    #[arg(long)]
    pub theta01: Option<f64>,
    #[arg(long)]
    pub theta02: Option<f64>,
    /// Exceedance probability cutoff.
    #[arg(long)]
    pub tau: Option<f64>,
    /// Maximum enrollment for both cohorts.
    #[arg(long)]
    pub max_n: Option<u32>,
    #[arg(long, conflicts_with = "max_n")]
    pub max_n1: Option<u32>,
    #[arg(long, conflicts_with = "max_n")]
    pub max_n2: Option<u32>,
    #[arg(long)]
    pub rule: Option<Rule>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
}

pub struct Design {
    pub config: TrialConfig,
    pub sweep: Sweep,
    pub format: Format,
}

impl DesignArgs {
    pub fn base(&self) -> Result<Option<ConfigFile>, CliError> {
        self.config.as_deref().map(read_json).transpose()
    }

    /// Applies flag overrides to `base` (or the defaults) and validates.
    /// With `lists`, several `--ess`/`--rho` values become sweep grids.
    pub fn resolve_over(&self, base: Option<ConfigFile>, lists: bool) -> Result<Design, CliError> {
        let (mut cfg, mut sweep, file_format) = match base {
            Some(f) => (f.config, f.sweep, f.format),
            None => (default_config(), Sweep::default(), None),
        };
        for (name, v) in [("ess", &self.ess), ("rho", &self.rho)] {
            if !lists && v.len() > 1 {
                return Err(CliError::usage(format!("--{name} takes a single value for this command")));
            }
        }
        if !self.ess.is_empty() {
            sweep.ess = Some(self.ess.clone());
        }
        if !self.rho.is_empty() {
            sweep.rho = Some(self.rho.clone());
        }
        if self.p1.is_some() || self.p2.is_some() || !self.ess.is_empty() || !self.rho.is_empty() {
            let mut e = match cfg.prior {
                PriorSpec::Elicited(e) => e,
                PriorSpec::Alpha(a) => a.summarize()?,
            };
            e.p1 = self.p1.unwrap_or(e.p1);
            e.p2 = self.p2.unwrap_or(e.p2);
            e.ess = self.ess.first().copied().unwrap_or(e.ess);
            e.rho = self.rho.first().copied().unwrap_or(e.rho);
            cfg.prior = PriorSpec::Elicited(e);
        }
        cfg.theta01 = self.theta01.unwrap_or(cfg.theta01);
        cfg.theta02 = self.theta02.unwrap_or(cfg.theta02);
        cfg.tau = self.tau.unwrap_or(cfg.tau);
        if let Some(n) = self.max_n {
            cfg.max_n1 = n;
            cfg.max_n2 = n;
        }
        cfg.max_n1 = self.max_n1.unwrap_or(cfg.max_n1);
        cfg.max_n2 = self.max_n2.unwrap_or(cfg.max_n2);
        cfg.rule = self.rule.unwrap_or(cfg.rule);
        cfg.validate()?;
        let format = self.format.or(file_format).unwrap_or(Format::Table);
        log::debug!("design: {cfg:?}");
        Ok(Design { config: cfg, sweep, format })
    }

    pub fn resolve(&self) -> Result<Design, CliError> {
        self.resolve_over(self.base()?, false)
    }
}
