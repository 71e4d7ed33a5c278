//! Run configuration, read from a TOML file.

use std::path::{Path, PathBuf};

use reliab_core::balancing::BalanceSpec;
use reliab_core::dgp::DgpConfig;
use reliab_core::distribution::{GroupPredicate, WeightedSd};
use reliab_core::estimators::{MomentMode, RobustKind};
use reliab_core::harmonize::RestrictionConfig;
use reliab_core::{ErrorNotion, ModuleTag};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Overrides `dgp.seed` when present.
    pub seed: Option<u64>,
    pub dgp: Option<DgpConfig>,
    pub restrictions: Option<RestrictionConfig>,
    pub balance: Option<BalanceSpec>,
    pub analyses: Vec<Analysis>,
    pub io: IoConfig,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IoConfig {
    pub input: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
    pub spells: Option<PathBuf>,
    pub survey: Option<PathBuf>,
    /// CSV `year, region, limit`; appended to `restrictions.assessment_limits`.
    pub assessment_limits: Option<PathBuf>,
    /// CSV `year, limit`; appended to `restrictions.marginal_limits`.
    pub marginal_limits: Option<PathBuf>,
}

/// Which panel an analysis runs on: every observation left after the
/// restrictions, or the event-timed (and, if configured, balanced) panel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sample {
    All,
    Balanced,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReliabilityMethod {
    Classical,
    Regression,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dependent {
    /// Log error `ln Y - ln Y*`.
    U,
    /// Log survey income.
    Survey,
    /// Log register income.
    Register,
}

impl Dependent {
    pub fn as_str(self) -> &'static str {
        match self {
            Dependent::U => "u",
            Dependent::Survey => "survey",
            Dependent::Register => "register",
        }
    }
}

fn default_notion() -> ErrorNotion {
    ErrorNotion::Log
}

fn default_quantiles() -> usize {
    20
}

fn default_dependents() -> Vec<Dependent> {
    vec![Dependent::U]
}

fn default_gender() -> String {
    "female".into()
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Analysis {
    ErrorSummary {
        #[serde(default = "default_notion")]
        notion: ErrorNotion,
        #[serde(default)]
        weighted: bool,
        sample: Option<Sample>,
    },
    QuantileProfile {
        #[serde(default = "default_quantiles")]
        quantiles: usize,
        #[serde(default = "default_notion")]
        notion: ErrorNotion,
        sample: Option<Sample>,
    },
    Histogram {
        #[serde(default = "default_notion")]
        notion: ErrorNotion,
        width: f64,
        range: (f64, f64),
        #[serde(default)]
        weighted: bool,
        #[serde(default = "yes")]
        normal_overlay: bool,
        sample: Option<Sample>,
    },
    Cdf {
        #[serde(default = "default_notion")]
        notion: ErrorNotion,
        #[serde(default)]
        weighted: bool,
        sample: Option<Sample>,
    },
    MomentMatrix {
        mode: MomentMode,
        /// Defaults to `balance.horizon`.
        horizon: Option<usize>,
    },
    Reliability {
        method: ReliabilityMethod,
        #[serde(default = "pairwise")]
        mode: MomentMode,
        horizon: Option<usize>,
        #[serde(default)]
        include_error_autocov: bool,
    },
    Mincer {
        #[serde(default = "default_dependents")]
        dependent: Vec<Dependent>,
        covariates: Vec<String>,
        #[serde(default)]
        year_fe: bool,
        #[serde(default)]
        by_gender: bool,
        #[serde(default = "default_gender")]
        gender_covariate: String,
        #[serde(default)]
        weighted: bool,
        #[serde(default)]
        robust: RobustKind,
        sample: Option<Sample>,
    },
    GroupSummary {
        #[serde(default)]
        chain: Vec<GroupPredicate>,
        variables: Vec<String>,
        #[serde(default)]
        weighted: bool,
        module: Option<ModuleTag>,
        #[serde(default)]
        sd: WeightedSd,
        sample: Option<Sample>,
    },
}

fn pairwise() -> MomentMode {
    MomentMode::Pairwise
}

impl Analysis {
    pub fn kind(&self) -> &'static str {
        match self {
            Analysis::ErrorSummary { .. } => "error_summary",
            Analysis::QuantileProfile { .. } => "quantile_profile",
            Analysis::Histogram { .. } => "histogram",
            Analysis::Cdf { .. } => "cdf",
            Analysis::MomentMatrix { .. } => "moment_matrix",
            Analysis::Reliability { .. } => "reliability",
            Analysis::Mincer { .. } => "mincer",
            Analysis::GroupSummary { .. } => "group_summary",
        }
    }

    pub fn sample(&self) -> Sample {
        match self {
            Analysis::ErrorSummary { sample, .. }
            | Analysis::QuantileProfile { sample, .. }
            | Analysis::Histogram { sample, .. }
            | Analysis::Cdf { sample, .. }
            | Analysis::Mincer { sample, .. }
            | Analysis::GroupSummary { sample, .. } => sample.unwrap_or(Sample::All),
            Analysis::MomentMatrix { .. } | Analysis::Reliability { .. } => Sample::Balanced,
        }
    }

    /// Covariates the analysis reads; they must exist in the input.
    pub fn referenced_covariates(&self) -> Vec<String> {
        match self {
            Analysis::Mincer { covariates, by_gender, gender_covariate, .. } => {
                let mut out = covariates.clone();
                if *by_gender {
                    out.push(gender_covariate.clone());
                }
                out
            }
            Analysis::GroupSummary { chain, .. } => chain.iter().map(|p| p.covariate.clone()).collect(),
            _ => Vec::new(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<RunConfig, CliError> {
        toml::from_str(text).map_err(|e| CliError::config(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<RunConfig, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = RunConfig::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [
            &mut cfg.io.input,
            &mut cfg.io.output_dir,
            &mut cfg.io.spells,
            &mut cfg.io.survey,
            &mut cfg.io.assessment_limits,
            &mut cfg.io.marginal_limits,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    /// The `[dgp]` section with the top-level seed applied.
    pub fn dgp(&self) -> Result<DgpConfig, CliError> {
        let mut dgp = self.dgp.clone().ok_or_else(|| CliError::config("config: missing [dgp] section"))?;
        if let Some(seed) = self.seed {
            dgp.seed = seed;
        }
        Ok(dgp)
    }
}
