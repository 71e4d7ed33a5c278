//! Synthetic linked panels with known measurement-error structure.
//!
//! The latent log income follows
//!
//! ```text
//! X*_it = m + mu_i + e_it,     e_it = rho e_i,t-1 + xi_it
//! u_it  = E[u] + delta (X*_it - m) + a_it + sum_k l_k (c_kit - E c_k)
//! a_it  = rho_a a_i,t-1 + nu_it
//! ```
//!
//! The register records `exp(X*)`, the survey `exp(X* + u)`. The noise `a` is
//! scaled so that its stationary variance is `noise_var`. An optional outcome
//! `Z* = alpha + beta X* + eps` is written as covariates `z_true` and `z`.
//!
//! Every unit draws from its own ChaCha stream (stream index = unit index), so
//! output does not depend on thread count or scheduling.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, StudentT};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{bias_regime, BiasRegime};
use crate::panel::{LinkedObservation, Panel};

pub const Z_TRUE: &str = "z_true";
pub const Z: &str = "z";
pub const TOP_CODED: &str = "top_coded";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IncomeProcessParams {
    pub rho: f64,
    pub innovation_var: f64,
    pub mean_log_income: f64,
    pub unit_effect_var: f64,
    pub start_at_stationary: bool,
}

impl Default for IncomeProcessParams {
    fn default() -> Self {
        IncomeProcessParams {
            rho: 0.0,
            innovation_var: 0.5,
            mean_log_income: 7.8,
            unit_effect_var: 0.0,
            start_at_stationary: true,
        }
    }
}

impl IncomeProcessParams {
    /// Parameters whose stationary `var(X*)` equals `sigma2` with no unit effect.
    pub fn stationary(rho: f64, sigma2: f64, mean_log_income: f64) -> Self {
        IncomeProcessParams {
            rho,
            innovation_var: sigma2 * (1.0 - rho * rho),
            mean_log_income,
            unit_effect_var: 0.0,
            start_at_stationary: true,
        }
    }

    /// Stationary variance of the AR(1) component alone.
    fn ar_var(&self) -> f64 {
        self.innovation_var / (1.0 - self.rho * self.rho)
    }

    pub fn signal_var(&self) -> f64 {
        self.ar_var() + self.unit_effect_var
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Innovation {
    #[default]
    Gaussian,
    /// Student t rescaled to unit variance; `df > 2`.
    StudentT { df: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ErrorProcessParams {
    pub delta: f64,
    /// Stationary variance of the noise component `a`.
    pub noise_var: f64,
    pub error_mean: f64,
    pub error_rho: f64,
    pub covariate_loadings: BTreeMap<String, f64>,
    pub innovation: Innovation,
}

impl Default for ErrorProcessParams {
    fn default() -> Self {
        ErrorProcessParams {
            delta: 0.0,
            noise_var: 0.0,
            error_mean: 0.0,
            error_rho: 0.0,
            covariate_loadings: BTreeMap::new(),
            innovation: Innovation::Gaussian,
        }
    }
}

impl ErrorProcessParams {
    /// Error with total variance `sigma2_error` and correlation `corr` with a
    /// signal of variance `sigma2_signal`.
    pub fn from_moments(sigma2_signal: f64, sigma2_error: f64, corr: f64, error_mean: f64) -> Result<Self> {
        if !(sigma2_signal > 0.0) || !(sigma2_error >= 0.0) {
            return Err(Error::Config(format!(
                "error moments need var(X*) > 0 and var(u) >= 0, got {sigma2_signal} and {sigma2_error}"
            )));
        }
        if !(corr.abs() <= 1.0) {
            return Err(Error::Config(format!("implied corr(X*, u) = {corr} lies outside [-1, 1]")));
        }
        let delta = corr * (sigma2_error / sigma2_signal).sqrt();
        Ok(ErrorProcessParams {
            delta,
            noise_var: (sigma2_error - delta * delta * sigma2_signal).max(0.0),
            error_mean,
            ..Default::default()
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutcomeSpec {
    #[serde(alias = "gamma")]
    pub beta: f64,
    pub alpha: f64,
    pub residual_var: f64,
    /// Report `Z = Z* + delta (Z* - E Z*) + nu` using the error process's
    /// `delta` and `noise_var` (iid noise). Otherwise `Z = Z*`.
    pub mismeasured: bool,
}

impl Default for OutcomeSpec {
    fn default() -> Self {
        OutcomeSpec {
            beta: 1.0,
            alpha: 0.0,
            residual_var: 0.0,
            mismeasured: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CovariateDist {
    Bernoulli { p: f64 },
    Normal { mean: f64, sd: f64 },
}

impl CovariateDist {
    fn mean(&self) -> f64 {
        match *self {
            CovariateDist::Bernoulli { p } => p,
            CovariateDist::Normal { mean, .. } => mean,
        }
    }

    fn draw<R: Rng>(&self, rng: &mut R) -> f64 {
        match *self {
            CovariateDist::Bernoulli { p } => f64::from(u8::from(rng.random::<f64>() < p)),
            CovariateDist::Normal { mean, sd } => mean + sd * rng.sample::<f64, _>(StandardNormal),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CovariateSpec {
    pub name: String,
    pub dist: CovariateDist,
    #[serde(default)]
    pub time_varying: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DgpConfig {
    pub n_units: usize,
    pub n_periods: usize,
    pub start_year: i32,
    pub income: IncomeProcessParams,
    pub error: ErrorProcessParams,
    pub outcome: Option<OutcomeSpec>,
    pub covariates: Vec<CovariateSpec>,
    pub attrition_hazard: f64,
    pub gap_hazard: f64,
    pub top_code_limit: Option<f64>,
    pub seed: u64,
}

impl Default for DgpConfig {
    fn default() -> Self {
        DgpConfig {
            n_units: 1000,
            n_periods: 1,
            start_year: 2000,
            income: IncomeProcessParams::default(),
            error: ErrorProcessParams::default(),
            outcome: None,
            covariates: Vec::new(),
            attrition_hazard: 0.0,
            gap_hazard: 0.0,
            top_code_limit: None,
            seed: 0,
        }
    }
}

fn check(ok: bool, field: &str, msg: impl std::fmt::Display) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::Config(format!("dgp.{field}: {msg}")))
    }
}

impl DgpConfig {
    pub fn validate(&self) -> Result<()> {
        let inc = &self.income;
        let err = &self.error;
        check(self.n_units >= 1, "n_units", "must be >= 1")?;
        check(self.n_periods >= 1, "n_periods", "must be >= 1")?;
        check(inc.rho.is_finite(), "income.rho", "must be finite")?;
        check(
            !inc.start_at_stationary || inc.rho.abs() < 1.0,
            "income.rho",
            format!("|rho| = {} must be < 1 for a stationary start", inc.rho.abs()),
        )?;
        check(inc.innovation_var > 0.0, "income.innovation_var", "must be > 0")?;
        check(inc.unit_effect_var >= 0.0, "income.unit_effect_var", "must be >= 0")?;
        check(inc.mean_log_income.is_finite(), "income.mean_log_income", "must be finite")?;
        check(err.delta.is_finite(), "error.delta", "must be finite")?;
        check(err.noise_var >= 0.0, "error.noise_var", "must be >= 0")?;
        check(err.error_mean.is_finite(), "error.error_mean", "must be finite")?;
        check(err.error_rho.abs() < 1.0, "error.error_rho", "must lie in (-1, 1)")?;
        if let Innovation::StudentT { df } = err.innovation {
            check(df > 2.0, "error.innovation.df", "must be > 2 for a finite variance")?;
        }
        for (name, l) in &err.covariate_loadings {
            check(l.is_finite(), "error.covariate_loadings", format!("`{name}` is not finite"))?;
            check(
                self.covariates.iter().any(|c| &c.name == name),
                "error.covariate_loadings",
                format!("`{name}` is not a configured covariate"),
            )?;
        }
        for c in &self.covariates {
            match c.dist {
                CovariateDist::Bernoulli { p } => check((0.0..=1.0).contains(&p), "covariates", format!("`{}`: p outside [0, 1]", c.name))?,
                CovariateDist::Normal { mean, sd } => check(
                    mean.is_finite() && sd >= 0.0,
                    "covariates",
                    format!("`{}`: needs finite mean and sd >= 0", c.name),
                )?,
            }
            check(
                ![Z, Z_TRUE, TOP_CODED].contains(&c.name.as_str()),
                "covariates",
                format!("`{}` is a reserved name", c.name),
            )?;
        }
        if let Some(o) = &self.outcome {
            check(o.beta.is_finite() && o.alpha.is_finite(), "outcome", "alpha and beta must be finite")?;
            check(o.residual_var >= 0.0, "outcome.residual_var", "must be >= 0")?;
        }
        check((0.0..=1.0).contains(&self.attrition_hazard), "attrition_hazard", "must lie in [0, 1]")?;
        check((0.0..=1.0).contains(&self.gap_hazard), "gap_hazard", "must lie in [0, 1]")?;
        if let Some(limit) = self.top_code_limit {
            check(limit > 0.0, "top_code_limit", "must be > 0")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleValues {
    pub sigma2_signal: f64,
    pub sigma2_error: f64,
    pub cov_signal_error: f64,
    /// `None` when the error variance is zero.
    pub corr_signal_error: Option<f64>,
    pub lambda_level: f64,
    pub lambda_fd: f64,
    /// `cov(dX, dX*) / var(dX)`; equals `lambda_fd` for classical error.
    pub fd_slope_factor: f64,
    pub nonclassical_slope_factor: Option<f64>,
    pub dep_var_bias_factor: f64,
    pub sign_regime: BiasRegime,
}

pub fn oracle(cfg: &DgpConfig) -> Result<OracleValues> {
    cfg.validate()?;
    if !cfg.income.start_at_stationary {
        return Err(Error::domain("income.start_at_stationary", "oracle values need a stationary start"));
    }
    if !cfg.error.covariate_loadings.is_empty() {
        return Err(Error::domain("error.covariate_loadings", "oracle values need an error without covariate loadings"));
    }
    if cfg.top_code_limit.is_some() {
        return Err(Error::domain("top_code_limit", "oracle values need uncensored register incomes"));
    }
    let inc = &cfg.income;
    let err = &cfg.error;
    let s2x = inc.signal_var();
    let cov_xu = err.delta * s2x;
    let s2u = err.delta * err.delta * s2x + err.noise_var;

    // First differences: the unit effect cancels.
    let v_dx = 2.0 * inc.ar_var() * (1.0 - inc.rho);
    let v_da = 2.0 * err.noise_var * (1.0 - err.error_rho);
    let v_du = err.delta * err.delta * v_dx + v_da;
    let one_d = 1.0 + err.delta;
    let v_dobs = one_d * one_d * v_dx + v_da;

    let (corr, factor, regime) = if s2u > 0.0 {
        let r = cov_xu / (s2x * s2u).sqrt();
        let b = bias_regime(s2x, s2u, r.clamp(-1.0, 1.0))?;
        (Some(r), b.factor, b.regime)
    } else {
        (None, Some(1.0), BiasRegime::SignPreserved)
    };
    Ok(OracleValues {
        sigma2_signal: s2x,
        sigma2_error: s2u,
        cov_signal_error: cov_xu,
        corr_signal_error: corr,
        lambda_level: s2x / (s2x + s2u),
        lambda_fd: v_dx / (v_dx + v_du),
        fd_slope_factor: if v_dobs > 0.0 { one_d * v_dx / v_dobs } else { f64::NAN },
        nonclassical_slope_factor: factor,
        dep_var_bias_factor: one_d,
        sign_regime: regime,
    })
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Unit-variance innovation.
fn innovation(rng: &mut ChaCha8Rng, kind: Innovation) -> f64 {
    match kind {
        Innovation::Gaussian => normal(rng),
        Innovation::StudentT { df } => {
            let t: f64 = StudentT::new(df).expect("validated df").sample(rng);
            t * ((df - 2.0) / df).sqrt()
        }
    }
}

fn simulate_unit(cfg: &DgpConfig, index: usize, width: usize) -> Vec<LinkedObservation> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(index as u64);
    let inc = &cfg.income;
    let err = &cfg.error;
    let unit_id = format!("u{index:0width$}");

    let mu = inc.unit_effect_var.sqrt() * normal(&mut rng);
    let mut covs: Vec<f64> = cfg.covariates.iter().map(|c| c.dist.draw(&mut rng)).collect();
    let sd_xi = inc.innovation_var.sqrt();
    let sd_a = err.noise_var.sqrt();
    let a_scale = (1.0 - err.error_rho * err.error_rho).sqrt();
    let mut e = 0.0;
    let mut a = 0.0;
    let mut out = Vec::with_capacity(cfg.n_periods);
    let mut exited = false;

    for t in 0..cfg.n_periods {
        let xi = normal(&mut rng);
        let nu = innovation(&mut rng, err.innovation);
        let eps = normal(&mut rng);
        let nu_z = normal(&mut rng);
        let gap_draw: f64 = rng.random();
        let exit_draw: f64 = rng.random();
        if t == 0 {
            let sd0 = if inc.start_at_stationary { inc.ar_var().sqrt() } else { sd_xi };
            e = sd0 * xi;
            a = sd_a * nu;
        } else {
            e = inc.rho * e + sd_xi * xi;
            a = err.error_rho * a + sd_a * a_scale * nu;
            for (value, spec) in covs.iter_mut().zip(&cfg.covariates) {
                if spec.time_varying {
                    *value = spec.dist.draw(&mut rng);
                }
            }
        }
        if t > 0 && exit_draw < cfg.attrition_hazard {
            exited = true;
        }
        if exited {
            break;
        }

        let dev = mu + e;
        let x_star = inc.mean_log_income + dev;
        let mut u = err.error_mean + err.delta * dev + a;
        for (value, spec) in covs.iter().zip(&cfg.covariates) {
            if let Some(l) = err.covariate_loadings.get(&spec.name) {
                u += l * (value - spec.dist.mean());
            }
        }

        let mut obs = LinkedObservation::new(unit_id.clone(), cfg.start_year + t as i32);
        for (value, spec) in covs.iter().zip(&cfg.covariates) {
            obs.covariates.insert(spec.name.clone(), *value);
        }
        if let Some(o) = &cfg.outcome {
            let z_dev = o.beta * dev + o.residual_var.sqrt() * eps;
            let z_true = o.alpha + o.beta * inc.mean_log_income + z_dev;
            let z = if o.mismeasured { z_true + err.delta * z_dev + sd_a * nu_z } else { z_true };
            obs.covariates.insert(Z_TRUE.into(), z_true);
            obs.covariates.insert(Z.into(), z);
        }
        if gap_draw < cfg.gap_hazard {
            obs.employed = false;
        } else {
            let mut register = x_star.exp();
            let survey = (x_star + u).exp();
            if let Some(limit) = cfg.top_code_limit {
                let capped = register > limit;
                if capped {
                    register = limit;
                }
                obs.covariates.insert(TOP_CODED.into(), f64::from(u8::from(capped)));
            }
            obs.survey_income = Some(survey);
            obs.register_income = Some(register);
        }
        out.push(obs);
    }
    out
}

pub fn simulate_panel(cfg: &DgpConfig) -> Result<Panel> {
    cfg.validate()?;
    let width = (cfg.n_units - 1).max(1).to_string().len();
    let records: Vec<LinkedObservation> = (0..cfg.n_units)
        .into_par_iter()
        .map(|i| simulate_unit(cfg, i, width))
        .flatten_iter()
        .collect();
    Panel::from_records(records)
}
