//! Execution of the configured analyses.

use reliab_core::distribution::{
    empirical_cdf, histogram, quantile_profile, summarize_errors, weighted_group_summary, QuantileProfile,
};
use reliab_core::estimators::{
    moment_matrix, ols_fit, reliability_classical, reliability_regression, reliability_report, wald_f_test,
    ClassicalOptions, FTest, OlsOptions, RobustKind,
};
use reliab_core::{compute_error_triple, ErrorNotion, LinkedObservation, ModuleTag, Panel};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{Analysis, Dependent, ReliabilityMethod};
use crate::error::{CliError, Context};

/// An analysis result plus any plot files `(file name, contents)`.
pub struct Output {
    pub result: Value,
    pub files: Vec<(String, Vec<u8>)>,
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("report types serialize")
}

fn error_values(panel: &Panel, notion: ErrorNotion) -> (Vec<f64>, Vec<f64>) {
    panel
        .observations()
        .iter()
        .filter_map(|o| compute_error_triple(o).ok().map(|e| (e.get(notion), o.weight)))
        .unzip()
}

fn refuse_pooled(panel: &Panel, what: &str) -> Result<(), CliError> {
    if panel.modules().len() > 1 {
        return Err(CliError::config(format!(
            "{what}: weighted estimates cannot pool the core and innovation modules; restrict the sample to one module"
        )));
    }
    Ok(())
}

fn csv_bytes(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(&r).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

fn profile_csv(p: &QuantileProfile) -> Vec<u8> {
    csv_bytes(
        &["q", "n", "mean", "sd", "p5", "p25", "p50", "p75", "p95", "share_negative"],
        p.groups.iter().map(|g| {
            let s = &g.summary;
            let mut row = vec![g.q.to_string(), s.n.to_string()];
            row.extend([s.mean, s.sd, s.p5, s.p25, s.p50, s.p75, s.p95, s.share_negative].map(|v| v.to_string()));
            row
        }),
    )
}

fn horizon_or(h: Option<usize>, default: Option<usize>, what: &str) -> Result<usize, CliError> {
    h.or(default)
        .ok_or_else(|| CliError::config(format!("{what}: set `horizon` or a [balance] section")))
}

pub fn run(
    index: usize,
    analysis: &Analysis,
    panel: &Panel,
    default_horizon: Option<usize>,
) -> Result<Output, CliError> {
    let ctx = format!("analysis #{index} ({})", analysis.kind());
    let mut files = Vec::new();
    let result = match analysis {
        Analysis::ErrorSummary { notion, weighted, .. } => {
            to_value(&summarize_errors(panel, *notion, *weighted).context(&ctx)?)
        }
        Analysis::QuantileProfile { quantiles, notion, .. } => {
            let p = quantile_profile(panel, *quantiles, *notion).context(&ctx)?;
            files.push((format!("quantile_profile_{index}.csv"), profile_csv(&p)));
            to_value(&p)
        }
        Analysis::Histogram { notion, width, range, weighted, normal_overlay, .. } => {
            if *weighted {
                refuse_pooled(panel, &ctx)?;
            }
            let (values, weights) = error_values(panel, *notion);
            let h = histogram(&values, *width, *range, weighted.then_some(&weights[..]), *normal_overlay)
                .context(&ctx)?;
            let mut buf = Vec::new();
            h.to_csv(&mut buf).context(&ctx)?;
            files.push((format!("histogram_{index}.csv"), buf));
            to_value(&h)
        }
        Analysis::Cdf { notion, weighted, .. } => {
            if *weighted {
                refuse_pooled(panel, &ctx)?;
            }
            let (values, weights) = error_values(panel, *notion);
            let cdf = empirical_cdf(&values, weighted.then_some(&weights[..])).context(&ctx)?;
            files.push((
                format!("cdf_{index}.csv"),
                csv_bytes(&["x", "cdf"], cdf.iter().map(|(x, f)| vec![x.to_string(), f.to_string()])),
            ));
            json!({ "n": values.len(), "points": cdf.len() })
        }
        Analysis::MomentMatrix { mode, horizon } => {
            let t = horizon_or(*horizon, default_horizon, &ctx)?;
            to_value(&moment_matrix(panel, t, *mode).context(&ctx)?)
        }
        Analysis::Reliability { method, mode, horizon, include_error_autocov } => {
            let t = horizon_or(*horizon, default_horizon, &ctx)?;
            let opts = ClassicalOptions { include_error_autocov: *include_error_autocov };
            match method {
                ReliabilityMethod::Both => to_value(&reliability_report(panel, t, *mode, opts).context(&ctx)?),
                ReliabilityMethod::Classical => {
                    let m = moment_matrix(panel, t, *mode).context(&ctx)?;
                    let r = reliability_classical(&m, opts).context(&ctx)?;
                    let n: Vec<usize> = (1..=t).map(|s| m.n_eff[m.signal(s)][m.signal(s)]).collect();
                    json!({ "mode": mode, "horizon": t, "level": r.level, "first_difference": r.first_difference, "n": n })
                }
                ReliabilityMethod::Regression => {
                    let mut level = Vec::new();
                    let mut fd = Vec::new();
                    for s in 1..=t as u32 {
                        level.push(json!({ "t": s, "estimate": reliability_regression(panel, s, false).context(&ctx)? }));
                        if s >= 2 {
                            fd.push(json!({ "t": s, "estimate": reliability_regression(panel, s, true).context(&ctx)? }));
                        }
                    }
                    json!({ "horizon": t, "level": level, "first_difference": fd })
                }
            }
        }
        Analysis::Mincer {
            dependent,
            covariates,
            year_fe,
            by_gender,
            gender_covariate,
            weighted,
            robust,
            ..
        } => {
            let spec = MincerSpec {
                covariates: covariates.clone(),
                year_fe: *year_fe,
                gender: by_gender.then(|| gender_covariate.clone()),
                weighted: *weighted,
                robust: *robust,
            };
            if *weighted {
                refuse_pooled(panel, &ctx)?;
            }
            let mut tables = Vec::new();
            for dep in dependent {
                tables.extend(mincer(panel, *dep, &spec).map_err(|e| CliError { message: format!("{ctx}: {}", e.message), ..e })?);
            }
            to_value(&tables)
        }
        Analysis::GroupSummary { chain, variables, weighted, module, .. } => {
            to_value(&weighted_group_summary(panel, chain, variables, *weighted, *module).context(&ctx)?)
        }
    };
    Ok(Output { result, files })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MincerSpec {
    pub covariates: Vec<String>,
    pub year_fe: bool,
    /// Indicator covariate; when set, separate fits for value 1 and 0.
    pub gender: Option<String>,
    pub weighted: bool,
    pub robust: RobustKind,
}

#[derive(Debug, Clone, Serialize)]
pub struct CoefRow {
    pub name: String,
    pub coef: f64,
    pub se: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct MincerTable {
    pub dependent: Dependent,
    pub group: String,
    pub n: usize,
    pub r_squared: f64,
    pub coefficients: Vec<CoefRow>,
    /// Robust joint test that all covariate coefficients are zero.
    pub f_test: Option<FTest>,
}

impl MincerTable {
    pub fn coef(&self, name: &str) -> Option<f64> {
        self.coefficients.iter().find(|c| c.name == name).map(|c| c.coef)
    }
}

fn dependent_value(o: &LinkedObservation, dep: Dependent) -> Option<f64> {
    match dep {
        Dependent::U => o.log_error(),
        Dependent::Survey => o.log_survey(),
        Dependent::Register => o.log_register(),
    }
}

/// Mincer-type regressions of one dependent variable. The estimation sample
/// is the same for every dependent: observations with both incomes and every
/// covariate present, so the fits are additive in the dependent variable.
pub fn mincer(panel: &Panel, dep: Dependent, spec: &MincerSpec) -> Result<Vec<MincerTable>, CliError> {
    let regressors: Vec<&str> = spec
        .covariates
        .iter()
        .map(String::as_str)
        .filter(|c| spec.gender.as_deref() != Some(*c))
        .collect();
    let usable = |o: &LinkedObservation| {
        o.has_valid_incomes()
            && regressors.iter().all(|c| o.covariate(c).is_some())
            && spec.gender.as_deref().is_none_or(|g| o.covariate(g).is_some())
    };
    type Keep = Box<dyn Fn(&LinkedObservation) -> bool>;
    let groups: Vec<(String, Keep)> = match &spec.gender {
        None => vec![("all".into(), Box::new(|_| true))],
        Some(g) => {
            let (g1, g0) = (g.clone(), g.clone());
            vec![
                (format!("{g}=1"), Box::new(move |o: &LinkedObservation| o.covariate(&g1) == Some(1.0))),
                (format!("{g}=0"), Box::new(move |o: &LinkedObservation| o.covariate(&g0) == Some(0.0))),
            ]
        }
    };
    let mut tables = Vec::new();
    for (label, keep) in groups {
        let obs: Vec<&LinkedObservation> = panel.observations().iter().filter(|o| usable(o) && keep(o)).collect();
        let y: Vec<f64> = obs.iter().map(|o| dependent_value(o, dep).unwrap()).collect();
        let cols: Vec<Vec<f64>> = regressors.iter().map(|c| obs.iter().map(|o| o.covariate(c).unwrap()).collect()).collect();
        let x: Vec<(&str, &[f64])> = regressors.iter().zip(&cols).map(|(n, c)| (*n, c.as_slice())).collect();
        let years: Vec<i32> = obs.iter().map(|o| o.period).collect();
        let weights: Vec<f64> = obs.iter().map(|o| o.weight).collect();
        let opts = OlsOptions {
            intercept: true,
            year_fe: spec.year_fe.then_some(&years[..]),
            weights: spec.weighted.then_some(&weights[..]),
            robust: spec.robust,
        };
        let ctx = format!("mincer (dependent {}, group {label})", dep.as_str());
        let fit = ols_fit(&y, &x, opts).context(&ctx)?;
        let f_test = if regressors.is_empty() { None } else { Some(wald_f_test(&fit, &regressors).context(&ctx)?) };
        tables.push(MincerTable {
            dependent: dep,
            group: label,
            n: fit.n_obs,
            r_squared: fit.r_squared,
            coefficients: fit
                .names
                .iter()
                .zip(fit.coefficients.iter().zip(&fit.robust_se))
                .map(|(name, (coef, se))| CoefRow { name: name.clone(), coef: *coef, se: *se })
                .collect(),
            f_test,
        });
    }
    Ok(tables)
}

/// Modules present in a panel, for report metadata.
pub fn module_counts(panel: &Panel) -> Vec<(ModuleTag, usize)> {
    panel
        .modules()
        .into_iter()
        .map(|m| (m, panel.observations().iter().filter(|o| o.module_tag == m).count()))
        .collect()
}
