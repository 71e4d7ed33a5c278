//! Reliability ratios per event time.
//!
//! Classical ratios are read off a [`MomentMatrix`]:
//!
//! ```text
//! level:  var(Y*_t) / (var(Y*_t) + var(u_t))
//! diff:   D / (D + var(u_t) + var(u_{t-1})),  D = var(Y*_t) + var(Y*_{t-1}) - 2 cov(Y*_t, Y*_{t-1})
//! ```
//!
//! The differenced form treats the error as serially uncorrelated unless
//! [`ClassicalOptions::include_error_autocov`] is set. Regression ratios are
//! the OLS slope of the true signal on the report, `cov(Y, Y*) / var(Y)`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::moments::{moment_matrix, MomentMatrix, MomentMode};
use super::ols::{ols_fit, OlsOptions};
use crate::error::{Error, Result};
use crate::panel::Panel;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassicalOptions {
    /// Subtract `2 cov(u_t, u_{t-1})` in the differenced denominator.
    pub include_error_autocov: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassicalReliability {
    /// `(t, lambda)` for `t = 1..T`.
    pub level: Vec<(usize, f64)>,
    /// `(t, lambda)` for `t = 2..T`.
    pub first_difference: Vec<(usize, f64)>,
}

fn ratio(num: f64, den: f64, what: &str) -> Result<f64> {
    if den == 0.0 || !den.is_finite() {
        return Err(Error::Degenerate(format!("{what}: zero denominator")));
    }
    Ok(num / den)
}

pub fn reliability_classical(m: &MomentMatrix, opts: ClassicalOptions) -> Result<ClassicalReliability> {
    let mut level = Vec::with_capacity(m.horizon);
    for t in 1..=m.horizon {
        let vs = m.var_signal(t);
        level.push((t, ratio(vs, vs + m.var_error(t), &format!("level lambda at t={t}"))?));
    }
    let mut first_difference = Vec::new();
    for t in 2..=m.horizon {
        let d = m.var_signal(t) + m.var_signal(t - 1) - 2.0 * m.cov[m.signal(t)][m.signal(t - 1)];
        let mut den = d + m.var_error(t) + m.var_error(t - 1);
        if opts.include_error_autocov {
            den -= 2.0 * m.cov[m.error(t)][m.error(t - 1)];
        }
        first_difference.push((t, ratio(d, den, &format!("first-difference lambda at t={t}"))?));
    }
    Ok(ClassicalReliability { level, first_difference })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegressionReliability {
    pub slope: f64,
    pub robust_se: f64,
    pub n: usize,
}

/// Per-unit `(ln Y, ln Y*)` keyed by event time.
fn timed_logs(panel: &Panel) -> Result<Vec<BTreeMap<u32, (f64, f64)>>> {
    if !panel.has_event_time() {
        return Err(Error::Data("reliability regression requires event time; assign it first".into()));
    }
    Ok(panel
        .unit_ranges()
        .into_iter()
        .map(|range| {
            range
                .filter_map(|i| {
                    let o = &panel.observations()[i];
                    Some((panel.event_time(i)?, (o.log_survey()?, o.log_register()?)))
                })
                .collect()
        })
        .collect())
}

/// OLS of `ln Y*_t` on `ln Y_t` (or of the first differences) with an intercept.
pub fn reliability_regression(panel: &Panel, t: u32, differenced: bool) -> Result<RegressionReliability> {
    if t == 0 || (differenced && t < 2) {
        return Err(Error::Config(format!("invalid event time {t} (differenced: {differenced})")));
    }
    let mut reported = Vec::new();
    let mut truth = Vec::new();
    for unit in timed_logs(panel)? {
        let Some(&(y, ys)) = unit.get(&t) else { continue };
        if differenced {
            let Some(&(y0, ys0)) = unit.get(&(t - 1)) else { continue };
            reported.push(y - y0);
            truth.push(ys - ys0);
        } else {
            reported.push(y);
            truth.push(ys);
        }
    }
    let n = reported.len();
    let mean = reported.iter().sum::<f64>() / n.max(1) as f64;
    if n < 3 || reported.iter().all(|v| (v - mean).abs() <= 1e-14 * mean.abs().max(1.0)) {
        return Err(Error::Degenerate(format!(
            "reported income at t={t} (differenced: {differenced}) has no variation over n = {n}"
        )));
    }
    let fit = ols_fit(&truth, &[("reported", &reported)], OlsOptions::default())?;
    Ok(RegressionReliability {
        slope: fit.coefficients[1],
        robust_se: fit.robust_se[1],
        n,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityEntry {
    pub t: usize,
    pub classical_level: f64,
    pub classical_fd: Option<f64>,
    pub regression_level: RegressionReliability,
    pub regression_fd: Option<RegressionReliability>,
    /// Units observed at `t`.
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityReport {
    pub horizon: usize,
    pub mode: MomentMode,
    pub entries: Vec<ReliabilityEntry>,
}

/// Classical and regression-based ratios for `t = 1..T` from one event-timed panel.
pub fn reliability_report(
    panel: &Panel,
    horizon: usize,
    mode: MomentMode,
    opts: ClassicalOptions,
) -> Result<ReliabilityReport> {
    let m = moment_matrix(panel, horizon, mode)?;
    let classical = reliability_classical(&m, opts)?;
    let scope = match mode {
        MomentMode::Pairwise => panel.clone(),
        MomentMode::Balanced => crate::balancing::build_balanced(
            panel,
            crate::balancing::BalanceSpec { horizon: horizon as u32, mode: crate::balancing::BalanceMode::Strong },
        )?,
    };
    let mut entries = Vec::with_capacity(horizon);
    for t in 1..=horizon {
        let regression_fd = if t >= 2 {
            Some(reliability_regression(&scope, t as u32, true)?)
        } else {
            None
        };
        entries.push(ReliabilityEntry {
            t,
            classical_level: classical.level[t - 1].1,
            classical_fd: if t >= 2 { Some(classical.first_difference[t - 2].1) } else { None },
            regression_level: reliability_regression(&scope, t as u32, false)?,
            regression_fd,
            n: m.n_eff[m.signal(t)][m.signal(t)],
        });
    }
    Ok(ReliabilityReport { horizon, mode, entries })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_error_variance_gives_unit_ratios() {
        let mut entries = vec![];
        for t in 0..3 {
            entries.push((t, t, 0.5 + 0.1 * t as f64));
        }
        entries.push((1, 0, 0.4));
        entries.push((2, 1, 0.45));
        let m = MomentMatrix::from_lower_triangle(3, &entries, 10).unwrap();
        let r = reliability_classical(&m, ClassicalOptions::default()).unwrap();
        assert!(r.level.iter().all(|(_, l)| *l == 1.0));
        assert!(r.first_difference.iter().all(|(_, l)| *l == 1.0));
    }

    #[test]
    fn zero_denominator_is_an_error() {
        let m = MomentMatrix::from_lower_triangle(1, &[], 10).unwrap();
        assert!(matches!(
            reliability_classical(&m, ClassicalOptions::default()),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn error_autocov_flag_changes_denominator() {
        // var Y* = 1 at both t, cov = 0.8; var u = 0.1, cov(u1, u2) = 0.05
        let m = MomentMatrix::from_lower_triangle(
            2,
            &[(0, 0, 1.0), (1, 1, 1.0), (1, 0, 0.8), (2, 2, 0.1), (3, 3, 0.1), (3, 2, 0.05)],
            10,
        )
        .unwrap();
        let plain = reliability_classical(&m, ClassicalOptions::default()).unwrap();
        let adj = reliability_classical(&m, ClassicalOptions { include_error_autocov: true }).unwrap();
        assert!((plain.first_difference[0].1 - 0.4 / 0.6).abs() < 1e-12);
        assert!((adj.first_difference[0].1 - 0.4 / 0.5).abs() < 1e-12);
    }
}
