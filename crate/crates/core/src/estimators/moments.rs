//! Variance/covariance matrices of the log true signal and the log error over
//! event time.
//!
//! Variables are ordered `[ln Y*_1 .. ln Y*_T, u_1 .. u_T]`. In pairwise mode
//! every cell uses all units observed at both of its event times, with means
//! and the `n - 1` denominator taken over that pair sample, so the matrix need
//! not be positive semidefinite. Balanced mode uses the units observed at
//! every `t = 1..T`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::panel::Panel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MomentMode {
    Pairwise,
    Balanced,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentMatrix {
    pub horizon: usize,
    pub mode: MomentMode,
    pub variables: Vec<String>,
    pub cov: Vec<Vec<f64>>,
    /// `None` where a variance in the cell's sample is zero.
    pub corr: Vec<Vec<Option<f64>>>,
    pub n_eff: Vec<Vec<usize>>,
}

fn variable_names(horizon: usize) -> Vec<String> {
    (1..=horizon)
        .map(|t| format!("log_register_{t}"))
        .chain((1..=horizon).map(|t| format!("u_{t}")))
        .collect()
}

impl MomentMatrix {
    /// Index of `ln Y*_t` (1-based `t`).
    pub fn signal(&self, t: usize) -> usize {
        t - 1
    }

    /// Index of `u_t` (1-based `t`).
    pub fn error(&self, t: usize) -> usize {
        self.horizon + t - 1
    }

    pub fn var_signal(&self, t: usize) -> f64 {
        let i = self.signal(t);
        self.cov[i][i]
    }

    pub fn var_error(&self, t: usize) -> f64 {
        let i = self.error(t);
        self.cov[i][i]
    }

    /// Builds a matrix from externally supplied covariances, e.g. a published
    /// table. Correlations use the diagonal variances.
    pub fn from_covariance(horizon: usize, cov: Vec<Vec<f64>>, n: usize) -> Result<MomentMatrix> {
        let dim = 2 * horizon;
        if horizon == 0 || cov.len() != dim || cov.iter().any(|r| r.len() != dim) {
            return Err(Error::Data(format!("covariance matrix must be {dim} x {dim}")));
        }
        let corr = (0..dim)
            .map(|a| (0..dim).map(|b| correlation(cov[a][b], cov[a][a], cov[b][b])).collect())
            .collect();
        Ok(MomentMatrix {
            horizon,
            mode: MomentMode::Balanced,
            variables: variable_names(horizon),
            cov,
            corr,
            n_eff: vec![vec![n; dim]; dim],
        })
    }

    /// Symmetric lower-triangle constructor: `entries[(a, b)]` for `a >= b`.
    pub fn from_lower_triangle(horizon: usize, entries: &[(usize, usize, f64)], n: usize) -> Result<MomentMatrix> {
        let dim = 2 * horizon;
        let mut cov = vec![vec![0.0; dim]; dim];
        for &(a, b, v) in entries {
            if a >= dim || b >= dim {
                return Err(Error::Data(format!("cell ({a}, {b}) outside a {dim} x {dim} matrix")));
            }
            cov[a][b] = v;
            cov[b][a] = v;
        }
        MomentMatrix::from_covariance(horizon, cov, n)
    }
}

fn correlation(cov: f64, var_a: f64, var_b: f64) -> Option<f64> {
    if var_a > 0.0 && var_b > 0.0 {
        Some((cov / (var_a * var_b).sqrt()).clamp(-1.0, 1.0))
    } else {
        None
    }
}

/// Per-unit values of the 2T variables; `None` where the unit has no
/// observation at that event time.
pub(crate) fn unit_vectors(panel: &Panel, horizon: usize) -> Result<Vec<Vec<Option<f64>>>> {
    if !panel.has_event_time() {
        return Err(Error::Data("moment matrix requires event time; assign it first".into()));
    }
    let mut units = Vec::new();
    for range in panel.unit_ranges() {
        let mut row = vec![None; 2 * horizon];
        for i in range {
            let obs = &panel.observations()[i];
            let t = panel.event_time(i).unwrap_or(0) as usize;
            if t == 0 || t > horizon {
                continue;
            }
            if let (Some(ys), Some(u)) = (obs.log_register(), obs.log_error()) {
                row[t - 1] = Some(ys);
                row[horizon + t - 1] = Some(u);
            }
        }
        if row.iter().any(Option::is_some) {
            units.push(row);
        }
    }
    Ok(units)
}

fn pair_moments(pairs: &[(f64, f64)]) -> (f64, f64, f64) {
    let n = pairs.len() as f64;
    let (ma, mb) = pairs.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
    let (ma, mb) = (ma / n, mb / n);
    let (mut caa, mut cbb, mut cab) = (0.0, 0.0, 0.0);
    for (x, y) in pairs {
        let (da, db) = (x - ma, y - mb);
        caa += da * da;
        cbb += db * db;
        cab += da * db;
    }
    let d = n - 1.0;
    (cab / d, caa / d, cbb / d)
}

pub fn moment_matrix(panel: &Panel, horizon: usize, mode: MomentMode) -> Result<MomentMatrix> {
    if horizon == 0 {
        return Err(Error::Config("moment matrix horizon must be >= 1".into()));
    }
    let names = variable_names(horizon);
    let dim = 2 * horizon;
    let mut units = unit_vectors(panel, horizon)?;
    if mode == MomentMode::Balanced {
        units.retain(|row| row.iter().all(Option::is_some));
    }

    let mut cov = vec![vec![0.0; dim]; dim];
    let mut corr = vec![vec![None; dim]; dim];
    let mut n_eff = vec![vec![0; dim]; dim];
    let mut pairs = Vec::with_capacity(units.len());
    for a in 0..dim {
        for b in 0..=a {
            pairs.clear();
            pairs.extend(units.iter().filter_map(|row| Some((row[a]?, row[b]?))));
            if pairs.len() < 2 {
                return Err(Error::SparseCell {
                    row: names[a].clone(),
                    col: names[b].clone(),
                    n: pairs.len(),
                });
            }
            let (c, va, vb) = pair_moments(&pairs);
            cov[a][b] = c;
            cov[b][a] = c;
            let r = if a == b { correlation(va, va, va) } else { correlation(c, va, vb) };
            corr[a][b] = r;
            corr[b][a] = r;
            n_eff[a][b] = pairs.len();
            n_eff[b][a] = pairs.len();
        }
    }
    Ok(MomentMatrix {
        horizon,
        mode,
        variables: names,
        cov,
        corr,
        n_eff,
    })
}
