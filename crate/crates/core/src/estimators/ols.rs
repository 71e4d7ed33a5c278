//! Least squares with heteroskedasticity-consistent (sandwich) inference.
//!
//! The design is factored with a column-pivoted Householder QR. A column is
//! treated as dependent when its remaining norm falls below `1e-10` times the
//! largest column norm. The robust covariance is
//!
//! ```text
//! V = (X'WX)^-1 [ sum_i (w_i e_i)^2 x_i x_i' ] (X'WX)^-1 * c
//! ```
//!
//! with `c = n / (n - k)` for HC1 and `c = 1` for HC0.

use std::collections::BTreeSet;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, FisherSnedecor};

use crate::error::{Error, Result};

pub const INTERCEPT: &str = "(intercept)";

const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RobustKind {
    Hc0,
    #[default]
    Hc1,
}

#[derive(Debug, Clone, Copy)]
pub struct OlsOptions<'a> {
    pub intercept: bool,
    /// Calendar period of each row; expands into year indicators with the
    /// first period omitted.
    pub year_fe: Option<&'a [i32]>,
    pub weights: Option<&'a [f64]>,
    pub robust: RobustKind,
}

impl Default for OlsOptions<'_> {
    fn default() -> Self {
        OlsOptions {
            intercept: true,
            year_fe: None,
            weights: None,
            robust: RobustKind::Hc1,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegressionResult {
    pub names: Vec<String>,
    pub coefficients: Vec<f64>,
    pub robust_se: Vec<f64>,
    /// Robust covariance of the coefficients, row-major `k x k`.
    #[serde(skip)]
    pub covariance: Vec<Vec<f64>>,
    pub r_squared: f64,
    pub n_obs: usize,
    #[serde(skip)]
    pub residuals: Vec<f64>,
    pub has_intercept: bool,
}

impl RegressionResult {
    fn index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn coef(&self, name: &str) -> Option<f64> {
        self.index(name).map(|i| self.coefficients[i])
    }

    pub fn se(&self, name: &str) -> Option<f64> {
        self.index(name).map(|i| self.robust_se[i])
    }

    pub fn df_resid(&self) -> usize {
        self.n_obs - self.names.len()
    }
}

/// Column-pivoted Householder QR of a tall matrix stored by columns.
struct PivotedQr {
    /// Upper-triangular factor in pivoted column order.
    r: Vec<Vec<f64>>,
    /// `perm[j]` is the original index of the j-th pivoted column.
    perm: Vec<usize>,
    /// `Q'y` restricted to the first k entries.
    qty: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// First column (in original order) lying in the span of the columns before
/// it, by sequential Gram-Schmidt with reorthogonalization.
fn first_dependent_column(cols: &[Vec<f64>], tol: f64) -> usize {
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for (j, col) in cols.iter().enumerate() {
        let mut v = col.clone();
        for _ in 0..2 {
            for q in &basis {
                let c = dot(q, &v);
                v.iter_mut().zip(q).for_each(|(vi, qi)| *vi -= c * qi);
            }
        }
        let nv = norm(&v);
        if nv <= tol {
            return j;
        }
        v.iter_mut().for_each(|x| *x /= nv);
        basis.push(v);
    }
    cols.len() - 1
}

fn pivoted_qr(mut cols: Vec<Vec<f64>>, mut y: Vec<f64>, names: &[String]) -> Result<PivotedQr> {
    let n = y.len();
    let k = cols.len();
    let original = cols.clone();
    let max_norm = cols.iter().map(|c| norm(c)).fold(0.0, f64::max);
    let tol = RANK_TOL * max_norm.max(f64::MIN_POSITIVE);
    let mut perm: Vec<usize> = (0..k).collect();

    for j in 0..k {
        // Pivot on the largest remaining norm below row j.
        let (best, best_norm) = (j..k)
            .map(|c| (c, norm(&cols[c][j..])))
            .fold((j, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
        if best_norm <= tol {
            let dep = first_dependent_column(&original, tol);
            return Err(Error::RankDeficient { column: names[dep].clone() });
        }
        cols.swap(j, best);
        perm.swap(j, best);

        let alpha = if cols[j][j] >= 0.0 { -best_norm } else { best_norm };
        let mut v: Vec<f64> = cols[j][j..].to_vec();
        v[0] -= alpha;
        let vnorm2 = dot(&v, &v);
        if vnorm2 > 0.0 {
            let reflect = |target: &mut [f64]| {
                let s = 2.0 * dot(&v, target) / vnorm2;
                target.iter_mut().zip(&v).for_each(|(t, vi)| *t -= s * vi);
            };
            for col in cols.iter_mut().skip(j) {
                reflect(&mut col[j..]);
            }
            reflect(&mut y[j..n]);
        }
    }

    let r = (0..k)
        .map(|i| (0..k).map(|j| if j >= i { cols[j][i] } else { 0.0 }).collect())
        .collect();
    Ok(PivotedQr {
        r,
        perm,
        qty: y[..k].to_vec(),
    })
}

fn upper_triangular_inverse(r: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let k = r.len();
    let mut inv = vec![vec![0.0; k]; k];
    for col in 0..k {
        for i in (0..=col).rev() {
            let mut s = if i == col { 1.0 } else { 0.0 };
            for m in (i + 1)..=col {
                s -= r[i][m] * inv[m][col];
            }
            inv[i][col] = s / r[i][i];
        }
    }
    inv
}

/// Ordinary (or weighted) least squares of `y` on the named columns `x`.
pub fn ols_fit(y: &[f64], x: &[(&str, &[f64])], options: OlsOptions<'_>) -> Result<RegressionResult> {
    let n = y.len();
    let mut names: Vec<String> = Vec::new();
    let mut cols: Vec<Vec<f64>> = Vec::new();
    if options.intercept {
        names.push(INTERCEPT.to_string());
        cols.push(vec![1.0; n]);
    }
    for (name, values) in x {
        if values.len() != n {
            return Err(Error::Data(format!(
                "regressor `{name}` has {} rows, expected {n}",
                values.len()
            )));
        }
        names.push(name.to_string());
        cols.push(values.to_vec());
    }
    if let Some(periods) = options.year_fe {
        if periods.len() != n {
            return Err(Error::Data(format!("year_fe has {} rows, expected {n}", periods.len())));
        }
        let years: BTreeSet<i32> = periods.iter().copied().collect();
        for year in years.into_iter().skip(1) {
            names.push(format!("year_{year}"));
            cols.push(periods.iter().map(|&p| if p == year { 1.0 } else { 0.0 }).collect());
        }
    }
    let weights: Vec<f64> = match options.weights {
        Some(w) if w.len() != n => {
            return Err(Error::Data(format!("weights have {} rows, expected {n}", w.len())))
        }
        Some(w) => w.to_vec(),
        None => vec![1.0; n],
    };
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::domain("weights", "weights must be finite and >= 0"));
    }
    if y.iter().chain(cols.iter().flatten()).any(|v| !v.is_finite()) {
        return Err(Error::Data("regression input contains non-finite values".into()));
    }

    let k = cols.len();
    let n_eff = weights.iter().filter(|w| **w > 0.0).count();
    if k == 0 || n_eff <= k {
        return Err(Error::TooFewObservations { n: n_eff, k });
    }

    let sqrt_w: Vec<f64> = weights.iter().map(|w| w.sqrt()).collect();
    let wcols: Vec<Vec<f64>> = cols
        .iter()
        .map(|c| c.iter().zip(&sqrt_w).map(|(v, s)| v * s).collect())
        .collect();
    let wy: Vec<f64> = y.iter().zip(&sqrt_w).map(|(v, s)| v * s).collect();
    let qr = pivoted_qr(wcols, wy, &names)?;

    // Back substitution in pivoted order, then undo the permutation.
    let mut b_piv = vec![0.0; k];
    for i in (0..k).rev() {
        let s: f64 = ((i + 1)..k).map(|j| qr.r[i][j] * b_piv[j]).sum();
        b_piv[i] = (qr.qty[i] - s) / qr.r[i][i];
    }
    let mut coefficients = vec![0.0; k];
    for (j, &orig) in qr.perm.iter().enumerate() {
        coefficients[orig] = b_piv[j];
    }

    let residuals: Vec<f64> = (0..n)
        .map(|i| y[i] - cols.iter().zip(&coefficients).map(|(c, b)| c[i] * b).sum::<f64>())
        .collect();

    // (X'WX)^-1 = P R^-1 R^-T P'
    let rinv = upper_triangular_inverse(&qr.r);
    let mut bread = DMatrix::<f64>::zeros(k, k);
    for a in 0..k {
        for b in 0..k {
            let v: f64 = (a.max(b)..k).map(|m| rinv[a][m] * rinv[b][m]).sum();
            bread[(qr.perm[a], qr.perm[b])] = v;
        }
    }
    let mut meat = DMatrix::<f64>::zeros(k, k);
    let mut score = vec![0.0; k];
    for i in 0..n {
        let we = weights[i] * residuals[i];
        if we == 0.0 {
            continue;
        }
        for (s, c) in score.iter_mut().zip(&cols) {
            *s = c[i] * we;
        }
        for a in 0..k {
            for b in a..k {
                meat[(a, b)] += score[a] * score[b];
            }
        }
    }
    for a in 0..k {
        for b in 0..a {
            meat[(a, b)] = meat[(b, a)];
        }
    }
    let scale = match options.robust {
        RobustKind::Hc0 => 1.0,
        RobustKind::Hc1 => n_eff as f64 / (n_eff - k) as f64,
    };
    let cov = &bread * meat * &bread * scale;
    let covariance: Vec<Vec<f64>> = (0..k).map(|a| (0..k).map(|b| cov[(a, b)]).collect()).collect();
    let robust_se = (0..k).map(|a| cov[(a, a)].max(0.0).sqrt()).collect();

    let wsum: f64 = weights.iter().sum();
    let ybar = y.iter().zip(&weights).map(|(v, w)| v * w).sum::<f64>() / wsum;
    let tss: f64 = y.iter().zip(&weights).map(|(v, w)| w * (v - ybar).powi(2)).sum();
    let rss: f64 = residuals.iter().zip(&weights).map(|(e, w)| w * e * e).sum();
    let r_squared = if tss > 0.0 {
        1.0 - rss / tss
    } else if rss == 0.0 {
        1.0
    } else {
        0.0
    };

    Ok(RegressionResult {
        names,
        coefficients,
        robust_se,
        covariance,
        r_squared,
        n_obs: n_eff,
        residuals,
        has_intercept: options.intercept,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FTest {
    pub f_stat: f64,
    pub df1: usize,
    pub df2: usize,
    pub p_value: f64,
}

/// Robust Wald test that all (non-intercept) coefficients are zero, scaled to
/// an F statistic with `(q, n - k)` degrees of freedom.
pub fn joint_f_test(result: &RegressionResult, exclude_intercept: bool) -> Result<FTest> {
    let tested: Vec<&str> = result
        .names
        .iter()
        .map(String::as_str)
        .filter(|n| !(exclude_intercept && *n == INTERCEPT))
        .collect();
    wald_f_test(result, &tested)
}

/// Robust Wald F-test that the named coefficients are jointly zero.
pub fn wald_f_test(result: &RegressionResult, names: &[&str]) -> Result<FTest> {
    let tested: Vec<usize> = names
        .iter()
        .map(|n| result.index(n).ok_or_else(|| Error::Data(format!("F-test: no coefficient named `{n}`"))))
        .collect::<Result<_>>()?;
    let q = tested.len();
    if q == 0 {
        return Err(Error::Data("joint F-test needs at least one tested coefficient".into()));
    }
    let v = DMatrix::from_fn(q, q, |a, b| result.covariance[tested[a]][tested[b]]);
    let b = nalgebra::DVector::from_iterator(q, tested.iter().map(|&i| result.coefficients[i]));
    let chol = v
        .cholesky()
        .ok_or_else(|| Error::Degenerate("restricted robust covariance is singular".into()))?;
    let wald = b.dot(&chol.solve(&b));
    let f_stat = wald / q as f64;
    let df2 = result.df_resid();
    if df2 == 0 {
        return Err(Error::TooFewObservations { n: result.n_obs, k: result.names.len() });
    }
    let dist = FisherSnedecor::new(q as f64, df2 as f64)
        .map_err(|e| Error::Degenerate(format!("F distribution: {e}")))?;
    Ok(FTest {
        f_stat,
        df1: q,
        df2,
        p_value: dist.sf(f_stat),
    })
}
