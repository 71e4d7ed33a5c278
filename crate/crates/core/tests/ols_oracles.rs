use reliab_core::estimators::{joint_f_test, ols_fit, OlsOptions, RobustKind, INTERCEPT};

const X1: [f64; 10] = [1.2, 2.5, 3.1, 4.8, 5.0, 6.3, 7.7, 8.1, 9.4, 10.6];
const X2: [f64; 10] = [0.0, 1.0, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0, 0.0, 1.0];
const Y: [f64; 10] = [3.1, 6.9, 7.2, 12.5, 11.9, 13.0, 16.4, 19.8, 19.1, 25.3];

fn invert(mut a: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    let n = a.len();
    let mut inv: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| f64::from(u8::from(i == j))).collect()).collect();
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
        a.swap(c, p);
        inv.swap(c, p);
        let d = a[c][c];
        for j in 0..n {
            a[c][j] /= d;
            inv[c][j] /= d;
        }
        for r in 0..n {
            if r != c {
                let f = a[r][c];
                for j in 0..n {
                    a[r][j] -= f * a[c][j];
                    inv[r][j] -= f * inv[c][j];
                }
            }
        }
    }
    inv
}

fn matmul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let (n, m, p) = (a.len(), b.len(), b[0].len());
    (0..n).map(|i| (0..p).map(|j| (0..m).map(|k| a[i][k] * b[k][j]).sum()).collect()).collect()
}

/// `(beta, hc0 covariance)` by the textbook formulas.
fn brute_force(y: &[f64], rows: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let k = rows[0].len();
    let xtx: Vec<Vec<f64>> =
        (0..k).map(|a| (0..k).map(|b| rows.iter().map(|r| r[a] * r[b]).sum()).collect()).collect();
    let bread = invert(xtx);
    let xty: Vec<f64> = (0..k).map(|a| rows.iter().zip(y).map(|(r, y)| r[a] * y).sum()).collect();
    let beta: Vec<f64> = (0..k).map(|a| (0..k).map(|b| bread[a][b] * xty[b]).sum()).collect();
    let meat: Vec<Vec<f64>> = (0..k)
        .map(|a| {
            (0..k)
                .map(|b| {
                    rows.iter()
                        .zip(y)
                        .map(|(r, y)| {
                            let e = y - r.iter().zip(&beta).map(|(x, b)| x * b).sum::<f64>();
                            e * e * r[a] * r[b]
                        })
                        .sum()
                })
                .collect()
        })
        .collect();
    (beta, matmul(&matmul(&bread, &meat), &bread))
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * b.abs().max(1.0)
}

#[test]
fn hc1_matches_brute_force_sandwich() {
    let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![1.0, X1[i], X2[i]]).collect();
    let (beta, v0) = brute_force(&Y, &rows);
    let scale = 10.0 / 7.0;
    let r = ols_fit(&Y, &[("x1", &X1), ("x2", &X2)], OlsOptions::default()).unwrap();
    assert_eq!(r.names, vec![INTERCEPT, "x1", "x2"]);
    for j in 0..3 {
        assert!(close(r.coefficients[j], beta[j], 1e-10), "coef {j}");
        assert!(close(r.robust_se[j], (scale * v0[j][j]).sqrt(), 1e-10), "se {j}");
        for l in 0..3 {
            assert!(close(r.covariance[j][l], scale * v0[j][l], 1e-10));
        }
    }
}

// Reference values from statsmodels OLS(cov_type="HC1"/"HC0") on the same data.
#[test]
fn matches_reference_implementation() {
    let r = ols_fit(&Y, &[("x1", &X1), ("x2", &X2)], OlsOptions::default()).unwrap();
    let coef = [0.0507271272590355, 2.1135871611445785, 2.1250324736445805];
    let se1 = [0.5093155714983273, 0.08139477948972407, 0.4348016600665162];
    for j in 0..3 {
        assert!(close(r.coefficients[j], coef[j], 1e-10));
        assert!(close(r.robust_se[j], se1[j], 1e-10));
    }
    assert!(close(r.r_squared, 0.9921253840240284, 1e-10));

    let opts = OlsOptions { robust: RobustKind::Hc0, ..Default::default() };
    let r0 = ols_fit(&Y, &[("x1", &X1), ("x2", &X2)], opts).unwrap();
    let se0 = [0.42612397956400827, 0.06809975836760776, 0.36378116844831154];
    for j in 0..3 {
        assert!(close(r0.robust_se[j], se0[j], 1e-10));
    }

    let f = joint_f_test(&r, true).unwrap();
    assert_eq!((f.df1, f.df2), (2, 7));
    assert!(close(f.f_stat, 370.0136974374561, 1e-9));
    assert!((f.p_value - 7.96462422413397e-08).abs() < 1e-12);
}

// For two numerator degrees of freedom the F survival function has the closed
// form (d2 / (d2 + 2 f))^(d2 / 2).
#[test]
fn f_p_value_closed_form() {
    let x: Vec<f64> = (0..30).map(|i| ((i * 7) % 13) as f64).collect();
    let z: Vec<f64> = (0..30).map(|i| ((i * 5) % 9) as f64 - 4.0).collect();
    let y: Vec<f64> = (0..30).map(|i| 0.05 * x[i] - 0.03 * z[i] + (((i * 11) % 17) as f64 - 8.0) / 4.0).collect();
    let r = ols_fit(&y, &[("x", &x), ("z", &z)], OlsOptions::default()).unwrap();
    let f = joint_f_test(&r, true).unwrap();
    let d2 = f.df2 as f64;
    let expected = (d2 / (d2 + 2.0 * f.f_stat)).powf(d2 / 2.0);
    assert!((f.p_value - expected).abs() < 1e-10, "{} vs {expected}", f.p_value);
}

// Weighted least squares equals OLS on rows scaled by sqrt(w).
#[test]
fn weighted_fit_matches_scaled_rows() {
    let w: [f64; 10] = [1.0, 2.0, 0.5, 3.0, 1.0, 1.5, 2.5, 1.0, 0.7, 1.2];
    let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![w[i].sqrt(), w[i].sqrt() * X1[i], w[i].sqrt() * X2[i]]).collect();
    let ys: Vec<f64> = (0..10).map(|i| w[i].sqrt() * Y[i]).collect();
    let (beta, _) = brute_force(&ys, &rows);
    let r = ols_fit(&Y, &[("x1", &X1), ("x2", &X2)], OlsOptions { weights: Some(&w), ..Default::default() }).unwrap();
    for j in 0..3 {
        assert!(close(r.coefficients[j], beta[j], 1e-10));
    }
}

#[test]
fn year_dummies_equal_within_year_demeaning() {
    let n = 60;
    let years: Vec<i32> = (0..n).map(|i| 2000 + (i % 4) as i32).collect();
    let x: Vec<f64> = (0..n).map(|i| ((i * 17) % 23) as f64 / 3.0 + f64::from(years[i] - 2000)).collect();
    let z: Vec<f64> = (0..n).map(|i| ((i * 7) % 5) as f64).collect();
    let y: Vec<f64> = (0..n)
        .map(|i| 1.5 * x[i] - 0.4 * z[i] + 2.0 * f64::from(years[i] - 2000) + (((i * 29) % 13) as f64 - 6.0) / 5.0)
        .collect();
    let fe = ols_fit(&y, &[("x", &x), ("z", &z)], OlsOptions { year_fe: Some(&years), ..Default::default() }).unwrap();

    let demean = |v: &[f64]| -> Vec<f64> {
        let mut out = v.to_vec();
        for yr in 2000..2004 {
            let idx: Vec<usize> = (0..n).filter(|&i| years[i] == yr).collect();
            let m = idx.iter().map(|&i| v[i]).sum::<f64>() / idx.len() as f64;
            for i in idx {
                out[i] -= m;
            }
        }
        out
    };
    let (yd, xd, zd) = (demean(&y), demean(&x), demean(&z));
    let within = ols_fit(&yd, &[("x", &xd), ("z", &zd)], OlsOptions { intercept: false, ..Default::default() }).unwrap();
    for name in ["x", "z"] {
        assert!((fe.coef(name).unwrap() - within.coef(name).unwrap()).abs() < 1e-8, "{name}");
    }
    assert!(fe.names.contains(&"year_2001".to_string()) && !fe.names.contains(&"year_2000".to_string()));
}
