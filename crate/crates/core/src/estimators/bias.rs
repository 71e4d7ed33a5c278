//! Probability limit of the OLS slope when the regressor carries additive
//! error correlated with the true signal.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BiasRegime {
    /// The slope keeps its sign and is attenuated.
    SignPreserved,
    /// `corr(X*, u) <= -sqrt(var X* / var u)`: the slope changes sign.
    SignReversed,
    /// `corr(X*, u) < -sqrt(var u / var X*)`: the slope is inflated.
    PositiveBias,
    /// `var(X) = 0`; no slope is defined.
    Degenerate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiasAssessment {
    /// `plim b_OLS / beta`, i.e. `cov(X, X*) / var(X)`. `None` when degenerate.
    pub factor: Option<f64>,
    pub regime: BiasRegime,
}

pub fn bias_regime(sigma2_signal: f64, sigma2_error: f64, corr_signal_error: f64) -> Result<BiasAssessment> {
    if !(sigma2_signal > 0.0) || !(sigma2_error > 0.0) {
        return Err(Error::domain(
            "variance",
            format!("signal and error variances must be > 0, got {sigma2_signal} and {sigma2_error}"),
        ));
    }
    if !(corr_signal_error.abs() <= 1.0) {
        return Err(Error::domain("corr_signal_error", format!("|{corr_signal_error}| > 1")));
    }
    let cov = corr_signal_error * (sigma2_signal * sigma2_error).sqrt();
    let denom = sigma2_signal + sigma2_error + 2.0 * cov;
    if denom <= f64::EPSILON * (sigma2_signal + sigma2_error) {
        return Ok(BiasAssessment { factor: None, regime: BiasRegime::Degenerate });
    }
    let factor = (sigma2_signal + cov) / denom;
    let regime = if corr_signal_error < -(sigma2_error / sigma2_signal).sqrt() {
        BiasRegime::PositiveBias
    } else if corr_signal_error > -(sigma2_signal / sigma2_error).sqrt() {
        BiasRegime::SignPreserved
    } else {
        BiasRegime::SignReversed
    };
    Ok(BiasAssessment { factor: Some(factor), regime })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn classical_case_reduces_to_lambda() {
        let b = bias_regime(0.744, 0.043, 0.0).unwrap();
        assert!((b.factor.unwrap() - 0.744 / 0.787).abs() < 1e-15);
        assert_eq!(b.regime, BiasRegime::SignPreserved);
    }

    #[test]
    fn strong_negative_correlation_reverses_sign() {
        let b = bias_regime(0.1, 0.4, -0.6).unwrap();
        // numerator 0.1 - 0.6 * 0.2 = -0.02, denominator 0.5 - 0.24 = 0.26
        assert!((b.factor.unwrap() - (-0.02 / 0.26)).abs() < 1e-12);
        assert_eq!(b.regime, BiasRegime::SignReversed);
    }

    #[test]
    fn mean_reversion_at_table_magnitudes_inflates() {
        let b = bias_regime(0.744, 0.043, -0.320).unwrap();
        assert!((b.factor.unwrap() - 1.0214).abs() < 5e-4);
        assert_eq!(b.regime, BiasRegime::PositiveBias);
    }

    #[test]
    fn perfect_cancellation_is_degenerate() {
        let b = bias_regime(0.2, 0.2, -1.0).unwrap();
        assert_eq!(b.regime, BiasRegime::Degenerate);
        assert!(b.factor.is_none());
    }

    #[test]
    fn invalid_inputs() {
        assert!(bias_regime(0.0, 0.1, 0.0).is_err());
        assert!(bias_regime(0.1, 0.1, 1.5).is_err());
    }

    proptest! {
        // Regime labels agree with the sign/magnitude of the factor itself.
        #[test]
        fn regime_matches_factor(a in 0.01f64..2.0, b in 0.01f64..2.0, r in -0.999f64..0.999) {
            let out = bias_regime(a, b, r).unwrap();
            let f = out.factor.unwrap();
            match out.regime {
                BiasRegime::PositiveBias => prop_assert!(f > 1.0 - 1e-12),
                BiasRegime::SignPreserved => prop_assert!(f > -1e-12 && f <= 1.0 + 1e-12),
                BiasRegime::SignReversed => prop_assert!(f <= 1e-12),
                BiasRegime::Degenerate => prop_assert!(false),
            }
        }
    }
}
