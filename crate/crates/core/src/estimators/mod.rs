//! Regression, moment and reliability estimators.

pub mod bias;
pub mod moments;
pub mod ols;
pub mod reliability;

pub use bias::{bias_regime, BiasAssessment, BiasRegime};
pub use moments::{moment_matrix, MomentMatrix, MomentMode};
pub use ols::{joint_f_test, ols_fit, wald_f_test, FTest, OlsOptions, RegressionResult, RobustKind, INTERCEPT};
pub use reliability::{
    reliability_classical, reliability_regression, reliability_report, ClassicalOptions,
    ClassicalReliability, RegressionReliability, ReliabilityEntry, ReliabilityReport,
};
