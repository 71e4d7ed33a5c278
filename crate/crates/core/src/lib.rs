//! Validation-study toolkit for income measurement error.
//!
//! The crate links survey and register incomes into panels, applies the
//! sample restrictions of a validation study, builds event-time balanced
//! subpanels, and estimates reliability ratios, attenuation factors and
//! error/covariate regressions. A synthetic generator with closed-form
//! oracle values ([`dgp`]) makes every estimator checkable.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod balancing;
pub mod dgp;
pub mod distribution;
pub mod error;
pub mod estimators;
pub mod harmonize;
pub mod panel;

pub use error::{Error, ErrorClass, Result};
pub use panel::{compute_error_triple, panel_from_records, ErrorNotion, ErrorTriple, LinkedObservation, ModuleTag, Panel};
