//! Average marginal treatment effects in panels driven by latent common
//! factors.
//!
//! The setting: a large collection of background series moves with a
//! few unobserved common factors, and each treated unit's outcome loads
//! on those factors through coefficients that vary with a continuous
//! treatment. Estimation runs in two stages. Principal components
//! extract the factors from the background panel, then each unit's
//! outcome is regressed on the factors, their interactions with basis
//! functions of the treatment, and unit controls. Averaging the fitted
//! treatment derivative over dates, units, or both yields per-unit,
//! per-date, and overall average marginal effects, each with plug-in
//! confidence intervals that are robust to heteroskedasticity and,
//! where serial correlation matters, to autocorrelation through
//! kernel-weighted long-run variances.
//!
//! Module map:
//! - [`panel`]: validated containers for the background panel and the
//!   treated units.
//! - [`basis`]: treatment basis functions for the interaction terms.
//! - [`factor`]: factor extraction and growth-ratio rank selection.
//! - [`regression`]: second-stage designs, least squares, and an
//!   instrumented variant.
//! - [`estimands`]: effect estimators and counterfactual curves.
//! - [`inference`]: variance estimators, kernels, and intervals.
//! - [`pipeline`]: the one-call path from panel to report.
//! - [`simulation`]: a data generator with known truths and a Monte
//!   Carlo harness scoring bias, variance, and coverage.
//! - [`ingest`]: long-format CSV reading and writing.
//! - [`cli`]: flag and config handling behind the binary.
//! - [`error`]: the error classes and their process exit codes.

pub mod basis;
pub mod cli;
pub mod error;
pub mod estimands;
pub mod factor;
pub mod inference;
pub mod ingest;
pub mod panel;
pub mod pipeline;
pub mod regression;
pub mod simulation;

pub use error::{Error, Result};
