//! Global combinations of expert forecasts.
//!
//! Combination weights for panels of forecasters can be fitted per task
//! ("local"), once for all tasks ("hard global"), or per task with a penalty
//! pulling each task's weights toward a shared group vector ("soft global",
//! interpolating between the other two as the coupling strength γ grows).
//! Four weighting schemes are supported: equal weights, variance-minimising
//! weights constrained to sum to one, the same restricted to the probability
//! simplex, and equal weights over a best subset of forecasters.
//!
//! Module map:
//! - [`panel`]: forecast/error panels, missingness masks, task groupings
//! - [`covest`]: covariance estimation (full-sample, pairwise-complete,
//!   positive-definite repair, AR(1) construction)
//! - [`solver`]: quadratic-program kernels (equality-constrained, simplex,
//!   equal-weight subset selection)
//! - [`combine`]: local / hard-global / soft-global weight fitting
//! - [`tune`]: validation and leave-one-out hyperparameter selection
//! - [`simlab`]: synthetic experiments against covariance oracles
//! - [`spf`]: survey-data pipeline (CSV ingestion, rolling-origin
//!   evaluation, globalisation paths)
//! - [`report`]: deterministic CSV output

pub mod combine;
pub mod covest;
pub mod panel;
pub mod report;
pub mod simlab;
pub mod solver;
pub mod spf;
pub mod tune;
