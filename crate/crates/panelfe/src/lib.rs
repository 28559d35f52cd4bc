//! Probit and logit panel models with individual and/or time fixed effects.
//!
//! Fixed-effect maximum likelihood in nonlinear panel models is biased by the
//! incidental parameter problem. This crate estimates the two-way
//! fixed-effect probit and logit models, removes the leading bias by
//! analytical plug-in corrections or by split-panel/delete-one jackknife
//! schemes, and reports corrected coefficients, average partial effects, and
//! standard errors. A Monte Carlo harness evaluates bias, dispersion, and
//! coverage of the estimators on a directed-pair design.

pub mod analytical;
pub mod ape;
pub mod cli;
pub mod data_model;
pub mod error;
pub mod estimator;
mod evalctx;
pub mod inference;
pub mod jackknife;
pub mod links;
pub mod montecarlo;
pub mod output;
pub mod projection;

pub use cli::{estimate, CorrectedEstimates};
pub use data_model::{DropLog, Observation, PanelData};
pub use error::{Error, Result};
pub use estimator::{
    fit_mle, loglik_null, profile_effects, Correction, FitResult, JackknifeVariant, ModelSpec,
    MultipleDim,
};
pub use links::{link_eval, loglik_obs, Family, LinkBundle};
