//! Gaussian processes with structured latent confounders.
//!
//! A library and CLI for hierarchical Bayesian causal-effect estimation:
//! object-level latent confounders are inferred by MCMC (random-walk
//! Metropolis-Hastings over kernel hyperparameters, elliptical slice
//! sampling over confounders) and counterfactual outcomes are computed in
//! closed form per posterior sample. Ships with GP ablation and Bayesian
//! multilevel-model baselines, synthetic benchmark generators, and
//! PEHE / SATE-MSE evaluation metrics.

pub mod error;
pub mod gaussian;
pub mod kernels;
pub mod model;

pub use error::{Error, Result};
