//! Conformal prediction of counterfactual outcomes and individual treatment
//! effects when observational data carries hidden confounding.
//!
//! A small interventional sample is used to learn the density ratio between
//! the interventional and observational joint distributions of `(x, y)`.
//! The ratio reweights conformity scores computed on the (much larger)
//! observational sample, giving intervals that target the interventional
//! distribution.
//!
//! Module map:
//!
//! - [`stats`]: conformity scores, empirical and weighted quantiles.
//! - [`predictors`]: ridge / boosted-tree regressors and a logistic classifier.
//! - [`density_ratio`]: classifier-based density ratios and conformal weights.
//! - [`conformal`]: split, transductive, weighted and two-stage intervals.
//! - [`ite`]: treatment-effect intervals from per-arm intervals.
//! - [`synthetic`]: the confounded benchmark generator.
//! - [`gaussian_case`]: the additive-Gaussian testbed and its diagnostics.
//! - [`harness`]: metrics, CSV I/O and experiment orchestration.

pub mod conformal;
pub mod data;
pub mod density_ratio;
mod error;
pub mod gaussian_case;
pub mod harness;
pub mod ite;
pub mod predictors;
pub mod rng;
pub mod stats;
pub mod synthetic;

pub use error::{Error, Result};
