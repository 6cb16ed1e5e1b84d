//! Freeze-thaw Bayesian optimization over partially-observed training curves.
//!
//! The optimizer models every configuration's per-epoch loss curve with a
//! structured Gaussian process (an exponential-decay kernel over epochs under
//! a warped Matern-5/2 GP over hyperparameters), forecasts each curve's
//! asymptotic loss, and decides per round whether to start a new
//! configuration or resume a paused one via expected improvement plus an
//! entropy-search criterion over the location of the minimum.

pub mod acquisition;
pub mod bench;
pub mod controller;
pub mod error;
pub mod ftgp;
pub mod kernels;
pub mod linalg;
pub mod mcmc;
pub mod util;

mod exec;

pub use error::{Error, Result};
