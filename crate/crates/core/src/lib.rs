//! Wasserstein-1 hypothesis tests for the convergence of empirical measures
//! of stationary, dependent sequences.
//!
//! * [`distance`]: empirical measures and exact 1-D W1 distances.
//! * [`kernels`]: model-implied autocovariances and indicator kernels.
//! * [`hac`]: Newey–West estimation of the indicator long-run covariance.
//! * [`limitlaw`]: Monte Carlo simulation of the limiting functionals.
//! * [`testing`]: one-sample, pairwise and Bonferroni tests; experiments.
//! * [`dynsys`]: MA/ARMA and double-pendulum data generators.
//! * [`cli`]: the batch command-line front end.

pub mod cli;
pub mod distance;
pub mod dynsys;
pub mod error;
pub mod hac;
pub mod kernels;
pub mod io;
pub mod limitlaw;
pub mod numeric;
pub mod rng;
pub mod testing;

pub use error::{Error, Result};
