//! Desk-scale laboratory for central limit behaviour of stochastic-process
//! functionals.
//!
//! The crate bundles four groups of tools that usually end up scattered
//! across one-off scripts:
//!
//! - samplers for stationary Gaussian processes with slowly decaying
//!   covariance (fractional Brownian increments, fractional OU), truncated
//!   Levy noise, and a hybrid fractional Levy process;
//! - Hermite expansions and covariance models, with the quadrature oracles
//!   needed to predict limiting variances and convergence rates of
//!   time-averaged functionals;
//! - empirical distances to the standard normal (exact Wasserstein-1 and
//!   Kolmogorov-Smirnov distances) plus log-log rate fitting;
//! - a discrete Wiener-Poisson sandbox in which Malliavin-type operators
//!   (derivative, divergence, Ornstein-Uhlenbeck semigroup) reduce to exact
//!   finite sums, so integration-by-parts identities can be checked to
//!   machine precision instead of Monte-Carlo precision.
//!
//! Every randomized routine takes an explicit seed and derives independent
//! per-replicate streams, so reports are byte-identical across reruns. The
//! [`experiments`] module wires the pieces into runnable, self-checking
//! experiments; the `cltlab` binary drives them from the command line, and
//! the crate `examples/` directory demonstrates each capability on its own.

pub mod chaos;
pub mod covariance;
pub mod distance;
pub mod error;
pub mod experiments;
pub mod flp;
pub mod functionals;
pub mod hermite;
pub mod jumps;
pub mod paths;
pub mod quad;
pub mod rng;

pub use error::{Error, Result};
