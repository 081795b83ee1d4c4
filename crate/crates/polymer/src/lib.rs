//! Brownian polymer in a white-in-time, spatially correlated Gaussian
//! environment on the periodic lattice `ℤ/pℤ`.
//!
//! - [`covariance`]: spatial kernels, PSD checks and factors.
//! - [`environment`] and [`paths`]: field increments and lazy walks.
//! - [`hamiltonian`]: path energies, Monte Carlo and exact partition functions.
//! - [`run`]: many-environment runs of `log û(t)`.
//! - [`analysis`]: variance growth, exponent fit, variance and tail bounds.
//! - [`gibbs`]: replica overlap and the Mehler quantity `G`.

pub mod analysis;
pub mod covariance;
pub mod environment;
pub mod error;
pub mod gibbs;
pub mod hamiltonian;
pub mod paths;
pub mod run;

pub use error::{PolymerError, Result};
