//! Gaussian tail machinery driven by Malliavin calculus.
//!
//! * [`gaussian_stein`]: the explicit solution of Stein's equation for
//!   indicator test functions and the derivative estimates around it.
//! * [`tail_engine`]: densities and tails rebuilt from `g(z) = E[G | X = z]`,
//!   plus the named lower/upper bound formulas.
//! * [`chaos`]: exact Malliavin derivative, `L^{-1}` and
//!   `G = <DX, -DL^{-1}X>` for finite Hermite expansions, with Monte Carlo
//!   verification of the integration-by-parts and Mehler-type identities.
//! * [`stats`]: jackknife errors, DKW bands, log-log fits, RNG streams.
//! * [`report`]: tail tables with named envelopes, as CSV or JSON.

pub mod chaos;
pub mod error;
pub mod gaussian_stein;
pub mod quadrature;
pub mod report;
pub mod special;
pub mod stats;
pub mod tail_engine;

pub use error::{Error, Result};
