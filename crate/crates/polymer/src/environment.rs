//! White-in-time, spatially correlated field increments.

use chaostail_core::stats::{derive_stream, StreamRng};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::covariance::Covariance;
use crate::error::{PolymerError, Result};

/// `n_t × p` increments, row `i` is `W((i+1)dt, ·) − W(i dt, ·) ~ N(0, Q dt)`.
#[derive(Clone, Debug, PartialEq)]
pub struct EnvironmentSlab {
    pub p: usize,
    pub n_t: usize,
    pub dt: f64,
    dw: Vec<f64>,
}

impl EnvironmentSlab {
    pub fn zeros(p: usize, n_t: usize, dt: f64) -> Self {
        Self { p, n_t, dt, dw: vec![0.0; p * n_t] }
    }

    pub fn from_rows(p: usize, dt: f64, rows: Vec<f64>) -> Result<Self> {
        if p == 0 || !rows.len().is_multiple_of(p) {
            return Err(PolymerError::InvalidArgument(format!("{} increments do not fill rows of {p} sites", rows.len())));
        }
        Ok(Self { p, n_t: rows.len() / p, dt, dw: rows })
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.dw[i * self.p..(i + 1) * self.p]
    }

    pub fn get(&self, i: usize, site: usize) -> f64 {
        self.dw[i * self.p + site]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.dw
    }

    pub fn time(&self) -> f64 {
        self.n_t as f64 * self.dt
    }

    /// `cos θ · self + sin θ · other`, again a field with covariance `Q`.
    pub fn rotate(&self, other: &Self, theta: f64) -> Self {
        assert_eq!((self.p, self.n_t), (other.p, other.n_t), "rotated slabs must share a shape");
        let (s, c) = theta.sin_cos();
        let dw = self.dw.iter().zip(&other.dw).map(|(a, b)| c * a + s * b).collect();
        Self { dw, ..self.clone() }
    }
}

fn check(n_t: usize, dt: f64) -> Result<()> {
    if n_t == 0 || !(dt > 0.0 && dt.is_finite()) {
        return Err(PolymerError::InvalidArgument(format!("environment needs n_t >= 1 and dt > 0 (n_t = {n_t}, dt = {dt})")));
    }
    Ok(())
}

/// Draws from the stream `(seed, "environment", 0)`.
pub fn sample_environment(cov: &Covariance, n_t: usize, dt: f64, seed: u64) -> Result<EnvironmentSlab> {
    sample_environment_with(cov, n_t, dt, &mut derive_stream(seed, "environment", 0).rng())
}

pub fn sample_environment_with(cov: &Covariance, n_t: usize, dt: f64, rng: &mut StreamRng) -> Result<EnvironmentSlab> {
    check(n_t, dt)?;
    let p = cov.sites();
    let sd = dt.sqrt();
    let mut z = vec![0.0; cov.rank()];
    let mut dw = vec![0.0; p * n_t];
    for row in dw.chunks_exact_mut(p) {
        z.iter_mut().for_each(|v| *v = sd * rng.sample::<f64, _>(StandardNormal));
        cov.apply_factor(&z, row);
    }
    Ok(EnvironmentSlab { p, n_t, dt, dw })
}
