//! Path energies and Monte Carlo partition functions.

use serde::{Deserialize, Serialize};

use crate::environment::EnvironmentSlab;
use crate::error::{PolymerError, Result};
use crate::paths::PathEnsemble;

/// Smallest path sample accepted by [`partition_function`].
pub const MIN_PATHS: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HamiltonianKind {
    /// `H = X`, the field integrated along the path.
    Linear,
    /// `H = X + X|X|/t`.
    NonlinearAbs,
}

impl HamiltonianKind {
    #[inline]
    pub fn energy(self, t: f64, x: f64) -> f64 {
        match self {
            Self::Linear => x,
            Self::NonlinearAbs => x + x * x.abs() / t,
        }
    }

    /// Path factor multiplying `Q` in the overlap and in `G`: `1` for the
    /// linear energy, `1 + |X|/t` for the nonlinear one.
    #[inline]
    pub fn weight_factor(self, t: f64, x: f64) -> f64 {
        match self {
            Self::Linear => 1.0,
            Self::NonlinearAbs => 1.0 + x.abs() / t,
        }
    }
}

/// `X = Σ_i dW[i][b_i]` over the first `path.len()` steps.
pub fn path_integral(env: &EnvironmentSlab, path: &[u32]) -> f64 {
    path.iter().enumerate().map(|(i, &x)| env.get(i, x as usize)).sum()
}

pub fn hamiltonian(env: &EnvironmentSlab, path: &[u32], kind: HamiltonianKind) -> Result<f64> {
    if path.len() != env.n_t || path.iter().any(|&x| x as usize >= env.p) {
        return Err(PolymerError::InvalidArgument(format!(
            "path of {} steps does not fit a {}x{} slab",
            path.len(),
            env.n_t,
            env.p
        )));
    }
    Ok(kind.energy(env.time(), path_integral(env, path)))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartitionEstimate {
    pub u_hat: f64,
    pub log_u_hat: f64,
    /// Delta-method standard error of `log û`.
    pub se_log: f64,
    /// First-order jackknife estimate of `E[log û] − log u`.
    pub jackknife_bias: f64,
}

/// `log((1/n) Σ e^{h_j})` with its delta-method error and jackknife bias.
///
/// With `e_j = e^{h_j − max h}` and self-normalised weights `w_j`, the
/// leave-one-out estimates are `log û + ln(1 − w_j) + ln(n/(n−1))`.
pub fn log_mean_exp(hs: &[f64]) -> Result<PartitionEstimate> {
    let n = hs.len();
    if n < 2 {
        return Err(PolymerError::InvalidArgument(format!("need at least 2 energies, got {n}")));
    }
    if hs.iter().any(|h| h.is_nan() || *h == f64::INFINITY) {
        return Err(PolymerError::InvalidArgument("energies must be finite or -inf".into()));
    }
    let max = hs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(PolymerError::Degenerate("every path energy is -inf".into()));
    }
    let nf = n as f64;
    let scaled: Vec<f64> = hs.iter().map(|h| (h - max).exp()).collect();
    let sum: f64 = scaled.iter().sum();
    let mean = sum / nf;
    let var = scaled.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (nf - 1.0);
    let log_u_hat = max + mean.ln();
    let loo_shift = (nf / (nf - 1.0)).ln();
    let loo_mean = scaled.iter().map(|e| (-e / sum).ln_1p()).sum::<f64>() / nf + loo_shift;
    Ok(PartitionEstimate {
        u_hat: log_u_hat.exp(),
        log_u_hat,
        se_log: (var / nf).sqrt() / mean,
        jackknife_bias: (nf - 1.0) * loo_mean,
    })
}

pub fn partition_function(env: &EnvironmentSlab, paths: &PathEnsemble, kind: HamiltonianKind) -> Result<PartitionEstimate> {
    if paths.n_b < MIN_PATHS {
        return Err(PolymerError::InvalidArgument(format!("partition function needs n_b >= {MIN_PATHS}, got {}", paths.n_b)));
    }
    let hs = paths.paths().map(|b| hamiltonian(env, b, kind)).collect::<Result<Vec<_>>>()?;
    log_mean_exp(&hs)
}

/// Exact `log E_b[exp X]` for the linear energy, by propagating the
/// unnormalised walk law through the slab one step at a time. Returns the
/// value after each of `checkpoints` steps (each in `1..=n_t`, increasing).
pub fn exact_log_partition(env: &EnvironmentSlab, checkpoints: &[usize]) -> Result<Vec<f64>> {
    if checkpoints.windows(2).any(|w| w[1] <= w[0]) || checkpoints.iter().any(|&c| c == 0 || c > env.n_t) {
        return Err(PolymerError::InvalidArgument("checkpoints must increase within 1..=n_t".into()));
    }
    let p = env.p;
    let mut mass = vec![0.0; p];
    let mut next = vec![0.0; p];
    mass[0] = 1.0;
    let mut log_scale = 0.0;
    let mut out = Vec::with_capacity(checkpoints.len());
    let mut cp = checkpoints.iter().peekable();
    for i in 0..env.n_t {
        let row = env.row(i);
        mass.iter_mut().zip(row).for_each(|(m, w)| *m *= w.exp());
        for x in 0..p {
            next[x] = 0.5 * mass[x] + 0.25 * (mass[(x + p - 1) % p] + mass[(x + 1) % p]);
        }
        std::mem::swap(&mut mass, &mut next);
        let total: f64 = mass.iter().sum();
        log_scale += total.ln();
        mass.iter_mut().for_each(|m| *m /= total);
        if cp.next_if(|&&c| c == i + 1).is_some() {
            out.push(log_scale);
        }
    }
    Ok(out)
}
