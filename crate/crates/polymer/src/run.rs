//! Many-environment polymer runs.

use chaostail_core::stats::derive_stream;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::covariance::{Covariance, CovarianceKind};
use crate::environment::sample_environment_with;
use crate::error::{PolymerError, Result};
use crate::hamiltonian::{log_mean_exp, HamiltonianKind, MIN_PATHS};
use crate::paths::Walker;

/// Default cap on `n_env · n_b · n_t` path-steps.
pub const DEFAULT_BUDGET: u64 = 20_000_000_000;

/// Largest `q0` for which the nonlinear variance upper bound is proved.
pub const NONLINEAR_Q0_LIMIT: f64 = 1.0 / 9.0;

fn default_budget() -> u64 {
    DEFAULT_BUDGET
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunParams {
    pub t_grid: Vec<f64>,
    pub n_env: usize,
    pub n_b: usize,
    pub dt: f64,
    pub hamiltonian: HamiltonianKind,
    pub seed: u64,
    #[serde(default = "default_budget")]
    pub budget: u64,
}

impl RunParams {
    /// Step counts for each time in the grid.
    pub fn checkpoints(&self) -> Result<Vec<usize>> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(PolymerError::InvalidArgument(format!("dt must be positive, got {}", self.dt)));
        }
        if self.t_grid.is_empty() || self.t_grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(PolymerError::InvalidArgument("t_grid must be nonempty and strictly increasing".into()));
        }
        self.t_grid
            .iter()
            .map(|&t| {
                let steps = t / self.dt;
                let rounded = steps.round();
                if rounded < 1.0 || (steps - rounded).abs() > 1e-9 * rounded {
                    Err(PolymerError::InvalidArgument(format!("t = {t} is not a positive multiple of dt = {}", self.dt)))
                } else {
                    Ok(rounded as usize)
                }
            })
            .collect()
    }

    pub fn work(&self) -> u128 {
        let n_t = self.t_grid.last().map_or(0.0, |t| (t / self.dt).round()) as u128;
        self.n_env as u128 * self.n_b as u128 * n_t
    }

    pub fn validate(&self) -> Result<Vec<usize>> {
        let cps = self.checkpoints()?;
        if self.n_env < 2 {
            return Err(PolymerError::InvalidArgument(format!("n_env must be >= 2, got {}", self.n_env)));
        }
        if self.n_b < MIN_PATHS {
            return Err(PolymerError::InvalidArgument(format!("n_b must be >= {MIN_PATHS}, got {}", self.n_b)));
        }
        let requested = self.work();
        if requested > self.budget as u128 {
            return Err(PolymerError::BudgetExceeded { requested, budget: self.budget as u128 });
        }
        Ok(cps)
    }
}

/// `log û(t)` for every environment (rows) and time (columns).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolymerRun {
    pub cov: CovarianceKind,
    pub q0: f64,
    pub qm: f64,
    pub params: RunParams,
    pub logu: Vec<Vec<f64>>,
    pub se_log: Vec<Vec<f64>>,
    pub bias: Vec<Vec<f64>>,
    pub warnings: Vec<String>,
    pub degenerate: bool,
}

impl PolymerRun {
    pub fn t_grid(&self) -> &[f64] {
        &self.params.t_grid
    }

    pub fn n_env(&self) -> usize {
        self.logu.len()
    }

    /// `log û` across environments at grid index `k`.
    pub fn column(&self, k: usize) -> Vec<f64> {
        self.logu.iter().map(|row| row[k]).collect()
    }

    pub fn bias_column(&self, k: usize) -> Vec<f64> {
        self.bias.iter().map(|row| row[k]).collect()
    }

    pub fn time_index(&self, t: f64) -> Result<usize> {
        self.t_grid()
            .iter()
            .position(|&s| (s - t).abs() <= 1e-12 * t.abs().max(1.0))
            .ok_or_else(|| PolymerError::InvalidArgument(format!("t = {t} is not on the run's time grid")))
    }
}

struct EnvRow {
    logu: Vec<f64>,
    se: Vec<f64>,
    bias: Vec<f64>,
}

/// One environment: field from `(seed, "environment", e)`, paths from
/// `(seed, "paths", e)`. Each path accumulates its field integral once and
/// records it at every checkpoint, so all times see the same realisation.
fn run_environment(cov: &Covariance, params: &RunParams, cps: &[usize], e: u64) -> Result<EnvRow> {
    let n_t = *cps.last().expect("validated grid is nonempty");
    let env = sample_environment_with(cov, n_t, params.dt, &mut derive_stream(params.seed, "environment", e).rng())?;
    let mut rng = derive_stream(params.seed, "paths", e).rng();
    let mut walker = Walker::new(&mut rng);
    let (p, n_b) = (cov.sites(), params.n_b);
    let field = env.as_slice();
    let mut integrals = vec![0.0; cps.len() * n_b];
    for j in 0..n_b {
        let (mut x, mut pos, mut k) = (0.0, 0usize, 0usize);
        for i in 0..n_t {
            x += field[i * p + pos];
            pos = (pos + walker.step(p)) % p;
            if i + 1 == cps[k] {
                integrals[k * n_b + j] = x;
                k += 1;
            }
        }
    }
    let mut row = EnvRow { logu: Vec::new(), se: Vec::new(), bias: Vec::new() };
    for (k, &t) in params.t_grid.iter().enumerate() {
        let hs: Vec<f64> = integrals[k * n_b..(k + 1) * n_b].iter().map(|&x| params.hamiltonian.energy(t, x)).collect();
        let est = log_mean_exp(&hs)?;
        if !est.log_u_hat.is_finite() {
            return Err(PolymerError::Degenerate(format!("log u is not finite in environment {e} at t = {t}")));
        }
        row.logu.push(est.log_u_hat);
        row.se.push(est.se_log);
        row.bias.push(est.jackknife_bias);
    }
    Ok(row)
}

/// Environments run in parallel; every random draw comes from a stream keyed
/// by `(seed, role, environment index)`, so results do not depend on the
/// thread count.
pub fn run_polymer(cov: &Covariance, params: &RunParams) -> Result<PolymerRun> {
    let cps = params.validate()?;
    if cov.sites() < 2 {
        return Err(PolymerError::InvalidArgument("lattice needs at least 2 sites".into()));
    }
    let mut warnings = Vec::new();
    if params.hamiltonian == HamiltonianKind::NonlinearAbs && cov.q0 >= NONLINEAR_Q0_LIMIT {
        let msg = format!("q0 = {} is not below 1/9; the nonlinear variance upper bound does not apply", cov.q0);
        log::warn!("{msg}");
        warnings.push(msg);
    }
    if params.n_env < 30 {
        warnings.push(format!("n_env = {} is below 30; variance standard errors are unreliable", params.n_env));
    }
    let rows = (0..params.n_env as u64)
        .into_par_iter()
        .map(|e| run_environment(cov, params, &cps, e))
        .collect::<Result<Vec<_>>>()?;
    let mut run = PolymerRun {
        cov: cov.kind.clone(),
        q0: cov.q0,
        qm: cov.qm,
        params: params.clone(),
        logu: Vec::with_capacity(rows.len()),
        se_log: Vec::with_capacity(rows.len()),
        bias: Vec::with_capacity(rows.len()),
        warnings,
        degenerate: false,
    };
    for r in rows {
        run.logu.push(r.logu);
        run.se_log.push(r.se);
        run.bias.push(r.bias);
    }
    run.degenerate = cov.q0 == 0.0
        || (0..cps.len()).any(|k| {
            let col = run.column(k);
            col.iter().all(|&v| v == col[0])
        });
    if run.degenerate {
        run.warnings.push("log u has zero spread across environments at some time".into());
    }
    Ok(run)
}
