//! Gibbs-weighted pair averages: the replica overlap and the Mehler
//! quantity `G = ⟨DY, −DL⁻¹Y⟩` of the normalised log partition function.
//!
//! Both are ratios of pair sums `Σ_{j≠l} a_j ā_l I(j, l)` over one path
//! sample, with `I(j, l) = Σ_s Q(b_j(s), b_l(s))`. Self-pairs are dropped so
//! that `b` and `b̄` behave as independent copies; the matching normaliser
//! is `Σ_{j≠l} w_j w̄_l = 1 − Σ_j w_j w̄_j`.

use chaostail_core::quadrature::split_theta_rule;
use chaostail_core::stats::{derive_stream, mean_se};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::covariance::Covariance;
use crate::environment::{sample_environment_with, EnvironmentSlab};
use crate::error::{PolymerError, Result};
use crate::hamiltonian::{path_integral, HamiltonianKind};
use crate::paths::{sample_paths_with, PathEnsemble};
use crate::run::DEFAULT_BUDGET;

/// Below this normaliser the pair sum is evaluated explicitly.
const NORMALISER_FLOOR: f64 = 1e-6;
/// Paths lighter than this fraction of the heaviest are ignored in the
/// explicit pair sum.
const SIGNIFICANT_WEIGHT: f64 = 1e-12;

fn gibbs_weights(hs: &[f64]) -> Vec<f64> {
    let max = hs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut w: Vec<f64> = hs.iter().map(|h| (h - max).exp()).collect();
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= total);
    w
}

fn pair_integral(cov: &Covariance, paths: &PathEnsemble, j: usize, l: usize) -> f64 {
    paths.path(j).iter().zip(paths.path(l)).map(|(&x, &y)| cov.at(x as usize, y as usize)).sum()
}

/// Per-path sums against a fixed weighting `a` of the first copy:
/// `r_l = Σ_j a_j I(j, l)` and `c_l = I(l, l)`, computed through the
/// weighted occupation `ρ_s(x) = Σ_j a_j 1{b_j(s) = x}` in `O(n_b n_t + n_t p²)`.
struct CrossTerms {
    r: Vec<f64>,
    c: Vec<f64>,
}

impl CrossTerms {
    fn new(cov: &Covariance, paths: &PathEnsemble, a: &[f64]) -> Self {
        let (p, n_t) = (cov.sites(), paths.n_t);
        let mut rho = vec![0.0; n_t * p];
        for (path, &aj) in paths.paths().zip(a) {
            for (s, &x) in path.iter().enumerate() {
                rho[s * p + x as usize] += aj;
            }
        }
        let q = cov.matrix();
        let mut q_rho = vec![0.0; n_t * p];
        for s in 0..n_t {
            let occ = &rho[s * p..(s + 1) * p];
            for x in 0..p {
                q_rho[s * p + x] = q[x * p..(x + 1) * p].iter().zip(occ).map(|(u, v)| u * v).sum();
            }
        }
        let (r, c) = paths
            .paths()
            .map(|path| {
                path.iter().enumerate().fold((0.0, 0.0), |(r, c), (s, &x)| {
                    let x = x as usize;
                    (r + q_rho[s * p + x], c + cov.at(x, x))
                })
            })
            .unzip();
        Self { r, c }
    }

    /// `Σ_{j≠l} a_j ā_l I(j, l) / Σ_{j≠l} w_j w̄_l`.
    fn pair_mean(&self, cov: &Covariance, paths: &PathEnsemble, first: &Weighted, second: &Weighted) -> f64 {
        let overlap_self: f64 = first.w.iter().zip(&second.w).map(|(u, v)| u * v).sum();
        let normaliser = 1.0 - overlap_self;
        if normaliser >= NORMALISER_FLOOR {
            let num: f64 = (0..self.r.len()).map(|l| second.a[l] * (self.r[l] - first.a[l] * self.c[l])).sum();
            return num / normaliser;
        }
        let heavy = |w: &[f64]| {
            let top = w.iter().copied().fold(0.0, f64::max);
            (0..w.len()).filter(|&j| w[j] > SIGNIFICANT_WEIGHT * top).collect::<Vec<_>>()
        };
        let (set, set_bar) = (heavy(&first.w), heavy(&second.w));
        let (mut num, mut den) = (0.0, 0.0);
        for &j in &set {
            for &l in set_bar.iter().filter(|&&l| l != j) {
                num += first.a[j] * second.a[l] * pair_integral(cov, paths, j, l);
                den += first.w[j] * second.w[l];
            }
        }
        if den > 0.0 {
            num / den
        } else {
            // A single path carries both measures; fall back to its self-pair.
            let j = set[0];
            first.a[j] * second.a[j] * self.c[j] / (first.w[j] * second.w[j])
        }
    }
}

/// Gibbs weights `w` and amplitudes `a = w · (path factor)`.
struct Weighted {
    w: Vec<f64>,
    a: Vec<f64>,
}

impl Weighted {
    fn from_integrals(xs: &[f64], t: f64, kind: HamiltonianKind) -> Self {
        let hs: Vec<f64> = xs.iter().map(|&x| kind.energy(t, x)).collect();
        let w = gibbs_weights(&hs);
        let a = w.iter().zip(xs).map(|(w, &x)| w * kind.weight_factor(t, x)).collect();
        Self { w, a }
    }
}

fn check_shapes(env: &EnvironmentSlab, paths: &PathEnsemble, cov: &Covariance) -> Result<()> {
    if paths.n_b < 2 || paths.n_t != env.n_t || paths.p != env.p || env.p != cov.sites() {
        return Err(PolymerError::InvalidArgument(format!(
            "shapes disagree or n_b < 2: paths {}x{} on {} sites, slab {}x{}, covariance on {} sites",
            paths.n_b,
            paths.n_t,
            paths.p,
            env.n_t,
            env.p,
            cov.sites()
        )));
    }
    Ok(())
}

/// `(1/t) Ẽ_{b,b̄}[∫₀ᵗ Q(b_s, b̄_s) ds]` under the polymer measure, with the
/// `(1 + |X|/t)` factors for the nonlinear energy. For the linear energy
/// the value is a convex combination of entries of `Q` and is clamped to
/// `[qm, q0]` against rounding.
pub fn replica_overlap(cov: &Covariance, env: &EnvironmentSlab, paths: &PathEnsemble, kind: HamiltonianKind) -> Result<f64> {
    check_shapes(env, paths, cov)?;
    let t = env.time();
    let xs: Vec<f64> = paths.paths().map(|b| path_integral(env, b)).collect();
    let weighted = Weighted::from_integrals(&xs, t, kind);
    let terms = CrossTerms::new(cov, paths, &weighted.a);
    let v = env.dt * terms.pair_mean(cov, paths, &weighted, &weighted) / t;
    Ok(match kind {
        HamiltonianKind::Linear => v.clamp(cov.qm, cov.q0),
        HamiltonianKind::NonlinearAbs => v,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeeParams {
    pub t: f64,
    /// Independent copies `W′` used for the `E′` average.
    pub n_env_prime: usize,
    /// Gauss–Legendre nodes on each half of `[−π/2, π/2]`.
    pub theta_nodes: usize,
    pub n_b: usize,
    pub dt: f64,
    pub hamiltonian: HamiltonianKind,
    pub seed: u64,
    #[serde(default)]
    pub env_index: u64,
    #[serde(default = "default_budget")]
    pub budget: u64,
}

fn default_budget() -> u64 {
    DEFAULT_BUDGET
}

impl GeeParams {
    fn steps(&self) -> Result<usize> {
        let steps = self.t / self.dt;
        let rounded = steps.round();
        if !(self.dt > 0.0) || rounded < 1.0 || (steps - rounded).abs() > 1e-9 * rounded {
            return Err(PolymerError::InvalidArgument(format!("t = {} is not a positive multiple of dt = {}", self.t, self.dt)));
        }
        Ok(rounded as usize)
    }

    /// Path-steps plus one pass over the paths per quadrature node and copy.
    pub fn work(&self) -> Result<u128> {
        let n_t = self.steps()? as u128;
        let nodes = 2 * self.theta_nodes as u128;
        Ok(self.n_b as u128 * (n_t * (1 + self.n_env_prime as u128) + nodes * self.n_env_prime as u128))
    }

    fn validate(&self) -> Result<usize> {
        if self.theta_nodes < 16 || self.n_env_prime < 8 || self.n_b < 2 {
            return Err(PolymerError::InvalidArgument(format!(
                "G needs theta_nodes >= 16, n_env_prime >= 8, n_b >= 2 (got {}, {}, {})",
                self.theta_nodes, self.n_env_prime, self.n_b
            )));
        }
        let n_t = self.steps()?;
        let requested = self.work()?;
        if requested > self.budget as u128 {
            return Err(PolymerError::BudgetExceeded { requested, budget: self.budget as u128 });
        }
        Ok(n_t)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeeEstimate {
    pub env_index: u64,
    /// Mean over the `W′` copies.
    pub g: f64,
    /// Standard error across the `W′` copies.
    pub se: f64,
    pub overlap: f64,
    pub per_copy: Vec<f64>,
}

/// `G` for environment `env_index` of a run with the same seed: the field
/// is the first `t/dt` rows of that run's environment. Paths come from
/// `(seed, "gibbs-paths", env_index)` and copy `k` of `W′` from
/// `(seed, "env-prime-<env_index>", k)`.
///
/// For each copy the `θ` integral `(1/2t) ∫ |sin θ| V(θ) dθ` is a split
/// Gauss–Legendre sum, where `V(θ)` is the pair mean of `∫ Q ds` under the
/// Gibbs weights of `W` and of `cos θ W + sin θ W′`, each self-normalised.
/// Since the field integral is linear in the field,
/// `X^{R_θ W} = cos θ X^W + sin θ X^{W′}` and no slab is rebuilt per node.
pub fn estimate_g_polymer(cov: &Covariance, params: &GeeParams) -> Result<GeeEstimate> {
    let n_t = params.validate()?;
    let (seed, e) = (params.seed, params.env_index);
    let env = sample_environment_with(cov, n_t, params.dt, &mut derive_stream(seed, "environment", e).rng())?;
    let paths = sample_paths_with(cov.sites(), n_t, params.n_b, &mut derive_stream(seed, "gibbs-paths", e).rng())?;
    let t = env.time();
    let kind = params.hamiltonian;
    let xs: Vec<f64> = paths.paths().map(|b| path_integral(&env, b)).collect();
    let base = Weighted::from_integrals(&xs, t, kind);
    let terms = CrossTerms::new(cov, &paths, &base.a);
    let overlap_raw = env.dt * terms.pair_mean(cov, &paths, &base, &base) / t;
    let overlap = match kind {
        HamiltonianKind::Linear => overlap_raw.clamp(cov.qm, cov.q0),
        HamiltonianKind::NonlinearAbs => overlap_raw,
    };
    let rule = split_theta_rule(params.theta_nodes);
    let label = format!("env-prime-{e}");
    let per_copy = (0..params.n_env_prime as u64)
        .map(|k| {
            let prime = sample_environment_with(cov, n_t, params.dt, &mut derive_stream(seed, &label, k).rng())?;
            let xs_prime: Vec<f64> = paths.paths().map(|b| path_integral(&prime, b)).collect();
            let integral: f64 = rule
                .iter()
                .map(|&(theta, weight)| {
                    let (s, c) = theta.sin_cos();
                    let rotated: Vec<f64> = xs.iter().zip(&xs_prime).map(|(x, y)| c * x + s * y).collect();
                    let bar = Weighted::from_integrals(&rotated, t, kind);
                    weight * s * env.dt * terms.pair_mean(cov, &paths, &base, &bar)
                })
                .sum();
            Ok(integral / (2.0 * t))
        })
        .collect::<Result<Vec<f64>>>()?;
    let (g, se) = mean_se(&per_copy);
    Ok(GeeEstimate { env_index: e, g, se, overlap, per_copy })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeeBatch {
    pub estimates: Vec<GeeEstimate>,
    pub mean_g: f64,
    pub se_g: f64,
    pub mean_overlap: f64,
    pub se_overlap: f64,
    /// Standard error of the paired difference `G − overlap`.
    pub se_diff: f64,
}

/// [`estimate_g_polymer`] on environments `0..n_env`, in parallel.
pub fn g_overlap_batch(cov: &Covariance, params: &GeeParams, n_env: usize) -> Result<GeeBatch> {
    if n_env < 2 {
        return Err(PolymerError::InvalidArgument(format!("batch needs n_env >= 2, got {n_env}")));
    }
    let total = params.work()? * n_env as u128;
    if total > params.budget as u128 {
        return Err(PolymerError::BudgetExceeded { requested: total, budget: params.budget as u128 });
    }
    let estimates = (0..n_env as u64)
        .into_par_iter()
        .map(|e| estimate_g_polymer(cov, &GeeParams { env_index: e, ..params.clone() }))
        .collect::<Result<Vec<_>>>()?;
    let gs: Vec<f64> = estimates.iter().map(|s| s.g).collect();
    let ovs: Vec<f64> = estimates.iter().map(|s| s.overlap).collect();
    let diffs: Vec<f64> = gs.iter().zip(&ovs).map(|(g, o)| g - o).collect();
    let (mean_g, se_g) = mean_se(&gs);
    let (mean_overlap, se_overlap) = mean_se(&ovs);
    let (_, se_diff) = mean_se(&diffs);
    Ok(GeeBatch { estimates, mean_g, se_g, mean_overlap, se_overlap, se_diff })
}
