//! Variance growth, the fluctuation exponent and the tail envelopes.

use std::f64::consts::{FRAC_PI_2, PI};

use chaostail_core::report::{ConfidenceBand, TailReport};
use chaostail_core::stats::{loglog_fit, sample_variance, DkwBand};
use chaostail_core::tail_engine::K_u;
use serde::{Deserialize, Serialize};

use crate::error::{PolymerError, Result};
use crate::hamiltonian::HamiltonianKind;
use crate::run::{PolymerRun, NONLINEAR_Q0_LIMIT};

/// A time is admitted to the exponent fit only if the mean jackknife bias
/// of `log û` is at most this fraction of the variance.
pub const BIAS_GATE: f64 = 0.1;
/// Multiplier on the nonlinear upper bound's leading constant.
pub const DEFAULT_SLACK: f64 = 2.0;
/// Prefactor of the lower tail envelope.
pub const LD2_PREFACTOR: f64 = 0.9;
/// `a / sqrt(qm)` from which the lower envelope is considered asymptotic.
pub const LARGE_A_THRESHOLD: f64 = 3.0;
pub const DKW_LEVEL: f64 = 0.99;
/// Band width, in standard errors, for the variance bound checks.
pub const SE_BAND: f64 = 4.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariancePoint {
    pub t: f64,
    pub n_env: usize,
    pub var: f64,
    pub var_se: f64,
    pub mean_bias: f64,
}

pub fn variance_vs_t(run: &PolymerRun) -> Result<Vec<VariancePoint>> {
    let n_env = run.n_env();
    if n_env < 2 {
        return Err(PolymerError::InvalidArgument(format!("variance needs n_env >= 2, got {n_env}")));
    }
    if n_env < 30 {
        log::warn!("n_env = {n_env} < 30: jackknife errors are unreliable");
    }
    run.t_grid()
        .iter()
        .enumerate()
        .map(|(k, &t)| {
            let (var, var_se) = sample_variance(&run.column(k))?;
            let bias = run.bias_column(k);
            let mean_bias = bias.iter().sum::<f64>() / bias.len() as f64;
            Ok(VariancePoint { t, n_env, var, var_se, mean_bias })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExponentFit {
    pub chi: f64,
    pub stderr: f64,
    pub r2: f64,
    /// Points that passed the bias gate and entered the fit.
    pub per_t: Vec<VariancePoint>,
    /// Times rejected by the bias gate.
    pub rejected_t: Vec<f64>,
    pub warnings: Vec<String>,
}

/// Weighted least squares of `ln var` on `ln t`, `chi = slope / 2`.
///
/// Weights are `(var/var_se)²`, the inverse variance of `ln var` to first
/// order; if any standard error is zero or undefined all weights are equal.
pub fn fit_chi(points: &[VariancePoint]) -> Result<ExponentFit> {
    let (kept, rejected): (Vec<VariancePoint>, Vec<VariancePoint>) =
        points.iter().partition(|p| p.mean_bias.abs() <= BIAS_GATE * p.var);
    if kept.len() < 3 {
        return Err(PolymerError::InvalidArgument(format!(
            "exponent fit needs >= 3 times passing the bias gate, got {} of {}",
            kept.len(),
            points.len()
        )));
    }
    let mut warnings = Vec::new();
    let (lo, hi) = (kept[0].t, kept[kept.len() - 1].t);
    if hi < 10.0 * lo {
        warnings.push(format!("fitted times span {lo}..{hi}, less than one decade"));
    }
    let ts: Vec<f64> = kept.iter().map(|p| p.t).collect();
    let vs: Vec<f64> = kept.iter().map(|p| p.var).collect();
    let weights: Vec<f64> = if kept.iter().all(|p| p.var_se > 0.0 && p.var_se.is_finite()) {
        kept.iter().map(|p| (p.var / p.var_se).powi(2)).collect()
    } else {
        vec![1.0; kept.len()]
    };
    let fit = loglog_fit(&ts, &vs, &weights)?;
    Ok(ExponentFit {
        chi: fit.slope / 2.0,
        stderr: fit.stderr / 2.0,
        r2: fit.r2,
        per_t: kept,
        rejected_t: rejected.iter().map(|p| p.t).collect(),
        warnings,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VarianceBoundRow {
    pub t: f64,
    pub n_env: usize,
    pub var: f64,
    pub var_se: f64,
    /// NaN where the lower bound's hypothesis `qm > 0` fails.
    pub lower_bound: f64,
    /// NaN where the nonlinear upper bound's hypothesis `q0 < 1/9` fails.
    pub upper_bound: f64,
    pub violation: bool,
}

/// Variance slopes `(lower, upper)` per unit time.
///
/// Linear: `K_u qm` and `(π/2)² q0`. Nonlinear: `K_u qm` and
/// `slack · 2⁸ (π/2)² q0³`.
pub fn variance_bound_slopes(q0: f64, qm: f64, kind: HamiltonianKind, slack: f64) -> (f64, f64) {
    let lower = if qm > 0.0 { K_u() * qm } else { f64::NAN };
    let upper = match kind {
        HamiltonianKind::Linear => FRAC_PI_2.powi(2) * q0,
        HamiltonianKind::NonlinearAbs if q0 < NONLINEAR_Q0_LIMIT => slack * 256.0 * FRAC_PI_2.powi(2) * q0.powi(3),
        HamiltonianKind::NonlinearAbs => f64::NAN,
    };
    (lower, upper)
}

/// Flags a time when `var + 4se < lower` or `var − 4se > upper`.
pub fn check_variance_bounds(
    points: &[VariancePoint],
    q0: f64,
    qm: f64,
    kind: HamiltonianKind,
    slack: f64,
) -> Vec<VarianceBoundRow> {
    let (lo_slope, hi_slope) = variance_bound_slopes(q0, qm, kind, slack);
    points
        .iter()
        .map(|p| {
            let (lower_bound, upper_bound) = (lo_slope * p.t, hi_slope * p.t);
            let band = SE_BAND * if p.var_se.is_finite() { p.var_se } else { 0.0 };
            let violation = p.var + band < lower_bound || p.var - band > upper_bound;
            VarianceBoundRow { t: p.t, n_env: p.n_env, var: p.var, var_se: p.var_se, lower_bound, upper_bound, violation }
        })
        .collect()
}

/// `1 ∧ 2 sqrt(q0) / (a sqrt(2π)) · exp(−a²/(2 q0))`.
pub fn ld_upper(a: f64, q0: f64) -> f64 {
    (2.0 * q0.sqrt() / (a * (2.0 * PI).sqrt()) * (-a * a / (2.0 * q0)).exp()).min(1.0)
}

/// `K sqrt(qm) / a · exp(−a²/(2 qm))` with `K = 0.9`.
pub fn ld2_lower(a: f64, qm: f64) -> f64 {
    if qm > 0.0 {
        LD2_PREFACTOR * qm.sqrt() / a * (-a * a / (2.0 * qm)).exp()
    } else {
        f64::NAN
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolymerTailCheck {
    pub t: f64,
    pub n_env: usize,
    /// Abscissae are `a`; the tail is `P[|log û − mean| > a sqrt(t)]`.
    pub report: TailReport,
    /// `a / sqrt(qm) ≥ 3`, where the lower envelope is asymptotic.
    pub large_a: Vec<bool>,
}

impl PolymerTailCheck {
    pub fn upper_violations(&self) -> usize {
        self.report.violations.iter().filter(|v| v.bound == "ld_upper").count()
    }
}

/// Empirical two-sided deviation tail at time `t` against both envelopes,
/// with a DKW band at level 0.99. An upper violation is a grid point whose
/// band lies wholly above `ld_upper`; a lower shortfall (band wholly below
/// `ld2_lower` in the large-`a` regime) is recorded under `ld2_lower` for
/// reporting only.
pub fn empirical_tail_check(run: &PolymerRun, t: f64, a_grid: &[f64]) -> Result<PolymerTailCheck> {
    if a_grid.is_empty() || a_grid.iter().any(|&a| !(a > 0.0)) {
        return Err(PolymerError::InvalidArgument("a_grid must hold positive values".into()));
    }
    let k = run.time_index(t)?;
    let col = run.column(k);
    let n = col.len();
    let mean = col.iter().sum::<f64>() / n as f64;
    let scale = t.sqrt();
    let tail: Vec<f64> = a_grid
        .iter()
        .map(|&a| col.iter().filter(|&&v| (v - mean).abs() > a * scale).count() as f64 / n as f64)
        .collect();
    let mut report = TailReport::new(a_grid.to_vec(), tail.clone())?;
    let dkw = DkwBand::new(DKW_LEVEL, n)?;
    let (lo, hi): (Vec<f64>, Vec<f64>) = tail.iter().map(|&p| dkw.around(p)).unzip();
    let upper: Vec<f64> = a_grid.iter().map(|&a| ld_upper(a, run.q0)).collect();
    let lower: Vec<f64> = a_grid.iter().map(|&a| ld2_lower(a, run.qm)).collect();
    let large_a: Vec<bool> = a_grid.iter().map(|&a| run.qm > 0.0 && a / run.qm.sqrt() >= LARGE_A_THRESHOLD).collect();
    for (i, &a) in a_grid.iter().enumerate() {
        if lo[i] > upper[i] {
            report.flag("ld_upper", a);
        }
        if large_a[i] && hi[i] < lower[i] {
            report.flag("ld2_lower", a);
        }
    }
    report.add_envelope("ld_upper", upper)?;
    report.add_envelope("ld2_lower", lower)?;
    report.set_band(ConfidenceBand { level: DKW_LEVEL, lo, hi })?;
    Ok(PolymerTailCheck { t, n_env: n, report, large_a })
}
