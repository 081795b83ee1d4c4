use chaostail_core::gaussian_stein::{
    stein_derivative_left, stein_derivative_right, stein_residual, stein_solution, SteinThreshold,
};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use super::{Outcome, Overrides};
use crate::config::{load, SteinConfig};
use crate::error::CliError;
use crate::output::{Cell, OutDir};

/// Per-threshold maxima over the grid.
#[derive(Debug, Serialize)]
struct SteinSummary {
    z: f64,
    file: String,
    max_abs_residual: f64,
    /// `sup |f'|` over both one-sided derivatives.
    sup_abs_derivative: f64,
    /// `max |f'(x)| (1 + x²)` over grid points `x > max(z, 0)`; at most
    /// one. The bound rests on the Mills-ratio lower bound, which needs
    /// `x > 0`; for `z < x < 0` it fails (e.g. `z = −3`, `x = −2.9`).
    max_decay_ratio: f64,
    passed: bool,
}

/// Bound `|f'| ≤ 1` holds exactly; the allowance covers rounding.
const DERIVATIVE_SLACK: f64 = 1e-12;

pub fn file_name(z: f64) -> String {
    format!("stein_check_z{z}.csv")
}

pub fn run(ov: &Overrides) -> Result<Outcome, CliError> {
    let cfg: SteinConfig = load(ov.config.as_deref())?;
    let tol = ov.tol.unwrap_or(cfg.tol);
    if !(tol > 0.0) {
        return Err(CliError::Config(format!("tol must be positive, got {tol}")));
    }
    if cfg.z_list.is_empty() {
        return Err(CliError::Config("z_list is empty".into()));
    }
    let thresholds = cfg.z_list.iter().map(|&z| SteinThreshold::new(z)).collect::<Result<Vec<_>, _>>()?;
    let grid = cfg.grid.points()?;

    let tables: Vec<Vec<[f64; 5]>> = thresholds
        .par_iter()
        .map(|&thr| {
            grid.iter()
                .map(|&x| {
                    let residual = stein_residual(thr, x).unwrap_or(f64::NAN);
                    let left = if x <= thr.value() { stein_derivative_left(thr, x) } else { f64::NAN };
                    let right = if x >= thr.value() { stein_derivative_right(thr, x) } else { f64::NAN };
                    [x, stein_solution(thr, x), left, right, residual]
                })
                .collect()
        })
        .collect();

    let mut out = OutDir::new(&ov.out_dir(cfg.output_dir.as_deref()));
    let mut summaries = Vec::with_capacity(tables.len());
    for (&z, rows) in cfg.z_list.iter().zip(&tables) {
        let name = file_name(z);
        out.csv(
            &name,
            &["x", "f", "f_left_prime", "f_right_prime", "residual"],
            rows.iter().map(|r| r.iter().map(|&v| Cell::from(v)).collect()),
        )?;
        let max_abs_residual = rows.iter().map(|r| r[4].abs()).filter(|v| v.is_finite()).fold(0.0, f64::max);
        let sup_abs_derivative = rows
            .iter()
            .flat_map(|r| [r[2], r[3]])
            .filter(|v| v.is_finite())
            .map(f64::abs)
            .fold(0.0, f64::max);
        let max_decay_ratio = rows
            .iter()
            .filter(|r| r[0] > z.max(0.0))
            .map(|r| r[3].abs() * (1.0 + r[0] * r[0]))
            .fold(0.0, f64::max);
        let passed = max_abs_residual < tol
            && sup_abs_derivative <= 1.0 + DERIVATIVE_SLACK
            && max_decay_ratio <= 1.0 + DERIVATIVE_SLACK;
        summaries.push(SteinSummary { z, file: name, max_abs_residual, sup_abs_derivative, max_decay_ratio, passed });
    }
    let passed = summaries.iter().all(|s| s.passed);
    let summary = json!({ "tol": tol, "grid": cfg.grid, "thresholds": summaries, "passed": passed });
    out.json("stein_summary.json", &summary)?;
    Ok(Outcome { files: out.into_files(), passed, summary })
}
