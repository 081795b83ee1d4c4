use chaostail_core::report::TailReport;
use chaostail_core::special::normal_tail;
use chaostail_core::tail_engine::{
    density_from_g, lower_bound_menu, stein_lower_bound, tail_from_g, thm12_envelopes, Direction,
};
use rayon::prelude::*;
use serde_json::json;

use super::{Outcome, Overrides};
use crate::config::{load, TailConfig};
use crate::error::CliError;
use crate::output::OutDir;

/// Relative allowance before a menu bound counts as violated.
const MENU_SLACK: f64 = 1e-9;

fn positive_only(x: f64, f: impl FnOnce() -> Result<f64, CliError>) -> Result<f64, CliError> {
    if x > 0.0 {
        f()
    } else {
        Ok(f64::NAN)
    }
}

/// Tail and density rebuilt from `g`, plus every closed-form envelope that
/// the configuration enables. Envelopes other than the menu bound are
/// reference curves: their hypotheses concern `G`, which a `g` alone does
/// not determine, so only menu bounds raise violations.
pub fn build_report(cfg: &TailConfig, tol: f64) -> Result<TailReport, CliError> {
    cfg.g.validate()?;
    if !(cfg.mean_abs > 0.0 && cfg.mean_abs.is_finite()) {
        return Err(CliError::Config(format!("mean_abs must be positive, got {}", cfg.mean_abs)));
    }
    if !(tol > 0.0) {
        return Err(CliError::Config(format!("tol must be positive, got {tol}")));
    }
    if cfg.x_grid.is_empty() || cfg.x_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(CliError::Config("x_grid must be nonempty and strictly increasing".into()));
    }
    if let Some(left) = cfg.g.support_left {
        if cfg.x_grid[0] <= left {
            return Err(CliError::Config(format!("x_grid starts at or below the support end {left}")));
        }
    }

    let xs = &cfg.x_grid;
    let columns: Vec<(f64, f64)> = xs
        .par_iter()
        .map(|&x| Ok((tail_from_g(&cfg.g, cfg.mean_abs, x, tol)?, density_from_g(&cfg.g, cfg.mean_abs, x, tol)?)))
        .collect::<Result<_, chaostail_core::Error>>()?;
    let (tail, density): (Vec<f64>, Vec<f64>) = columns.into_iter().unzip();
    let mut report = TailReport::new(xs.clone(), tail.clone())?.with_density(density)?;

    report.add_envelope("normal_tail", xs.iter().map(|&x| normal_tail(x)).collect())?;
    let envs = xs
        .iter()
        .map(|&x| if x > 0.0 { thm12_envelopes(x, cfg.moment_order).map(Some) } else { Ok(None) })
        .collect::<Result<Vec<_>, _>>()?;
    report.add_envelope("upper_g", envs.iter().map(|e| e.map_or(f64::NAN, |e| e.upper_g)).collect())?;
    report.add_envelope("upper_dx", envs.iter().map(|e| e.map_or(f64::NAN, |e| e.upper_dx)).collect())?;
    if cfg.moment_order.is_some() {
        let floor = xs
            .iter()
            .zip(&envs)
            .map(|(&x, e)| e.and_then(|e| e.supergauss_ratio).map_or(f64::NAN, |r| r * normal_tail(x)))
            .collect();
        report.add_envelope("supergauss_floor", floor)?;
    }
    if let Some(c) = cfg.c_prime {
        let vals = xs.iter().map(|&x| positive_only(x, || Ok(stein_lower_bound(x, c)?))).collect::<Result<_, _>>()?;
        report.add_envelope("stein_lower", vals)?;
    }
    if let Some(q) = &cfg.menu {
        let name = if q.reversed { "menu_upper" } else { "menu_lower" };
        let bounds = xs
            .iter()
            .map(|&x| if x > q.z0 { lower_bound_menu(&cfg.g, cfg.mean_abs, x, q, tol).map(Some) } else { Ok(None) })
            .collect::<Result<Vec<_>, _>>()?;
        for ((&x, &s), b) in xs.iter().zip(&tail).zip(&bounds) {
            let broken = match b {
                Some(b) if b.direction == Direction::Lower => s < b.value * (1.0 - MENU_SLACK),
                Some(b) => s > b.value * (1.0 + MENU_SLACK),
                None => false,
            };
            if broken {
                report.flag(name, x);
            }
        }
        let vals = bounds.iter().map(|b| b.map_or(f64::NAN, |b| b.value)).collect();
        report.add_envelope(name, vals)?;
    }
    Ok(report)
}

pub fn run(ov: &Overrides) -> Result<Outcome, CliError> {
    let cfg: TailConfig = load(ov.config.as_deref())?;
    let tol = ov.tol.unwrap_or(cfg.tol);
    let report = build_report(&cfg, tol)?;
    let mut out = OutDir::new(&ov.out_dir(cfg.output_dir.as_deref()));
    out.with_writer("tail_report.csv", |w| Ok(report.write_csv(w)?))?;
    out.with_writer("tail_report.json", |w| {
        report.write_json(&mut *w)?;
        Ok(std::io::Write::write_all(w, b"\n")?)
    })?;
    let passed = report.violations.is_empty();
    let summary = json!({ "points": report.abscissae.len(), "violations": report.violations, "passed": passed });
    Ok(Outcome { files: out.into_files(), passed, summary })
}
