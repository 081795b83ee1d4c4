use chaostail_polymer::analysis::{
    check_variance_bounds, empirical_tail_check, fit_chi, variance_vs_t, ExponentFit, PolymerTailCheck,
    VarianceBoundRow, SE_BAND,
};
use chaostail_polymer::covariance::{build_covariance, Covariance};
use chaostail_polymer::gibbs::{g_overlap_batch, GeeBatch, GeeParams};
use chaostail_polymer::run::{run_polymer, RunParams};
use clap::ValueEnum;
use serde::Serialize;
use serde_json::json;

use super::{Outcome, Overrides};
use crate::config::{load, GeeSection, PolymerConfig};
use crate::error::CliError;
use crate::output::{Cell, OutDir};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Action {
    /// Variance bounds, exponent fit, tail envelopes and, if configured, G.
    Run,
    /// Variance bounds and the exponent fit.
    Bounds,
    /// Deviation tail against the large-deviation envelopes.
    Tail,
    /// G estimates against the overlap collapses.
    Gee,
}

impl Action {
    fn needs_run(self) -> bool {
        self != Action::Gee
    }
    fn variance(self) -> bool {
        matches!(self, Action::Run | Action::Bounds)
    }
    fn tail(self) -> bool {
        matches!(self, Action::Run | Action::Tail)
    }
    fn gee(self) -> bool {
        matches!(self, Action::Run | Action::Gee)
    }
}

fn default_a_grid() -> Vec<f64> {
    (1..=20).map(|i| 0.25 * i as f64).collect()
}

struct Plan {
    cov: Covariance,
    run: RunParams,
    gee: Option<(GeeParams, usize)>,
    tail_t: f64,
    a_grid: Vec<f64>,
}

fn gee_params(cfg: &PolymerConfig, section: &GeeSection, seed: u64) -> GeeParams {
    GeeParams {
        t: section.t,
        n_env_prime: section.n_env_prime,
        theta_nodes: section.theta_nodes,
        n_b: section.n_b.unwrap_or(cfg.n_b),
        dt: cfg.dt,
        hamiltonian: cfg.hamiltonian,
        seed,
        env_index: 0,
        budget: cfg.budget,
    }
}

/// Checks shapes and budgets for everything `action` will compute.
fn plan(cfg: &PolymerConfig, ov: &Overrides, action: Action) -> Result<Plan, CliError> {
    let seed = ov.seed.unwrap_or(cfg.seed);
    let cov = build_covariance(cfg.cov.clone())?;
    let run = RunParams {
        t_grid: cfg.t_grid.clone(),
        n_env: cfg.n_env,
        n_b: cfg.n_b,
        dt: cfg.dt,
        hamiltonian: cfg.hamiltonian,
        seed,
        budget: cfg.budget,
    };
    if action.needs_run() {
        run.validate()?;
    }
    let tail_t = cfg.tail.t.unwrap_or_else(|| cfg.t_grid.last().copied().unwrap_or(f64::NAN));
    let a_grid = cfg.tail.a_grid.clone().unwrap_or_else(default_a_grid);
    if action.tail() {
        if !cfg.t_grid.contains(&tail_t) {
            return Err(CliError::Config(format!("tail time {tail_t} is not in t_grid")));
        }
        if a_grid.is_empty() || a_grid.iter().any(|&a| !(a > 0.0)) || a_grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(CliError::Config("a_grid must be positive and strictly increasing".into()));
        }
    }
    let gee = match (action.gee(), &cfg.gee) {
        (true, Some(section)) => {
            if section.n_env < 2 {
                return Err(CliError::Config(format!("gee.n_env must be >= 2, got {}", section.n_env)));
            }
            let params = gee_params(cfg, section, seed);
            let total = params.work()? * section.n_env as u128;
            if total > cfg.budget as u128 {
                return Err(CliError::Budget(format!("G batch needs {total} units, budget is {}", cfg.budget)));
            }
            Some((params, section.n_env))
        }
        (true, None) if action == Action::Gee => {
            return Err(CliError::Config("`polymer gee` needs a `gee` section".into()));
        }
        _ => None,
    };
    Ok(Plan { cov, run, gee, tail_t, a_grid })
}

#[derive(Serialize)]
struct FitCheck {
    fit: Option<ExponentFit>,
    error: Option<String>,
    chi_interval: Option<[f64; 2]>,
    min_r2: f64,
    passed: bool,
}

fn fit_check(points: &[chaostail_polymer::analysis::VariancePoint], cfg: &PolymerConfig) -> FitCheck {
    let acc = &cfg.acceptance;
    let (fit, error) = match fit_chi(points) {
        Ok(f) => (Some(f), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let passed = match (acc.chi_interval, &fit) {
        (None, _) => true,
        (Some([lo, hi]), Some(f)) => f.chi >= lo && f.chi <= hi && f.r2 >= acc.min_r2,
        (Some(_), None) => false,
    };
    FitCheck { fit, error, chi_interval: acc.chi_interval, min_r2: acc.min_r2, passed }
}

/// `G` must sit in `[qm − 4se, q0 + 4se]`; the environment mean must not
/// exceed the mean overlap by more than `4 se` of the paired difference.
fn gee_in_range(g: f64, se: f64, qm: f64, q0: f64) -> bool {
    g >= qm - SE_BAND * se && g <= q0 + SE_BAND * se
}

fn write_variance(out: &mut OutDir, rows: &[VarianceBoundRow]) -> Result<(), CliError> {
    out.csv(
        "variance.csv",
        &["t", "n_env", "var", "var_se", "lower_bound", "upper_bound", "violation"],
        rows.iter().map(|r| {
            vec![
                r.t.into(),
                r.n_env.into(),
                r.var.into(),
                r.var_se.into(),
                r.lower_bound.into(),
                r.upper_bound.into(),
                r.violation.into(),
            ]
        }),
    )
}

fn write_tail(out: &mut OutDir, check: &PolymerTailCheck) -> Result<(), CliError> {
    let r = &check.report;
    let band = r.band.as_ref().ok_or_else(|| CliError::Compute("tail check carries no band".into()))?;
    let env = |name: &str| {
        r.bound_envelopes.get(name).ok_or_else(|| CliError::Compute(format!("tail check lacks envelope {name}")))
    };
    let (upper, lower) = (env("ld_upper")?, env("ld2_lower")?);
    let flagged = |a: f64| r.violations.iter().any(|v| v.bound == "ld_upper" && v.abscissa == a);
    out.csv(
        "tail.csv",
        &["a", "empirical", "dkw_lo", "dkw_hi", "ld_upper", "ld2_lower", "large_a", "violation"],
        r.abscissae.iter().enumerate().map(|(i, &a)| {
            vec![
                a.into(),
                r.tail[i].into(),
                band.lo[i].into(),
                band.hi[i].into(),
                upper[i].into(),
                lower[i].into(),
                check.large_a[i].into(),
                flagged(a).into(),
            ]
        }),
    )
}

fn write_gee(out: &mut OutDir, batch: &GeeBatch, qm: f64, q0: f64) -> Result<(), CliError> {
    out.csv(
        "gee.csv",
        &["env_index", "g", "se", "overlap", "in_range"],
        batch.estimates.iter().map(|e| {
            vec![
                Cell::Int(e.env_index),
                e.g.into(),
                e.se.into(),
                e.overlap.into(),
                gee_in_range(e.g, e.se, qm, q0).into(),
            ]
        }),
    )
}

pub fn run(ov: &Overrides, action: Action) -> Result<Outcome, CliError> {
    let cfg: PolymerConfig = load(ov.config.as_deref())?;
    let plan = plan(&cfg, ov, action)?;
    let (q0, qm) = (plan.cov.q0, plan.cov.qm);
    let kind = cfg.hamiltonian;

    let run = if action.needs_run() { Some(run_polymer(&plan.cov, &plan.run)?) } else { None };
    let mut warnings: Vec<String> = run.as_ref().map(|r| r.warnings.clone()).unwrap_or_default();
    let mut passed = true;
    let mut summary = json!({
        "action": format!("{action:?}").to_lowercase(),
        "cov": cfg.cov, "q0": q0, "qm": qm, "hamiltonian": kind,
        "seed": plan.run.seed, "dt": cfg.dt, "n_b": cfg.n_b,
    });

    let mut variance_rows = None;
    if let (true, Some(run)) = (action.variance(), &run) {
        summary["n_env"] = json!(run.n_env());
        summary["degenerate"] = json!(run.degenerate);
        let points = variance_vs_t(run)?;
        let fit = fit_check(&points, &cfg);
        if let Some(f) = &fit.fit {
            for w in &f.warnings {
                log::warn!("{w}");
                warnings.push(w.clone());
            }
        }
        let rows = check_variance_bounds(&points, q0, qm, kind, cfg.acceptance.slack);
        let violations = rows.iter().filter(|r| r.violation).count();
        passed &= fit.passed && violations == 0;
        summary["fit"] = json!(fit);
        summary["variance_violations"] = json!(violations);
        summary["slack"] = json!(cfg.acceptance.slack);
        variance_rows = Some(rows);
    }

    let mut tail_check = None;
    if let (true, Some(run)) = (action.tail(), &run) {
        let check = empirical_tail_check(run, plan.tail_t, &plan.a_grid)?;
        let upper = check.upper_violations();
        let lower_shortfalls = check.report.violations.len() - upper;
        passed &= upper == 0;
        summary["tail"] = json!({
            "t": plan.tail_t, "upper_violations": upper, "lower_shortfalls": lower_shortfalls,
            "dkw_level": check.report.band.as_ref().map(|b| b.level),
        });
        tail_check = Some(check);
    }

    let mut batch = None;
    if let Some((params, n_env)) = &plan.gee {
        let b = g_overlap_batch(&plan.cov, params, *n_env)?;
        let out_of_range = b.estimates.iter().filter(|e| !gee_in_range(e.g, e.se, qm, q0)).count();
        let mean_ok = b.mean_g <= b.mean_overlap + SE_BAND * b.se_diff;
        passed &= out_of_range == 0 && mean_ok;
        summary["gee"] = json!({
            "t": params.t, "n_env": n_env, "n_env_prime": params.n_env_prime,
            "theta_nodes": params.theta_nodes, "n_b": params.n_b,
            "mean_g": b.mean_g, "se_g": b.se_g, "mean_overlap": b.mean_overlap,
            "se_overlap": b.se_overlap, "se_diff": b.se_diff,
            "out_of_range": out_of_range, "mean_below_overlap": mean_ok,
        });
        batch = Some(b);
    }

    summary["warnings"] = json!(warnings);
    summary["passed"] = json!(passed);

    let mut out = OutDir::new(&ov.out_dir(cfg.output_dir.as_deref()));
    if let Some(rows) = &variance_rows {
        write_variance(&mut out, rows)?;
    }
    if let Some(check) = &tail_check {
        write_tail(&mut out, check)?;
    }
    if let Some(b) = &batch {
        write_gee(&mut out, b, qm, q0)?;
    }
    out.json("summary.json", &summary)?;
    Ok(Outcome { files: out.into_files(), passed, summary })
}
