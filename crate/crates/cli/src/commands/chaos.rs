use chaostail_core::chaos::verify::{
    estimate_g, exact_gamma_identity, mehler_minus_dl_inv, mehler_weight_moment, subgaussian_check, verify_lemkey,
    verify_lemsko, TestFunction, VerificationRecord,
};
use chaostail_core::chaos::ChaosRV;
use clap::ValueEnum;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use super::{Outcome, Overrides};
use crate::config::{
    load, FunctionName, GeeConfig, LemkeyConfig, LemskoConfig, MehlerConfig, SubgaussConfig, TailConfig,
};
use crate::error::CliError;
use crate::output::OutDir;

/// Agreement is `|lhs − rhs| ≤ SE_BAND · se`.
const SE_BAND: f64 = 4.0;
/// Coefficient arithmetic is exact up to rounding.
const EXACT_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Suite {
    /// Integration by parts `E[X h(X)] = E[h'(X) G]`.
    Lemkey,
    /// `E[I_n(f) Y] = E[<D I_n(f), DY>]/n`.
    Lemsko,
    /// Rotation formula for `-DL⁻¹X` and its θ-quadrature.
    Mehler,
    /// Empirical deviation tail against the sub-Gaussian envelope.
    Subgauss,
    /// Binned `g` estimate and a `tail` config built from it.
    Gee,
}

fn exact_close(a: f64, b: f64) -> bool {
    (a - b).abs() <= EXACT_TOL * a.abs().max(b.abs()).max(1.0)
}

fn test_function(f: FunctionName) -> TestFunction {
    match f {
        FunctionName::Identity => TestFunction::Identity,
        FunctionName::Tanh => TestFunction::Tanh,
    }
}

fn check_rvs(rvs: &[ChaosRV]) -> Result<(), CliError> {
    if rvs.is_empty() {
        return Err(CliError::Config("no random variables given".into()));
    }
    if let Some(i) = rvs.iter().position(|rv| !rv.is_centered()) {
        return Err(CliError::Config(format!("random variable {i} is not centered")));
    }
    Ok(())
}

pub fn run(ov: &Overrides, suite: Suite) -> Result<Outcome, CliError> {
    let path = ov.config.as_deref();
    match suite {
        Suite::Lemkey => lemkey(ov, load(path)?),
        Suite::Lemsko => lemsko(ov, load(path)?),
        Suite::Mehler => mehler(ov, load(path)?),
        Suite::Subgauss => subgauss(ov, load(path)?),
        Suite::Gee => gee(ov, load(path)?),
    }
}

#[derive(Serialize)]
struct LemkeyRow {
    rv_index: usize,
    record: VerificationRecord,
    passed: bool,
}

#[derive(Serialize)]
struct ExactRow {
    rv_index: usize,
    mean_gamma: f64,
    variance: f64,
    passed: bool,
}

fn lemkey(ov: &Overrides, cfg: LemkeyConfig) -> Result<Outcome, CliError> {
    check_rvs(&cfg.rvs)?;
    if cfg.functions.is_empty() {
        return Err(CliError::Config("no test functions given".into()));
    }
    let seed = ov.seed.unwrap_or(cfg.seed);
    let jobs: Vec<(usize, FunctionName)> =
        (0..cfg.rvs.len()).flat_map(|i| cfg.functions.iter().map(move |&f| (i, f))).collect();
    let records = jobs
        .par_iter()
        .map(|&(i, f)| verify_lemkey(&cfg.rvs[i], test_function(f), cfg.n, seed))
        .collect::<Result<Vec<_>, _>>()?;
    let rows: Vec<LemkeyRow> = jobs
        .iter()
        .zip(records)
        .map(|(&(rv_index, _), record)| LemkeyRow { rv_index, passed: record.agrees(SE_BAND), record })
        .collect();
    let exact = cfg
        .rvs
        .iter()
        .enumerate()
        .map(|(rv_index, rv)| {
            let (mean_gamma, variance) = exact_gamma_identity(rv)?;
            Ok(ExactRow { rv_index, mean_gamma, variance, passed: exact_close(mean_gamma, variance) })
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let passed = rows.iter().all(|r| r.passed) && exact.iter().all(|r| r.passed);
    let summary = json!({ "suite": "lemkey", "n": cfg.n, "seed": seed, "records": rows, "exact": exact, "passed": passed });
    let mut out = OutDir::new(&ov.out_dir(cfg.output_dir.as_deref()));
    out.json("chaos_lemkey.json", &summary)?;
    Ok(Outcome { files: out.into_files(), passed, summary })
}

fn lemsko(ov: &Overrides, cfg: LemskoConfig) -> Result<Outcome, CliError> {
    if cfg.pairs.is_empty() {
        return Err(CliError::Config("no pairs given".into()));
    }
    let seed = ov.seed.unwrap_or(cfg.seed);
    let reports =
        cfg.pairs.par_iter().map(|p| verify_lemsko(&p.f, &p.y, cfg.n, seed)).collect::<Result<Vec<_>, _>>()?;
    let rows: Vec<_> = reports
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let passed = r.mc.agrees(SE_BAND) && exact_close(r.exact_lhs, r.exact_rhs);
            json!({ "pair_index": i, "report": r, "passed": passed })
        })
        .collect();
    let passed = rows.iter().all(|r| r["passed"] == true);
    let summary = json!({ "suite": "lemsko", "n": cfg.n, "seed": seed, "records": rows, "passed": passed });
    let mut out = OutDir::new(&ov.out_dir(cfg.output_dir.as_deref()));
    out.json("chaos_lemsko.json", &summary)?;
    Ok(Outcome { files: out.into_files(), passed, summary })
}

/// Largest moment order checked against `1/(n+1)`.
const MAX_MOMENT: u32 = 6;

fn mehler(ov: &Overrides, cfg: MehlerConfig) -> Result<Outcome, CliError> {
    check_rvs(&cfg.rvs)?;
    if cfg.points.is_empty() {
        return Err(CliError::Config("no evaluation points given".into()));
    }
    if let Some(p) = cfg.points.iter().find(|p| p.len() != cfg.rvs[0].dim()) {
        return Err(CliError::Config(format!("point {p:?} does not match dimension {}", cfg.rvs[0].dim())));
    }
    let seed = ov.seed.unwrap_or(cfg.seed);
    let quad_tol = ov.tol.unwrap_or(cfg.quad_tol);
    let jobs: Vec<(usize, usize)> =
        (0..cfg.rvs.len()).flat_map(|i| (0..cfg.points.len()).map(move |j| (i, j))).collect();
    let estimates = jobs
        .par_iter()
        .map(|&(i, j)| mehler_minus_dl_inv(&cfg.rvs[i], &cfg.points[j], cfg.theta_nodes, cfg.n, seed))
        .collect::<Result<Vec<_>, _>>()?;
    let rows: Vec<_> = jobs
        .iter()
        .zip(&estimates)
        .map(|(&(i, _), e)| {
            json!({ "rv_index": i, "chaos_order": cfg.rvs[i].chaos_order(), "estimate": e, "passed": e.agrees(SE_BAND, quad_tol) })
        })
        .collect();
    let moments: Vec<_> = (0..=MAX_MOMENT)
        .map(|n| {
            let value = mehler_weight_moment(n, cfg.theta_nodes);
            let exact = 1.0 / (n as f64 + 1.0);
            json!({ "n": n, "quadrature": value, "exact": exact, "passed": (value - exact).abs() <= EXACT_TOL })
        })
        .collect();
    let passed = rows.iter().chain(&moments).all(|r| r["passed"] == true);
    let summary = json!({
        "suite": "mehler", "n": cfg.n, "seed": seed, "quad_tol": quad_tol,
        "records": rows, "weight_moments": moments, "passed": passed
    });
    let mut out = OutDir::new(&ov.out_dir(cfg.output_dir.as_deref()));
    out.json("chaos_mehler.json", &summary)?;
    Ok(Outcome { files: out.into_files(), passed, summary })
}

fn subgauss(ov: &Overrides, cfg: SubgaussConfig) -> Result<Outcome, CliError> {
    check_rvs(std::slice::from_ref(&cfg.rv))?;
    let seed = ov.seed.unwrap_or(cfg.seed);
    let (sigma, report) = subgaussian_check(&cfg.rv, &cfg.u_grid, cfg.n, seed)?;
    let passed = report.violations.is_empty();
    let summary = json!({ "suite": "subgauss", "n": cfg.n, "seed": seed, "sigma": sigma, "violations": report.violations, "passed": passed });
    let mut out = OutDir::new(&ov.out_dir(cfg.output_dir.as_deref()));
    out.with_writer("chaos_subgauss.csv", |w| Ok(report.write_csv(w)?))?;
    out.json("chaos_subgauss.json", &summary)?;
    Ok(Outcome { files: out.into_files(), passed, summary })
}

/// The count-weighted mean of the table is the sample mean of `G`; it must
/// match `Var X` from the coefficients.
fn gee(ov: &Overrides, cfg: GeeConfig) -> Result<Outcome, CliError> {
    check_rvs(std::slice::from_ref(&cfg.rv))?;
    if cfg.x_grid.is_empty() || cfg.x_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(CliError::Config("x_grid must be nonempty and strictly increasing".into()));
    }
    let seed = ov.seed.unwrap_or(cfg.seed);
    let est = estimate_g(&cfg.rv, cfg.n, cfg.bins, seed)?;
    let table = match &est.g.form {
        chaostail_core::tail_engine::GForm::Tabulated(t) => t,
        _ => return Err(CliError::Compute("g estimate is not tabulated".into())),
    };
    let n = est.n as f64;
    let se = table.se.as_ref().ok_or_else(|| CliError::Compute("g table carries no standard errors".into()))?;
    let weighted: f64 = table.values.iter().zip(&est.counts).map(|(v, &c)| v * c as f64 / n).sum();
    // Law of total variance: within-bin spread plus spread of bin means.
    let pooled: f64 = table
        .values
        .iter()
        .zip(se)
        .zip(&est.counts)
        .map(|((m, s), &c)| c as f64 / n * (s * s * c as f64 + (m - weighted).powi(2)))
        .sum();
    let weighted_se = (pooled / n).sqrt();
    let (_, variance) = exact_gamma_identity(&cfg.rv)?;
    let record = VerificationRecord { check: "gee-mean".into(), lhs: weighted, rhs: variance, se: weighted_se, n: est.n, seed };
    let passed = record.agrees(SE_BAND);
    let tail_cfg = TailConfig {
        g: est.g.clone(),
        mean_abs: est.mean_abs,
        x_grid: cfg.x_grid.iter().copied().filter(|&x| est.g.support_left.is_none_or(|l| x > l)).collect(),
        ..TailConfig::default()
    };
    let summary = json!({ "suite": "gee", "n": est.n, "seed": seed, "record": record, "passed": passed });
    let mut out = OutDir::new(&ov.out_dir(cfg.output_dir.as_deref()));
    out.json("chaos_gee.json", &json!({ "estimate": est, "record": record, "passed": passed }))?;
    out.json("gee_tail_config.json", &tail_cfg)?;
    Ok(Outcome { files: out.into_files(), passed, summary })
}
