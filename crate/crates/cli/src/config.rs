//! JSON run configurations. Unknown keys are rejected everywhere, and every
//! field has a default so an empty object `{}` reproduces the reference run.

use std::path::{Path, PathBuf};

use chaostail_core::chaos::ChaosRV;
use chaostail_core::special::SQRT_2PI;
use chaostail_core::tail_engine::{GFunctionSpec, MenuQuery, DEFAULT_TOL};
use chaostail_polymer::covariance::CovarianceKind;
use chaostail_polymer::hamiltonian::HamiltonianKind;
use chaostail_polymer::run::DEFAULT_BUDGET;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const DEFAULT_SEED: u64 = 2024;

/// Reads `path`, or the defaults when no path is given.
pub fn load<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T, CliError> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
            serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))
        }
    }
}

fn default_seed() -> u64 {
    DEFAULT_SEED
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

impl Grid {
    pub fn points(&self) -> Result<Vec<f64>, CliError> {
        if self.n < 2 || !(self.hi > self.lo) {
            return Err(CliError::Config(format!("grid needs n >= 2 and hi > lo (got {self:?})")));
        }
        Ok(linspace(self.lo, self.hi, self.n))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SteinConfig {
    pub z_list: Vec<f64>,
    pub grid: Grid,
    /// Largest accepted `|residual|`.
    pub tol: f64,
    /// Output directory; `--out` takes precedence.
    pub output_dir: Option<PathBuf>,
}

impl Default for SteinConfig {
    fn default() -> Self {
        Self { z_list: vec![-3.0, -1.0, 0.0, 1.0, 2.0, 3.0], grid: Grid { lo: -10.0, hi: 10.0, n: 10_000 }, tol: 1e-10, output_dir: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TailConfig {
    pub g: GFunctionSpec,
    pub mean_abs: f64,
    pub x_grid: Vec<f64>,
    /// Quadrature tolerance.
    pub tol: f64,
    /// Moment order `c > 2` for the super-Gaussian floor.
    pub moment_order: Option<f64>,
    /// `c'` in `g(y) ≤ c' y²`, enabling the Stein lower envelope.
    pub c_prime: Option<f64>,
    pub menu: Option<MenuQuery>,
    /// Output directory; `--out` takes precedence.
    pub output_dir: Option<PathBuf>,
}

impl Default for TailConfig {
    fn default() -> Self {
        Self {
            g: GFunctionSpec::standard_normal(),
            mean_abs: 2.0 / SQRT_2PI,
            x_grid: (1..=20).map(|i| 0.25 * i as f64).collect(),
            tol: DEFAULT_TOL,
            moment_order: None,
            c_prime: None,
            menu: None,
            output_dir: None,
        }
    }
}

/// Named test functions for the integration-by-parts check.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FunctionName {
    Identity,
    Tanh,
}

fn first_and_second_chaos() -> Vec<ChaosRV> {
    let w1 = ChaosRV::coordinate(1, 0);
    let he2 = ChaosRV::hermite(1, 0, 2);
    let sum = &w1 + &he2;
    vec![w1, he2, sum]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LemkeyConfig {
    pub rvs: Vec<ChaosRV>,
    pub functions: Vec<FunctionName>,
    pub n: usize,
    pub seed: u64,
    /// Output directory; `--out` takes precedence.
    pub output_dir: Option<PathBuf>,
}

impl Default for LemkeyConfig {
    fn default() -> Self {
        Self {
            rvs: first_and_second_chaos(),
            functions: vec![FunctionName::Identity, FunctionName::Tanh],
            n: 1_000_000,
            seed: DEFAULT_SEED,
            output_dir: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LemskoPair {
    /// Homogeneous chaos element.
    pub f: ChaosRV,
    pub y: ChaosRV,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LemskoConfig {
    pub pairs: Vec<LemskoPair>,
    pub n: usize,
    pub seed: u64,
    /// Output directory; `--out` takes precedence.
    pub output_dir: Option<PathBuf>,
}

impl Default for LemskoConfig {
    fn default() -> Self {
        let f = ChaosRV::from_terms(2, [(vec![2, 0], 1.0), (vec![1, 1], 0.5)]).expect("valid terms");
        let y = ChaosRV::from_terms(2, [(vec![3, 0], 0.3), (vec![2, 0], 1.0), (vec![1, 1], -0.7), (vec![0, 1], 1.0)])
            .expect("valid terms");
        let g = ChaosRV::coordinate(2, 1);
        let y2 = ChaosRV::from_terms(2, [(vec![0, 1], 2.0), (vec![1, 2], 0.4)]).expect("valid terms");
        Self { pairs: vec![LemskoPair { f, y }, LemskoPair { f: g, y: y2 }], n: 200_000, seed: DEFAULT_SEED, output_dir: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MehlerConfig {
    pub rvs: Vec<ChaosRV>,
    pub points: Vec<Vec<f64>>,
    /// Gauss–Legendre nodes per half interval.
    pub theta_nodes: usize,
    pub n: usize,
    pub seed: u64,
    /// Allowance for θ-quadrature error on top of `4 se`.
    pub quad_tol: f64,
    /// Output directory; `--out` takes precedence.
    pub output_dir: Option<PathBuf>,
}

impl Default for MehlerConfig {
    fn default() -> Self {
        let order1 = ChaosRV::from_terms(2, [(vec![1, 0], 1.0), (vec![0, 1], -0.5)]).expect("valid terms");
        let order2 = ChaosRV::from_terms(2, [(vec![2, 0], 1.0), (vec![1, 1], 0.8), (vec![0, 2], -0.3)]).expect("valid terms");
        Self {
            rvs: vec![order1, order2],
            points: vec![vec![0.3, -1.2], vec![1.5, 0.7], vec![-2.0, 0.1]],
            theta_nodes: 16,
            n: 20_000,
            seed: DEFAULT_SEED,
            quad_tol: 1e-8,
            output_dir: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SubgaussConfig {
    pub rv: ChaosRV,
    pub u_grid: Vec<f64>,
    pub n: usize,
    pub seed: u64,
    /// Output directory; `--out` takes precedence.
    pub output_dir: Option<PathBuf>,
}

impl Default for SubgaussConfig {
    fn default() -> Self {
        Self {
            rv: ChaosRV::from_terms(2, [(vec![1, 0], 0.6), (vec![0, 1], 0.8)]).expect("valid terms"),
            u_grid: (1..=16).map(|i| 0.25 * i as f64).collect(),
            n: 200_000,
            seed: DEFAULT_SEED,
            output_dir: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeeConfig {
    pub rv: ChaosRV,
    pub n: usize,
    pub bins: usize,
    pub seed: u64,
    /// Abscissae written into the emitted tail configuration.
    pub x_grid: Vec<f64>,
    /// Output directory; `--out` takes precedence.
    pub output_dir: Option<PathBuf>,
}

impl Default for GeeConfig {
    fn default() -> Self {
        Self {
            rv: ChaosRV::from_terms(1, [(vec![1], 1.0), (vec![2], 0.25)]).expect("valid terms"),
            n: 200_000,
            bins: 60,
            seed: DEFAULT_SEED,
            x_grid: (0..=12).map(|i| -0.5 + 0.25 * i as f64).collect(),
            output_dir: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AcceptanceSection {
    /// `chi` must land in this interval; `null` skips the check.
    pub chi_interval: Option<[f64; 2]>,
    pub min_r2: f64,
    /// Multiplier on the nonlinear upper variance constant.
    pub slack: f64,
}

impl Default for AcceptanceSection {
    fn default() -> Self {
        Self { chi_interval: Some([0.4, 0.6]), min_r2: 0.95, slack: 2.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct TailSection {
    /// Time of the tail check; defaults to the last time of the grid.
    pub t: Option<f64>,
    /// Defaults to `0.25, 0.5, …, 5`.
    pub a_grid: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeeSection {
    pub t: f64,
    /// Number of environments, indices `0..n_env` of the run.
    pub n_env: usize,
    #[serde(default = "default_n_env_prime")]
    pub n_env_prime: usize,
    #[serde(default = "default_theta_nodes")]
    pub theta_nodes: usize,
    /// Defaults to the run's `n_b`.
    #[serde(default)]
    pub n_b: Option<usize>,
}

fn default_n_env_prime() -> usize {
    8
}

fn default_theta_nodes() -> usize {
    16
}

fn default_budget() -> u64 {
    DEFAULT_BUDGET
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolymerConfig {
    pub cov: CovarianceKind,
    pub t_grid: Vec<f64>,
    pub n_env: usize,
    pub n_b: usize,
    pub dt: f64,
    pub hamiltonian: HamiltonianKind,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_budget")]
    pub budget: u64,
    #[serde(default)]
    pub acceptance: AcceptanceSection,
    #[serde(default)]
    pub tail: TailSection,
    #[serde(default)]
    pub gee: Option<GeeSection>,
    /// Output directory; `--out` takes precedence.
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

/// Smoke run: constant covariance, quick enough for interactive use.
impl Default for PolymerConfig {
    fn default() -> Self {
        Self {
            cov: CovarianceKind::Constant { q: 1.0, p: 16 },
            t_grid: vec![1.0, 2.0, 4.0],
            n_env: 500,
            n_b: 100,
            dt: 0.25,
            hamiltonian: HamiltonianKind::Linear,
            seed: DEFAULT_SEED,
            budget: DEFAULT_BUDGET,
            acceptance: AcceptanceSection::default(),
            tail: TailSection::default(),
            gee: None,
            output_dir: None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(serde_json::from_str::<SteinConfig>(r#"{"z_list":[0],"grid_size":3}"#).is_err());
        assert!(serde_json::from_str::<PolymerConfig>(
            r#"{"cov":{"kind":"constant","q":1,"p":4},"t_grid":[1],"n_env":2,"n_b":100,"dt":0.25,"hamiltonian":"linear","colour":1}"#
        )
        .is_err());
    }

    #[test]
    fn empty_object_is_the_default() {
        assert_eq!(serde_json::from_str::<SteinConfig>("{}").unwrap(), SteinConfig::default());
        assert_eq!(serde_json::from_str::<TailConfig>("{}").unwrap(), TailConfig::default());
        assert_eq!(serde_json::from_str::<MehlerConfig>("{}").unwrap(), MehlerConfig::default());
    }

    #[test]
    fn polymer_optional_sections() {
        let c: PolymerConfig = serde_json::from_str(
            r#"{"cov":{"kind":"circle_cosine","a":1,"b":0.5,"p":16},"t_grid":[4,8],"n_env":10,"n_b":100,
                "dt":0.25,"hamiltonian":"nonlinear_abs","gee":{"t":4,"n_env":3}}"#,
        )
        .unwrap();
        assert_eq!(c.seed, DEFAULT_SEED);
        assert_eq!(c.gee.unwrap().theta_nodes, 16);
        assert_eq!(c.acceptance.chi_interval, Some([0.4, 0.6]));
    }
}
