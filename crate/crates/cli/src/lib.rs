//! Batch runner for the chaostail verifications and polymer experiments.
//!
//! Every subcommand reads an optional JSON config (unknown keys are
//! rejected), writes CSV/JSON into the output directory and reports through
//! its exit status: 0 pass, 1 configuration, 2 verification or computation
//! failure, 3 budget exceeded. Identical config and seed give byte-identical
//! files.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use commands::{Outcome, Overrides};
pub use error::CliError;

const STEIN_COLUMNS: &str = "\
Writes stein_check_z<z>.csv per threshold and stein_summary.json.
CSV columns:
  x              grid abscissa
  f              Stein solution f_z(x)
  f_left_prime   left derivative; empty for x > z
  f_right_prime  right derivative; empty for x < z
  residual       [1{x<=z} - Phi(z)] - [f'(x) - x f(x)]; empty at x = z";

const TAIL_COLUMNS: &str = "\
Writes tail_report.csv and tail_report.json.
CSV columns:
  x                 abscissa
  tail              P[X > x] rebuilt from g
  density           density of X at x rebuilt from g
  menu_lower|upper  explicit menu bound (needs `menu`); empty for x <= z0
  normal_tail       standard normal tail
  stein_lower       (1+x^2)/(1+(2c'+1)x^2) normal tail (needs `c_prime`); x > 0
  supergauss_floor  (c-2)/c times the normal tail (needs `moment_order`); x > 0
  upper_dx          exp(-x^2/2); x > 0
  upper_g           (1 + 1/x^2) times the normal tail; x > 0
  violation_flag    1 where the menu bound fails
Envelope columns appear in name order.";

const CHAOS_COLUMNS: &str = "\
Writes chaos_<suite>.json verification records (lhs, rhs, se, n, seed).
subgauss also writes chaos_subgauss.csv with columns
  x, tail, density (empty), subgaussian, dkw_lo, dkw_hi, violation_flag
gee also writes gee_tail_config.json, a config accepted by `tail`.";

const POLYMER_COLUMNS: &str = "\
Writes summary.json plus, depending on the action:
variance.csv (run, bounds):
  t, n_env       time and number of environments
  var, var_se    Var[log u(t)] and its jackknife standard error
  lower_bound    K_u qm t (empty when qm = 0)
  upper_bound    linear: (pi/2)^2 q0 t; nonlinear: slack 2^8 (pi/2)^2 q0^3 t
  violation      1 when var is more than 4 se outside the bounds
tail.csv (run, tail):
  a                  deviation level in units of sqrt(t)
  empirical          P[|log u - mean| > a sqrt(t)]
  dkw_lo, dkw_hi     DKW band at level 0.99
  ld_upper           min(1, 2 sqrt(q0)/(a sqrt(2 pi)) exp(-a^2/(2 q0)))
  ld2_lower          0.9 sqrt(qm)/a exp(-a^2/(2 qm))
  large_a            1 when a >= 3 sqrt(qm)
  violation          1 when dkw_lo exceeds ld_upper
gee.csv (run with a gee section, gee):
  env_index, g, se   G estimate per environment and its se over W' copies
  overlap            replica overlap of the same environment
  in_range           1 when qm - 4se <= g <= q0 + 4se";

#[derive(Debug, Parser)]
#[command(name = "chaostail", version, about = "Chaos tail verifications and directed polymer experiments")]
pub struct Cli {
    /// JSON config; defaults are used when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Output directory [default: config `output_dir`, else `out`].
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Master seed, overriding the config.
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
    /// Tolerance, overriding the config (residual, quadrature or θ-rule).
    #[arg(long, global = true, value_name = "X")]
    pub tol: Option<f64>,
    /// Worker threads [default: all cores].
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check the Stein solution on a grid for each threshold.
    #[command(after_help = STEIN_COLUMNS)]
    Stein,
    /// Rebuild tail and density from g, with envelopes.
    #[command(after_help = TAIL_COLUMNS)]
    Tail,
    /// Monte Carlo verification suites on finite chaos.
    #[command(after_help = CHAOS_COLUMNS)]
    Chaos {
        #[arg(value_enum)]
        suite: commands::chaos::Suite,
    },
    /// Directed polymer simulation and checks.
    #[command(after_help = POLYMER_COLUMNS)]
    Polymer {
        #[arg(value_enum)]
        action: commands::polymer::Action,
    },
}

impl Cli {
    fn overrides(&self) -> Overrides {
        Overrides { config: self.config.clone(), out: self.out.clone(), seed: self.seed, tol: self.tol }
    }
}

pub fn execute(cli: &Cli) -> Result<Outcome, CliError> {
    let ov = cli.overrides();
    let body = || match &cli.command {
        Command::Stein => commands::stein::run(&ov),
        Command::Tail => commands::tail::run(&ov),
        Command::Chaos { suite } => commands::chaos::run(&ov, *suite),
        Command::Polymer { action } => commands::polymer::run(&ov, *action),
    };
    match cli.threads {
        None => body(),
        Some(0) => Err(CliError::Config("--threads must be positive".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Config(e.to_string()))?
            .install(body),
    }
}

/// Parses `args`, runs, prints the produced files and returns the exit code.
pub fn run_from_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(outcome) => {
            for f in &outcome.files {
                println!("{}", f.display());
            }
            if outcome.passed {
                0
            } else {
                eprintln!("checks failed; see {}", outcome.files.last().map_or(String::new(), |f| f.display().to_string()));
                2
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
