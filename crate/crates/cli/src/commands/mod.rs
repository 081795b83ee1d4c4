//! Subcommand bodies. Each one validates its whole configuration before
//! the first file is created, computes (in parallel where it pays), then
//! writes its outputs in a fixed order from a single thread.

pub mod chaos;
pub mod polymer;
pub mod stein;
pub mod tail;

use std::path::{Path, PathBuf};

use serde_json::Value;

/// Overrides from the command line, applied on top of the config file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub config: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub tol: Option<f64>,
}

impl Overrides {
    pub fn out_dir(&self, from_config: Option<&Path>) -> PathBuf {
        self.out.clone().or_else(|| from_config.map(Path::to_path_buf)).unwrap_or_else(|| PathBuf::from("out"))
    }
}

/// What a command produced and whether every check passed.
#[derive(Debug)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    pub passed: bool,
    pub summary: Value,
}
