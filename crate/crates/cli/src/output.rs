//! Ordered, single-threaded writers. CSV is comma separated with a header
//! row, `.` decimals and LF line ends; floats use the shortest round-trip
//! form and non-finite values are empty cells.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use chaostail_core::report::fmt_cell;
use serde::Serialize;

use crate::error::CliError;

pub struct OutDir {
    root: PathBuf,
    written: Vec<PathBuf>,
}

/// A CSV cell.
pub enum Cell {
    Float(f64),
    Int(u64),
    Flag(bool),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Float(v) => fmt_cell(*v),
            Cell::Int(v) => v.to_string(),
            Cell::Flag(b) => if *b { "1" } else { "0" }.to_string(),
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as u64)
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::Int(v)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Flag(v)
    }
}

impl OutDir {
    pub fn new(root: &Path) -> Self {
        Self { root: root.to_path_buf(), written: Vec::new() }
    }

    fn create(&mut self, name: &str) -> Result<BufWriter<File>, CliError> {
        fs::create_dir_all(&self.root)?;
        let path = self.root.join(name);
        let file = File::create(&path)?;
        self.written.push(path);
        Ok(BufWriter::new(file))
    }

    pub fn csv<I>(&mut self, name: &str, header: &[&str], rows: I) -> Result<(), CliError>
    where
        I: IntoIterator<Item = Vec<Cell>>,
    {
        let mut out = self.create(name)?;
        writeln!(out, "{}", header.join(","))?;
        for row in rows {
            debug_assert_eq!(row.len(), header.len());
            let cells: Vec<String> = row.iter().map(Cell::render).collect();
            writeln!(out, "{}", cells.join(","))?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut out = self.create(name)?;
        serde_json::to_writer_pretty(&mut out, value)?;
        writeln!(out)?;
        out.flush()?;
        Ok(())
    }

    /// Hands a writer to code that renders its own format.
    pub fn with_writer<F>(&mut self, name: &str, f: F) -> Result<(), CliError>
    where
        F: FnOnce(&mut BufWriter<File>) -> Result<(), CliError>,
    {
        let mut out = self.create(name)?;
        f(&mut out)?;
        out.flush()?;
        Ok(())
    }

    pub fn into_files(self) -> Vec<PathBuf> {
        self.written
    }
}
