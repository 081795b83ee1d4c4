//! Tail tables with named envelopes, written as CSV or JSON.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Pointwise confidence band around the tail column.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceBand {
    pub level: f64,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub bound: String,
    pub abscissa: f64,
}

/// A tail sampled on a grid, optionally with its density, bound curves and
/// a confidence band. Envelope entries that do not apply at an abscissa are
/// stored as NaN and written as empty CSV cells (`null` in JSON).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailReport {
    pub abscissae: Vec<f64>,
    pub tail: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub density: Option<Vec<f64>>,
    pub bound_envelopes: BTreeMap<String, Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub band: Option<ConfidenceBand>,
    pub violations: Vec<Violation>,
}

/// Tolerance for the monotonicity and range invariants, absorbing
/// quadrature rounding.
const INVARIANT_SLACK: f64 = 1e-12;

impl TailReport {
    pub fn new(abscissae: Vec<f64>, tail: Vec<f64>) -> Result<Self> {
        let r = TailReport {
            abscissae,
            tail,
            density: None,
            bound_envelopes: BTreeMap::new(),
            band: None,
            violations: Vec::new(),
        };
        r.validate()?;
        Ok(r)
    }

    pub fn with_density(mut self, density: Vec<f64>) -> Result<Self> {
        self.check_len(density.len())?;
        if density.iter().any(|d| !(*d >= 0.0)) {
            return Err(Error::InvalidArgument("density must be nonnegative".into()));
        }
        self.density = Some(density);
        Ok(self)
    }

    pub fn add_envelope(&mut self, name: &str, values: Vec<f64>) -> Result<()> {
        self.check_len(values.len())?;
        if matches!(name, "x" | "tail" | "density" | "dkw_lo" | "dkw_hi" | "violation_flag") {
            return Err(Error::InvalidArgument(format!("envelope name {name} is reserved")));
        }
        self.bound_envelopes.insert(name.to_string(), values);
        Ok(())
    }

    pub fn set_band(&mut self, band: ConfidenceBand) -> Result<()> {
        self.check_len(band.lo.len())?;
        self.check_len(band.hi.len())?;
        self.band = Some(band);
        Ok(())
    }

    pub fn flag(&mut self, bound: &str, abscissa: f64) {
        self.violations.push(Violation { bound: bound.to_string(), abscissa });
    }

    fn check_len(&self, got: usize) -> Result<()> {
        if got == self.abscissae.len() {
            Ok(())
        } else {
            Err(Error::DimensionMismatch { expected: self.abscissae.len(), got })
        }
    }

    /// Tail in `[0, 1]` and nonincreasing along increasing abscissae.
    pub fn validate(&self) -> Result<()> {
        self.check_len(self.tail.len())?;
        if self.abscissae.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument("abscissae must be strictly increasing".into()));
        }
        if self.tail.iter().any(|t| !(-INVARIANT_SLACK..=1.0 + INVARIANT_SLACK).contains(t)) {
            return Err(Error::InvalidArgument("tail values must lie in [0, 1]".into()));
        }
        if self.tail.windows(2).any(|w| w[1] > w[0] + INVARIANT_SLACK) {
            return Err(Error::InvalidArgument("tail must be nonincreasing".into()));
        }
        Ok(())
    }

    fn is_flagged(&self, x: f64) -> bool {
        self.violations.iter().any(|v| v.abscissa == x)
    }

    pub fn header(&self) -> Vec<String> {
        let mut h = vec!["x".to_string(), "tail".to_string(), "density".to_string()];
        h.extend(self.bound_envelopes.keys().cloned());
        if self.band.is_some() {
            h.push("dkw_lo".into());
            h.push("dkw_hi".into());
        }
        h.push("violation_flag".into());
        h
    }

    /// Columns: `x, tail, density, <envelopes in name order>, [dkw_lo,
    /// dkw_hi], violation_flag`. Floats use the shortest round-trip form.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{}", self.header().join(","))?;
        for (i, &x) in self.abscissae.iter().enumerate() {
            let mut row = vec![fmt_cell(x), fmt_cell(self.tail[i])];
            row.push(self.density.as_ref().map_or(String::new(), |d| fmt_cell(d[i])));
            row.extend(self.bound_envelopes.values().map(|v| fmt_cell(v[i])));
            if let Some(b) = &self.band {
                row.push(fmt_cell(b.lo[i]));
                row.push(fmt_cell(b.hi[i]));
            }
            row.push(if self.is_flagged(x) { "1" } else { "0" }.to_string());
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }

    pub fn write_json<W: Write>(&self, out: W) -> Result<()> {
        serde_json::to_writer_pretty(out, self)?;
        Ok(())
    }
}

/// Finite values in shortest round-trip form, switching to exponent
/// notation for very small or large magnitudes; anything else is empty.
pub fn fmt_cell(v: f64) -> String {
    if v.is_finite() {
        format!("{v:?}")
    } else {
        String::new()
    }
}
