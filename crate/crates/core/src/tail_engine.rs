//! Densities and tails rebuilt from `g(z) = E[G | X = z]`, and the closed-form
//! tail envelopes that compare a law against the Gaussian or a power law.
//!
//! With `A(x) = exp(-∫_0^x y/g(y) dy)` the density is
//! `rho(z) = E|X| / (2 g(z)) * A(z)` and, because `-A' = y A / g`, the tail is
//! `S(x) = E|X|/2 * ∫_x^∞ A(y)/g(y) dy`. The second form is what gets
//! integrated: it is a sum of positive terms, unlike `A(x)/x - ∫ A/y²`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::adaptive_simpson;
use crate::special::{normal_pdf, normal_tail};

/// Default absolute tolerance on the log-scale integral `∫ y/g`.
pub const DEFAULT_TOL: f64 = 1e-10;

/// Largest abscissa the tail integral may march to before giving up.
const MAX_TRUNCATION: f64 = 1e12;
const MAX_PANELS: usize = 4096;

/// Piecewise-linear table of `g` values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GTable {
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    /// Per-node standard errors when the table was estimated from samples.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub se: Option<Vec<f64>>,
}

impl GTable {
    pub fn new(grid: Vec<f64>, values: Vec<f64>, se: Option<Vec<f64>>) -> Result<Self> {
        let t = GTable { grid, values, se };
        t.validate()?;
        Ok(t)
    }

    fn validate(&self) -> Result<()> {
        if self.grid.len() < 2 {
            return Err(Error::InvalidArgument("g table needs at least two nodes".into()));
        }
        if self.values.len() != self.grid.len() {
            return Err(Error::DimensionMismatch { expected: self.grid.len(), got: self.values.len() });
        }
        if let Some(se) = &self.se {
            if se.len() != self.grid.len() {
                return Err(Error::DimensionMismatch { expected: self.grid.len(), got: se.len() });
            }
        }
        if self.grid.iter().any(|x| !x.is_finite()) || self.grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument("g grid must be finite and strictly increasing".into()));
        }
        if self.values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidArgument("g values must be finite and nonnegative".into()));
        }
        Ok(())
    }

    /// Linear interpolation, held constant outside the grid.
    pub fn eval(&self, y: f64) -> f64 {
        let n = self.grid.len();
        if y <= self.grid[0] {
            return self.values[0];
        }
        if y >= self.grid[n - 1] {
            return self.values[n - 1];
        }
        let i = self.grid.partition_point(|&g| g <= y) - 1;
        let (x0, x1) = (self.grid[i], self.grid[i + 1]);
        let s = (y - x0) / (x1 - x0);
        self.values[i] + s * (self.values[i + 1] - self.values[i])
    }

    fn covers(&self, y: f64) -> bool {
        y >= self.grid[0] && y <= self.grid[self.grid.len() - 1]
    }
}

/// Closed or tabulated forms of `g`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GForm {
    Constant { c: f64 },
    /// `alpha + beta * y`.
    Affine { alpha: f64, beta: f64 },
    /// `c * y^2`.
    Quadratic { c: f64 },
    /// `c1 * y^p` for `y >= z0`, the table below.
    Power { c1: f64, p: f64, z0: f64, prefix: GTable },
    Tabulated(GTable),
}

/// `g` together with the left end of the support of `X`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GFunctionSpec {
    pub form: GForm,
    /// `None` means the support extends to minus infinity.
    #[serde(default)]
    pub support_left: Option<f64>,
}

impl GFunctionSpec {
    pub fn new(form: GForm, support_left: Option<f64>) -> Result<Self> {
        let spec = GFunctionSpec { form, support_left };
        spec.validate()?;
        Ok(spec)
    }

    /// `g ≡ 1`, the standard normal.
    pub fn standard_normal() -> Self {
        GFunctionSpec { form: GForm::Constant { c: 1.0 }, support_left: None }
    }

    /// `g(y) = 2(1 + y)` on `(-1, ∞)`, the law of `W² - 1`.
    pub fn shifted_chi_square() -> Self {
        GFunctionSpec { form: GForm::Affine { alpha: 2.0, beta: 2.0 }, support_left: Some(-1.0) }
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(a) = self.support_left {
            if !(a < 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "support must contain 0 in its interior, left end is {a}"
                )));
            }
        }
        match &self.form {
            GForm::Constant { c } if !(c.is_finite() && *c >= 0.0) => {
                Err(Error::InvalidArgument(format!("constant g must be nonnegative, got {c}")))
            }
            GForm::Affine { alpha, beta } if !(alpha.is_finite() && beta.is_finite()) => {
                Err(Error::InvalidArgument("affine g needs finite coefficients".into()))
            }
            GForm::Quadratic { c } if !(c.is_finite() && *c > 0.0) => {
                Err(Error::InvalidArgument(format!("quadratic g needs c > 0, got {c}")))
            }
            GForm::Power { c1, p, z0, prefix } => {
                if !(c1.is_finite() && *c1 > 0.0 && p.is_finite() && z0.is_finite() && *z0 > 0.0) {
                    return Err(Error::InvalidArgument("power g needs c1 > 0, finite p, z0 > 0".into()));
                }
                prefix.validate()
            }
            GForm::Tabulated(t) => t.validate(),
            _ => Ok(()),
        }
    }

    pub fn eval(&self, y: f64) -> f64 {
        match &self.form {
            GForm::Constant { c } => *c,
            GForm::Affine { alpha, beta } => alpha + beta * y,
            GForm::Quadratic { c } => c * y * y,
            GForm::Power { c1, p, z0, prefix } => {
                if y >= *z0 {
                    c1 * y.powf(*p)
                } else {
                    prefix.eval(y)
                }
            }
            GForm::Tabulated(t) => t.eval(y),
        }
    }

    fn in_support(&self, z: f64) -> bool {
        z.is_finite() && self.support_left.is_none_or(|a| z > a)
    }

    fn warn_if_extrapolating(&self, lo: f64, hi: f64) {
        if let GForm::Tabulated(t) = &self.form {
            if !t.covers(lo) || !t.covers(hi) {
                log::warn!(
                    "tabulated g extrapolated as constant outside [{}, {}] (requested [{lo}, {hi}])",
                    t.grid[0],
                    t.grid[t.grid.len() - 1]
                );
            }
        }
    }

    /// `y / g(y)`, NaN where `g` is not strictly positive so quadrature
    /// reports the singular point.
    fn drift(&self, y: f64) -> f64 {
        let g = self.eval(y);
        if g > 0.0 {
            y / g
        } else {
            f64::NAN
        }
    }

    fn inv(&self, y: f64) -> f64 {
        let g = self.eval(y);
        if g > 0.0 {
            1.0 / g
        } else {
            f64::NAN
        }
    }
}

/// `∫_from^to y/g(y) dy`, signed.
fn drift_integral(g: &GFunctionSpec, from: f64, to: f64, tol: f64) -> Result<f64> {
    adaptive_simpson(|y| g.drift(y), from, to, tol)
}

/// `ln A(x) = -∫_0^x y/g(y) dy`; for `x < 0` the integral is signed.
pub fn log_integral_a(g: &GFunctionSpec, x: f64, tol: f64) -> Result<f64> {
    if !g.in_support(x) {
        return Err(Error::OutsideSupport { z: x });
    }
    g.warn_if_extrapolating(x.min(0.0), x.max(0.0));
    Ok(-drift_integral(g, 0.0, x, tol)?)
}

/// `A(x) = exp(-∫_0^x y/g(y) dy)`.
pub fn integral_a(g: &GFunctionSpec, x: f64, tol: f64) -> Result<f64> {
    Ok(log_integral_a(g, x, tol)?.exp())
}

fn check_mean_abs(mean_abs: f64) -> Result<()> {
    if mean_abs.is_finite() && mean_abs > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("E|X| must be positive, got {mean_abs}")))
    }
}

/// `rho(z) = E|X| / (2 g(z)) * A(z)`.
pub fn density_from_g(g: &GFunctionSpec, mean_abs: f64, z: f64, tol: f64) -> Result<f64> {
    check_mean_abs(mean_abs)?;
    let gz = g.eval(z);
    if !g.in_support(z) {
        return Err(Error::OutsideSupport { z });
    }
    if !(gz > 0.0) {
        return Err(Error::Singular { at: z });
    }
    let log_a = log_integral_a(g, z, tol)?;
    Ok(0.5 * mean_abs / gz * log_a.exp())
}

/// `P[X > x] = E|X|/2 * ∫_x^∞ A/g`.
///
/// The integral is accumulated over geometrically growing panels. Each
/// panel is integrated relative to `A` at its left end, so accuracy is
/// relative even deep in the tail. Marching stops once the remainder bound
/// `∫_T^∞ A/g ≤ A(T)/T` falls below `tol` times the running sum.
pub fn tail_from_g(g: &GFunctionSpec, mean_abs: f64, x: f64, tol: f64) -> Result<f64> {
    check_mean_abs(mean_abs)?;
    if !g.in_support(x) {
        return Err(Error::OutsideSupport { z: x });
    }
    let inner_tol = (tol * 1e-3).max(1e-15);
    let mut left = x;
    let mut log_a = log_integral_a(g, x, inner_tol)?;
    let mut sum = 0.0;
    let mut width = 0.25;
    for _ in 0..MAX_PANELS {
        let right = left + width;
        let a0 = left;
        let panel = adaptive_simpson(
            |y| {
                let rel = adaptive_simpson(|s| g.drift(s), a0, y, inner_tol).unwrap_or(f64::NAN);
                (-rel).exp() * g.inv(y)
            },
            left,
            right,
            inner_tol,
        )?;
        let step = drift_integral(g, left, right, inner_tol)?;
        sum += log_a.exp() * panel;
        log_a -= step;
        left = right;
        width *= 1.25;
        let a_right = log_a.exp();
        if a_right == 0.0 || (left > 0.0 && a_right / left <= tol * sum.min(1.0)) {
            return Ok((0.5 * mean_abs * sum).min(1.0));
        }
        if left > MAX_TRUNCATION {
            break;
        }
    }
    Err(Error::NonIntegrable(format!(
        "A(T)/T still above tolerance at T = {left:e} starting from x = {x}"
    )))
}

/// Constant of the generic lower bound `P[X > x] ≥ K A(x)/x` and the
/// optimal dilation `k*` used to derive it.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CorAPrefactor {
    pub k: f64,
    pub k_star: f64,
}

/// `K = E|X|/2 · c'^{c'} / (1+c')^{1+c'}`, with `k* = (1 + 1/c')^{c'}` the
/// maximiser of `k ↦ (1 - k^{-1/c'})/k`.
pub fn bound_cor_a_prefactor(c_prime: f64, mean_abs: f64) -> Result<CorAPrefactor> {
    if !(c_prime > 0.0 && c_prime < 1.0) {
        return Err(Error::InvalidArgument(format!("c' must lie in (0, 1), got {c_prime}")));
    }
    check_mean_abs(mean_abs)?;
    let k = 0.5 * mean_abs * c_prime.powf(c_prime) / (1.0 + c_prime).powf(1.0 + c_prime);
    let k_star = (1.0 + 1.0 / c_prime).powf(c_prime);
    Ok(CorAPrefactor { k, k_star })
}

/// Comparison function the menu bounds `g` with beyond `z0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "case", rename_all = "snake_case", deny_unknown_fields)]
pub enum BoundCase {
    /// `g ≥ 1`.
    Gaussian,
    /// `g ≥ c_second · y²`.
    Power { c_second: f64 },
    /// `g ≥ c1 · y^p`, `p < 2`.
    Stretched { c1: f64, p: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Lower,
    Upper,
}

/// Hypotheses shared by every menu entry: `g(y) ≤ c' y²` for `y > z0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MenuQuery {
    pub c_prime: f64,
    pub z0: f64,
    pub case: BoundCase,
    /// Reverse the case inequality on `g`, and with it the conclusion.
    #[serde(default)]
    pub reversed: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MenuBound {
    pub value: f64,
    pub direction: Direction,
}

const HYPOTHESIS_PROBES: usize = 257;
const HYPOTHESIS_SLACK: f64 = 1e-12;

fn probe(lo: f64, hi: f64) -> impl Iterator<Item = f64> {
    (0..HYPOTHESIS_PROBES).map(move |i| lo + (hi - lo) * i as f64 / (HYPOTHESIS_PROBES - 1) as f64)
}

fn require(holds: bool, what: &str) -> Result<()> {
    if holds {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("g violates the hypothesis {what}")))
    }
}

/// Evaluates one of the explicit tail comparisons at `x > z0`.
///
/// All cases start from `P[X > x] ≥ K A(x)/x` and bound `A` from below
/// using the case inequality on `g`:
/// * gaussian: `K e^{-x²/2} / x`;
/// * power: `K' x^{-1-1/c''}` with `K' = K A(z0) z0^{1/c''}`;
/// * stretched: `K'' e^{-x^{2-p}/((2-p)c1)} / x` with
///   `K'' = K A(z0) e^{z0^{2-p}/((2-p)c1)}`.
///
/// The hypotheses are probed on a grid over `[z0, x]` (and `[0, x]` for
/// `g ≥ 1`). `reversed` swaps the case inequality and reports an upper
/// bound with the same constant; it is not offered for the gaussian case.
pub fn lower_bound_menu(
    g: &GFunctionSpec,
    mean_abs: f64,
    x: f64,
    query: &MenuQuery,
    tol: f64,
) -> Result<MenuBound> {
    let pref = bound_cor_a_prefactor(query.c_prime, mean_abs)?;
    let z0 = query.z0;
    if !(z0 > 1.0 && x > z0) {
        return Err(Error::InvalidArgument(format!("need 1 < z0 < x, got z0 = {z0}, x = {x}")));
    }
    require(
        probe(z0, x).all(|y| g.eval(y) <= query.c_prime * y * y * (1.0 + HYPOTHESIS_SLACK)),
        "g(y) <= c' y^2 beyond z0",
    )?;
    let dominates = |lhs: f64, rhs: f64| {
        if query.reversed {
            lhs <= rhs * (1.0 + HYPOTHESIS_SLACK)
        } else {
            lhs >= rhs * (1.0 - HYPOTHESIS_SLACK)
        }
    };
    let direction = if query.reversed { Direction::Upper } else { Direction::Lower };
    let value = match query.case {
        BoundCase::Gaussian => {
            if query.reversed {
                return Err(Error::InvalidArgument("the gaussian case has no reversed form".into()));
            }
            require(probe(0.0, x).all(|y| dominates(g.eval(y), 1.0)), "g >= 1")?;
            pref.k * (-0.5 * x * x).exp() / x
        }
        BoundCase::Power { c_second } => {
            if !(c_second > 0.0 && c_second <= query.c_prime) {
                return Err(Error::InvalidArgument(format!("need 0 < c'' <= c', got c'' = {c_second}")));
            }
            require(probe(z0, x).all(|y| dominates(g.eval(y), c_second * y * y)), "g vs c'' y^2")?;
            let a_z0 = integral_a(g, z0, tol)?;
            let k_prime = pref.k * a_z0 * z0.powf(1.0 / c_second);
            k_prime * x.powf(-1.0 - 1.0 / c_second)
        }
        BoundCase::Stretched { c1, p } => {
            if !(c1 > 0.0 && p < 2.0) {
                return Err(Error::InvalidArgument(format!("need c1 > 0 and p < 2, got c1 = {c1}, p = {p}")));
            }
            require(probe(z0, x).all(|y| dominates(g.eval(y), c1 * y.powf(p))), "g vs c1 y^p")?;
            let scale = (2.0 - p) * c1;
            let log_a_z0 = log_integral_a(g, z0, tol)?;
            let log_k2 = pref.k.ln() + log_a_z0 + z0.powf(2.0 - p) / scale;
            (log_k2 - x.powf(2.0 - p) / scale).exp() / x
        }
    };
    Ok(MenuBound { value, direction })
}

/// `(1+z²)/(1+(2c'+1)z²) · Φ̄(z)`.
pub fn stein_lower_bound(z: f64, c_prime: f64) -> Result<f64> {
    if !(z > 0.0) {
        return Err(Error::InvalidArgument(format!("z must be positive, got {z}")));
    }
    if !(0.0..1.0).contains(&c_prime) {
        return Err(Error::InvalidArgument(format!("c' must lie in [0, 1), got {c_prime}")));
    }
    let z2 = z * z;
    Ok((1.0 + z2) / (1.0 + (2.0 * c_prime + 1.0) * z2) * normal_tail(z))
}

/// Sub- and super-Gaussian envelopes at `z`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GaussianEnvelopes {
    /// `(1 + 1/z²) Φ̄(z)`, valid when `G ≤ 1`.
    pub upper_g: f64,
    /// `e^{-z²/2}`, valid when `‖DX‖² ≤ 1`.
    pub upper_dx: f64,
    /// `(c-2)/c`, the limsup floor of `P[X > z]/Φ̄(z)` under `G ≥ 1` and a
    /// finite moment of order `c > 2`.
    pub supergauss_ratio: Option<f64>,
}

pub fn thm12_envelopes(z: f64, moment_order: Option<f64>) -> Result<GaussianEnvelopes> {
    if !(z > 0.0) {
        return Err(Error::InvalidArgument(format!("z must be positive, got {z}")));
    }
    let supergauss_ratio = match moment_order {
        Some(c) if c > 2.0 => Some((c - 2.0) / c),
        Some(c) => return Err(Error::InvalidArgument(format!("moment order must exceed 2, got {c}"))),
        None => None,
    };
    Ok(GaussianEnvelopes {
        upper_g: (1.0 + 1.0 / (z * z)) * normal_tail(z),
        upper_dx: (-0.5 * z * z).exp(),
        supergauss_ratio,
    })
}

/// Universal variance floor under `G ≥ 1`: `(√(1 + 2√(2π)) - 1)² / π²`.
#[allow(non_snake_case)]
pub fn K_u() -> f64 {
    let root = (1.0 + 2.0 * crate::special::SQRT_2PI).sqrt();
    (root - 1.0).powi(2) / (std::f64::consts::PI * std::f64::consts::PI)
}

/// Both sides of `S(z) ≥ Φ̄(z) - (1+z²)^{-1} ∫_z^∞ 2x S(x) dx`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TailInequality {
    pub z: f64,
    pub lhs: f64,
    pub rhs: f64,
    /// Estimate of `∫_{z_max}^∞ 2x S(x) dx` added to the grid integral.
    pub remainder: f64,
    /// `(c-2)(1+z²)/(c-2+cz²) · Φ̄(z)` when `|S'|/S ≤ c/z` is asserted.
    pub moment_variant: Option<f64>,
}

impl TailInequality {
    pub fn holds(&self) -> bool {
        self.lhs >= self.rhs
    }
}

/// Evaluates the Stein-type tail inequality at `z` from a tail sampled on
/// an increasing grid.
///
/// The integral over `[z, z_max]` uses the trapezoid rule on the grid, with
/// `S` linearly interpolated at `z`. Beyond `z_max` the tail is continued as
/// a Gaussian tail matched at `z_max`, whose contribution is
/// `S(z_max)/Φ̄(z_max) · 2(z_max φ(z_max) + (1 - z_max²) Φ̄(z_max))/2`.
/// A tail that is zero at `z_max` contributes nothing.
pub fn tail_integral_inequality_check(
    grid: &[f64],
    tail: &[f64],
    z: f64,
    moment_order: Option<f64>,
) -> Result<TailInequality> {
    if grid.len() != tail.len() {
        return Err(Error::DimensionMismatch { expected: grid.len(), got: tail.len() });
    }
    if grid.len() < 2 || grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument("tail grid must be strictly increasing".into()));
    }
    let (lo, hi) = (grid[0], grid[grid.len() - 1]);
    if !(z >= lo && z < hi) {
        return Err(Error::InvalidArgument(format!("grid [{lo}, {hi}] does not cover z = {z}")));
    }
    if !(z > 0.0) {
        return Err(Error::InvalidArgument(format!("z must be positive, got {z}")));
    }
    let i = grid.partition_point(|&x| x <= z) - 1;
    let s_z = tail[i] + (tail[i + 1] - tail[i]) * (z - grid[i]) / (grid[i + 1] - grid[i]);
    let mut pts = vec![(z, s_z)];
    pts.extend(grid[i + 1..].iter().copied().zip(tail[i + 1..].iter().copied()));
    let body: f64 = pts.windows(2).map(|w| (w[1].0 - w[0].0) * (w[0].0 * w[0].1 + w[1].0 * w[1].1)).sum();
    let s_hi = tail[tail.len() - 1];
    let remainder = if s_hi > 0.0 {
        let gauss = hi * normal_pdf(hi) + (1.0 - hi * hi) * normal_tail(hi);
        s_hi / normal_tail(hi) * 2.0 * gauss
    } else {
        0.0
    };
    let integral = body + remainder;
    let phi_bar = normal_tail(z);
    let z2 = z * z;
    let moment_variant = match moment_order {
        Some(c) if c > 2.0 => Some((c - 2.0) * (1.0 + z2) / (c - 2.0 + c * z2) * phi_bar),
        Some(c) => return Err(Error::InvalidArgument(format!("moment order must exceed 2, got {c}"))),
        None => None,
    };
    Ok(TailInequality { z, lhs: s_z, rhs: phi_bar - integral / (1.0 + z2), remainder, moment_variant })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::special::mean_abs_standard_normal;
    use proptest::prelude::*;

    const TOL: f64 = 1e-12;

    fn chi_mean_abs() -> f64 {
        4.0 * normal_pdf(1.0)
    }

    /// Law of `W² - 1`: tail `2Φ̄(√(1+x))`, density `e^{-(1+z)/2}/√(2π(1+z))`.
    fn chi_tail(x: f64) -> f64 {
        2.0 * normal_tail((1.0 + x).sqrt())
    }

    fn chi_density(z: f64) -> f64 {
        (-(1.0 + z) / 2.0).exp() / (2.0 * std::f64::consts::PI * (1.0 + z)).sqrt()
    }

    #[test]
    fn a_for_constant_and_affine_g() {
        let g = GFunctionSpec::standard_normal();
        for &x in &[0.0, 0.5, 2.0, 5.0] {
            assert!((integral_a(&g, x, TOL).unwrap() - (-0.5 * x * x).exp()).abs() < 1e-13);
        }
        let g = GFunctionSpec::shifted_chi_square();
        for &z in &[0.3, 1.0, 7.0] {
            let want = (1.0f64 + z).sqrt() * (-z / 2.0).exp();
            assert!((integral_a(&g, z, TOL).unwrap() / want - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn a_decay_under_quadratic_ceiling() {
        // g(y) = 1 + 0.3 y² ≤ 0.5 y² for y ≥ √5, so A(kx)/A(x) ≤ k^{-2}.
        let table: Vec<f64> = (0..=400).map(|i| i as f64 * 0.25).collect();
        let vals: Vec<f64> = table.iter().map(|y| 1.0 + 0.3 * y * y).collect();
        let g = GFunctionSpec::new(GForm::Tabulated(GTable::new(table, vals, None).unwrap()), None).unwrap();
        for &(x, k) in &[(3.0, 2.0), (5.0, 3.0), (10.0, 1.5)] {
            let r = integral_a(&g, k * x, TOL).unwrap() / integral_a(&g, x, TOL).unwrap();
            assert!(r <= k.powf(-1.0 / 0.5));
        }
    }

    #[test]
    fn zero_g_is_singular() {
        let g = GFunctionSpec::new(GForm::Quadratic { c: 1.0 }, None).unwrap();
        assert!(matches!(integral_a(&g, 1.0, TOL), Err(Error::Singular { .. })));
        let g = GFunctionSpec::new(GForm::Affine { alpha: 1.0, beta: -1.0 }, None).unwrap();
        assert!(matches!(density_from_g(&g, 1.0, 1.0, TOL), Err(Error::Singular { .. })));
        assert!(matches!(density_from_g(&g, 1.0, 2.0, TOL), Err(Error::Singular { .. })));
    }

    #[test]
    fn density_matches_normal_and_chi_square() {
        let g = GFunctionSpec::standard_normal();
        for &z in &[-3.0, -0.4, 0.0, 1.0, 2.5] {
            let got = density_from_g(&g, mean_abs_standard_normal(), z, DEFAULT_TOL).unwrap();
            assert!((got - normal_pdf(z)).abs() < 1e-12);
        }
        let g = GFunctionSpec::shifted_chi_square();
        for &z in &[-0.9, -0.5, 0.0, 3.0, 10.0] {
            let got = density_from_g(&g, chi_mean_abs(), z, TOL).unwrap();
            assert!((got / chi_density(z) - 1.0).abs() < 1e-10, "z={z}");
        }
        assert!(matches!(density_from_g(&g, 1.0, -1.5, TOL), Err(Error::OutsideSupport { .. })));
    }

    #[test]
    fn densities_integrate_to_one() {
        let g = GFunctionSpec::standard_normal();
        let m = mean_abs_standard_normal();
        let total = adaptive_simpson(|z| density_from_g(&g, m, z, TOL).unwrap(), -12.0, 12.0, 1e-10).unwrap();
        assert!((total - 1.0).abs() < 1e-6);
        // Mass below -0.99 is P[|W| < 0.1], taken from the oracle.
        let g = GFunctionSpec::shifted_chi_square();
        let m = chi_mean_abs();
        let body = adaptive_simpson(|z| density_from_g(&g, m, z, TOL).unwrap(), -0.99, 60.0, 1e-10).unwrap();
        let total = body + 1.0 - 2.0 * normal_tail(0.1);
        assert!((total - 1.0).abs() < 1e-6, "{total}");
    }

    #[test]
    fn tail_matches_normal_and_chi_square() {
        let g = GFunctionSpec::standard_normal();
        for &x in &[0.5, 1.0, 2.0, 3.0] {
            let got = tail_from_g(&g, mean_abs_standard_normal(), x, DEFAULT_TOL).unwrap();
            assert!((got - normal_tail(x)).abs() < 1e-8, "x={x}");
        }
        let g = GFunctionSpec::shifted_chi_square();
        for &x in &[-0.9, 0.0, 0.5, 2.0, 10.0] {
            let got = tail_from_g(&g, chi_mean_abs(), x, DEFAULT_TOL).unwrap();
            assert!((got / chi_tail(x) - 1.0).abs() < 1e-8, "x={x}");
        }
    }

    #[test]
    fn tail_equals_integrated_density() {
        let g = GFunctionSpec::shifted_chi_square();
        let m = chi_mean_abs();
        for &x in &[0.5, 2.0] {
            let dens = adaptive_simpson(|z| density_from_g(&g, m, z, TOL).unwrap(), x, 60.0, 1e-12).unwrap();
            let tail = tail_from_g(&g, m, x, DEFAULT_TOL).unwrap();
            assert!((dens - tail).abs() < 1e-8);
        }
    }

    #[test]
    fn tail_is_nonincreasing() {
        let g = GFunctionSpec::shifted_chi_square();
        let ts: Vec<f64> = (0..40).map(|i| tail_from_g(&g, chi_mean_abs(), -0.5 + 0.3 * i as f64, DEFAULT_TOL).unwrap()).collect();
        assert!(ts.windows(2).all(|w| w[1] <= w[0]));
        assert!(ts[ts.len() - 1] < 1e-2);
    }

    #[test]
    fn prefactor_limits_and_guard() {
        let m = 0.8;
        let p = bound_cor_a_prefactor(1e-9, m).unwrap();
        assert!((p.k - m / 2.0).abs() < 1e-7);
        assert!(bound_cor_a_prefactor(1.0, m).is_err());
        assert!(bound_cor_a_prefactor(0.0, m).is_err());
    }

    #[test]
    fn prefactor_optimizer_matches_grid_search() {
        for &c in &[0.2, 0.5, 0.8] {
            let p = bound_cor_a_prefactor(c, 2.0).unwrap();
            let f = |k: f64| (1.0 - k.powf(-1.0 / c)) / k;
            let (mut best_k, mut best) = (1.0, 0.0);
            for i in 1..2_000_000 {
                let k = 1.0 + i as f64 * 2e-6;
                if f(k) > best {
                    best = f(k);
                    best_k = k;
                }
            }
            assert!((best_k - p.k_star).abs() < 1e-5, "c={c}: {best_k} vs {}", p.k_star);
            assert!((f(p.k_star) - c.powf(c) * (1.0 + c).powf(-1.0 - c)).abs() < 1e-14);
            assert!((f(p.k_star) - best).abs() < 1e-6);
        }
    }

    #[test]
    fn gaussian_menu_bound_is_below_tail() {
        let g = GFunctionSpec::standard_normal();
        let m = mean_abs_standard_normal();
        let q = MenuQuery { c_prime: 0.5, z0: 1.5, case: BoundCase::Gaussian, reversed: false };
        for &x in &[2.0, 3.0] {
            let b = lower_bound_menu(&g, m, x, &q, TOL).unwrap();
            assert_eq!(b.direction, Direction::Lower);
            assert!(b.value <= tail_from_g(&g, m, x, DEFAULT_TOL).unwrap());
        }
        // g ≤ c' y² fails just past 1 for c' = 0.5.
        let q = MenuQuery { z0: 1.1, ..q };
        assert!(lower_bound_menu(&g, m, 2.0, &q, TOL).is_err());
    }

    fn power_g(c: f64) -> GFunctionSpec {
        let prefix = GTable::new(vec![0.0, 1.0], vec![c, c], None).unwrap();
        GFunctionSpec::new(GForm::Power { c1: c, p: 2.0, z0: 1.0, prefix }, None).unwrap()
    }

    #[test]
    fn power_case_slope_and_bound() {
        let c = 0.5;
        let g = power_g(c);
        let m = 1.0;
        let xs = [10.0, 20.0, 40.0, 80.0];
        let tails: Vec<f64> = xs.iter().map(|&x| tail_from_g(&g, m, x, DEFAULT_TOL).unwrap()).collect();
        let fit = crate::stats::loglog_fit(&xs, &tails, &[1.0; 4]).unwrap();
        assert!((fit.slope - (-1.0 - 1.0 / c)).abs() < 0.05, "slope {}", fit.slope);
        let q = MenuQuery { c_prime: 0.5, z0: 1.5, case: BoundCase::Power { c_second: c }, reversed: false };
        for (&x, &t) in xs.iter().zip(&tails) {
            let b = lower_bound_menu(&g, m, x, &q, TOL).unwrap();
            assert!(b.value <= t && b.value > 0.0);
        }
    }

    #[test]
    fn reversed_flag_flips_direction() {
        let g = power_g(0.5);
        let q = MenuQuery { c_prime: 0.5, z0: 1.5, case: BoundCase::Power { c_second: 0.5 }, reversed: true };
        assert_eq!(lower_bound_menu(&g, 1.0, 3.0, &q, TOL).unwrap().direction, Direction::Upper);
        let q = MenuQuery { case: BoundCase::Gaussian, ..q };
        assert!(lower_bound_menu(&g, 1.0, 3.0, &q, TOL).is_err());
    }

    #[test]
    fn stretched_case_is_exponential_for_p_one() {
        // g(y) = y for y ≥ 2, so the bound is K'' e^{-x} / x.
        let prefix = GTable::new(vec![0.0, 2.0], vec![1.0, 2.0], None).unwrap();
        let g = GFunctionSpec::new(GForm::Power { c1: 1.0, p: 1.0, z0: 2.0, prefix }, None).unwrap();
        let q = MenuQuery { c_prime: 0.5, z0: 2.5, case: BoundCase::Stretched { c1: 1.0, p: 1.0 }, reversed: false };
        let b3 = lower_bound_menu(&g, 1.0, 3.0, &q, TOL).unwrap().value;
        let b4 = lower_bound_menu(&g, 1.0, 4.0, &q, TOL).unwrap().value;
        assert!((b4 * 4.0 / (b3 * 3.0) - (-1.0f64).exp()).abs() < 1e-12);
        assert!(b3 <= tail_from_g(&g, 1.0, 3.0, DEFAULT_TOL).unwrap());
    }

    #[test]
    fn stein_lower_bound_values() {
        assert!((stein_lower_bound(2.0, 0.5).unwrap() - 5.0 / 9.0 * normal_tail(2.0)).abs() < 1e-16);
        assert!((stein_lower_bound(1.3, 0.0).unwrap() - normal_tail(1.3)).abs() < 1e-16);
        let r = stein_lower_bound(30.0, 0.25).unwrap() / normal_tail(30.0);
        assert!((r - 1.0 / 1.5).abs() < 1e-3);
    }

    #[test]
    fn envelopes() {
        let e = thm12_envelopes(1.0, Some(4.0)).unwrap();
        assert!((e.upper_g - 2.0 * normal_tail(1.0)).abs() < 1e-16);
        assert_eq!(e.supergauss_ratio, Some(0.5));
        assert!((e.upper_dx - (-0.5f64).exp()).abs() < 1e-16);
        let e = thm12_envelopes(30.0, None).unwrap();
        assert!((e.upper_g / normal_tail(30.0) - 1.0).abs() < 2e-3);
        assert!(thm12_envelopes(0.0, None).is_err());
    }

    #[test]
    fn k_u_value() {
        let k = K_u();
        assert!((k - 0.21367).abs() < 5e-5);
        assert!(k < std::f64::consts::FRAC_PI_2.powi(2));
        assert!((2.0 * crate::special::SQRT_2PI - 5.013_256_549_262).abs() < 1e-11);
    }

    #[test]
    fn normal_tail_bracket_for_unit_g() {
        let g = GFunctionSpec::standard_normal();
        let m = mean_abs_standard_normal();
        let q = MenuQuery { c_prime: 0.5, z0: 1.5, case: BoundCase::Gaussian, reversed: false };
        for i in 0..20 {
            let x = 1.6 + 0.25 * i as f64;
            let s = tail_from_g(&g, m, x, DEFAULT_TOL).unwrap();
            assert!(s >= lower_bound_menu(&g, m, x, &q, TOL).unwrap().value);
            assert!(s <= thm12_envelopes(x, None).unwrap().upper_g);
        }
    }

    #[test]
    fn tail_inequality_on_exact_normal_holds() {
        let grid: Vec<f64> = (0..=1200).map(|i| i as f64 * 0.01).collect();
        let tail: Vec<f64> = grid.iter().map(|&x| normal_tail(x)).collect();
        for &z in &[0.5, 1.0, 2.0] {
            let r = tail_integral_inequality_check(&grid, &tail, z, Some(6.0)).unwrap();
            assert!(r.holds());
            assert!(r.lhs - r.rhs > 1e-4);
            // ∫_z^∞ 2x Φ̄ = z φ(z) + (1 - z²) Φ̄(z) in closed form.
            let exact = normal_tail(z) - (z * normal_pdf(z) + (1.0 - z * z) * normal_tail(z)) / (1.0 + z * z);
            assert!((r.rhs - exact).abs() < 1e-5);
            assert!(r.moment_variant.unwrap() <= normal_tail(z));
        }
    }

    #[test]
    fn tail_inequality_detects_truncated_law() {
        let grid: Vec<f64> = (0..=100).map(|i| 1.0 + i as f64 * 0.05).collect();
        let tail = vec![0.0; grid.len()];
        let r = tail_integral_inequality_check(&grid, &tail, 1.5, None).unwrap();
        assert_eq!(r.lhs, 0.0);
        assert!((r.rhs - normal_tail(1.5)).abs() < 1e-16);
        assert!(!r.holds());
        assert!(tail_integral_inequality_check(&grid, &tail, 0.5, None).is_err());
    }

    #[test]
    fn g_spec_json_shape() {
        let g = GFunctionSpec::shifted_chi_square();
        let s = serde_json::to_string(&g).unwrap();
        assert_eq!(s, r#"{"form":{"kind":"affine","alpha":2.0,"beta":2.0},"support_left":-1.0}"#);
        let back: GFunctionSpec = serde_json::from_str(&s).unwrap();
        assert_eq!(back, g);
        assert!(serde_json::from_str::<GFunctionSpec>(r#"{"form":{"kind":"constant","c":1,"x":2}}"#).is_err());
    }

    proptest! {
        #[test]
        fn a_is_nonincreasing_and_positive(alpha in 0.2f64..5.0, beta in 0.0f64..3.0, x in 0.0f64..6.0, dx in 0.0f64..2.0) {
            let g = GFunctionSpec::new(GForm::Affine { alpha, beta }, Some(-alpha / (beta + 1.0))).unwrap();
            let a1 = integral_a(&g, x, TOL).unwrap();
            let a2 = integral_a(&g, x + dx, TOL).unwrap();
            prop_assert!(a1 > 0.0 && a1 <= 1.0);
            prop_assert!(a2 <= a1 * (1.0 + 1e-14));
        }

        #[test]
        fn table_interpolation_stays_between_nodes(y in -2.0f64..12.0) {
            let t = GTable::new(vec![0.0, 1.0, 4.0, 10.0], vec![1.0, 3.0, 2.0, 5.0], None).unwrap();
            let v = t.eval(y);
            prop_assert!((1.0..=5.0).contains(&v));
        }
    }
}
