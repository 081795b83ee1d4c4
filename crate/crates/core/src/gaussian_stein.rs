//! Closed-form solution of Stein's equation `f'(x) - x f(x) = h(x) - E h(Z)`
//! for the indicator `h = 1_{(-inf, z]}`, its derivative, and the Monte
//! Carlo tail identity that follows from substituting a random variable.
//!
//! The solution is
//!
//! ```text
//! f(x) = sqrt(2pi) e^{x^2/2} (1 - Phi_bar(x)) Phi_bar(z)   for x <= z
//! f(x) = sqrt(2pi) e^{x^2/2} (1 - Phi_bar(z)) Phi_bar(x)   for x >  z
//! ```
//!
//! Both branches are evaluated as products of bounded Mills ratios and, where
//! one factor would grow like `e^{x^2/2}`, with the Gaussian factors merged
//! into a single `e^{(x^2 - z^2)/2} <= 1`. This keeps every value finite and
//! accurate for `|x|` up to 38.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
pub use crate::special::normal_tail;
use crate::special::{mills_ratio, normal_cdf};
use crate::stats::{derive_stream, StreamRng};

/// Cutoff `z` of the indicator test function `1_{(-inf, z]}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SteinThreshold(f64);

impl SteinThreshold {
    pub fn new(z: f64) -> Result<Self> {
        if z.is_finite() {
            Ok(Self(z))
        } else {
            Err(Error::InvalidArgument(format!("Stein threshold must be finite, got {z}")))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// Two-sided bracket on the normal tail at a positive abscissa.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MillsBracket {
    pub lower: f64,
    pub upper: f64,
}

impl MillsBracket {
    pub fn contains(&self, p: f64) -> bool {
        self.lower <= p && p <= self.upper
    }
}

/// `x phi(x)/(x^2+1) <= Phi_bar(x) <= phi(x)/x`, valid for every `x > 0`.
pub fn mills_bounds(x: f64) -> Result<MillsBracket> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::InvalidArgument(format!("Mills bounds need x > 0, got {x}")));
    }
    let phi = crate::special::normal_pdf(x);
    Ok(MillsBracket { lower: x * phi / (x * x + 1.0), upper: phi / x })
}

/// `sqrt(2pi) e^{x^2/2} (1 - Phi_bar(x)) Phi_bar(z)`, the `x <= z` branch,
/// evaluated for any `x` with `x <= z` or `x <= 0`.
fn left_branch(z: f64, x: f64) -> f64 {
    if x <= 0.0 {
        mills_ratio(-x) * normal_tail(z)
    } else {
        // 0 < x <= z: the growth of e^{x^2/2} is cancelled by e^{-z^2/2}.
        normal_cdf(x) * mills_ratio(z) * (0.5 * (x - z) * (x + z)).exp()
    }
}

/// `sqrt(2pi) e^{x^2/2} (1 - Phi_bar(z)) Phi_bar(x)`, the `x > z` branch.
fn right_branch(z: f64, x: f64) -> f64 {
    if x >= 0.0 {
        mills_ratio(x) * normal_cdf(z)
    } else {
        // z < x < 0
        normal_tail(x) * mills_ratio(-z) * (0.5 * (x - z) * (x + z)).exp()
    }
}

/// The Stein solution `f_z(x)`.
pub fn stein_solution(z: SteinThreshold, x: f64) -> f64 {
    let z = z.0;
    if x <= z {
        left_branch(z, x)
    } else {
        right_branch(z, x)
    }
}

/// `f'` from the left-branch formula `Phi_bar(z)(1 + sqrt(2pi)(1 - Phi_bar(x)) x e^{x^2/2})`.
/// Equal to the derivative for `x < z` and to the left limit at `x = z`.
pub fn stein_derivative_left(z: SteinThreshold, x: f64) -> f64 {
    let z = z.0;
    if x <= 0.0 {
        normal_tail(z) * (1.0 + x * mills_ratio(-x))
    } else {
        normal_tail(z) + x * left_branch(z, x)
    }
}

/// `f'` from the right-branch formula `(1 - Phi_bar(z))(-1 + sqrt(2pi) Phi_bar(x) x e^{x^2/2})`.
/// Equal to the derivative for `x > z` and to the right limit at `x = z`.
pub fn stein_derivative_right(z: SteinThreshold, x: f64) -> f64 {
    let z = z.0;
    if x >= 0.0 {
        normal_cdf(z) * (-1.0 + x * mills_ratio(x))
    } else {
        -normal_cdf(z) + x * right_branch(z, x)
    }
}

/// `f'(x)` away from the jump point `x = z`.
pub fn stein_derivative(z: SteinThreshold, x: f64) -> Result<f64> {
    let zv = z.0;
    if x < zv {
        Ok(stein_derivative_left(z, x))
    } else if x > zv {
        Ok(stein_derivative_right(z, x))
    } else {
        Err(Error::JumpPoint { z: zv })
    }
}

/// `[1_{x<=z} - (1 - Phi_bar(z))] - [f'(x) - x f(x)]`; zero up to rounding.
pub fn stein_residual(z: SteinThreshold, x: f64) -> Result<f64> {
    let d = stein_derivative(z, x)?;
    let h = if x <= z.0 { 1.0 } else { 0.0 };
    Ok((h - normal_cdf(z.0)) - (d - x * stein_solution(z, x)))
}

/// A source of i.i.d. real samples.
pub trait Sampler {
    fn sample(&self, rng: &mut StreamRng) -> f64;
}

/// Standard normal samples.
#[derive(Debug, Clone, Copy, Default)]
pub struct StandardNormalSampler;

impl Sampler for StandardNormalSampler {
    fn sample(&self, rng: &mut StreamRng) -> f64 {
        rng.sample(StandardNormal)
    }
}

/// Always returns the same value; exists to exercise the degeneracy guard.
#[derive(Debug, Clone, Copy)]
pub struct ConstantSampler(pub f64);

impl Sampler for ConstantSampler {
    fn sample(&self, _rng: &mut StreamRng) -> f64 {
        self.0
    }
}

/// Monte Carlo record of `P[X > z] = Phi_bar(z) - E f'(X) + E[X f(X)]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailIdentityRecord {
    pub z: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub se: f64,
    pub n: usize,
    pub seed: u64,
}

/// Both sides are sample means of the same draws, so they differ only by
/// rounding; this floor keeps a zero standard error (e.g. `z` far in the
/// tail) from turning that rounding into a failure.
pub const ROUNDING_FLOOR: f64 = 1e-12;

impl TailIdentityRecord {
    pub fn gap(&self) -> f64 {
        (self.lhs - self.rhs).abs()
    }

    /// `|lhs - rhs| <= k se` (plus [`ROUNDING_FLOOR`]).
    pub fn within(&self, k: f64) -> bool {
        self.gap() <= k * self.se + ROUNDING_FLOOR
    }
}

pub fn tail_identity_mc<S: Sampler + ?Sized>(sampler: &S, z: f64, n: usize, seed: u64) -> Result<TailIdentityRecord> {
    if n < 1000 {
        return Err(Error::InvalidArgument(format!("tail identity needs n >= 1000, got {n}")));
    }
    let thr = SteinThreshold::new(z)?;
    let mut rng = derive_stream(seed, "tail-identity", 0).rng();
    let tz = normal_tail(z);
    let (mut l1, mut l2, mut r1, mut r2) = (0.0, 0.0, 0.0, 0.0);
    let (mut x1, mut x2) = (0.0, 0.0);
    let first = sampler.sample(&mut rng);
    let mut shift_seen = false;
    for i in 0..n {
        let x = if i == 0 { first } else { sampler.sample(&mut rng) };
        if x != first {
            shift_seen = true;
        }
        let ind = if x > z { 1.0 } else { 0.0 };
        let d = if x <= z { stein_derivative_left(thr, x) } else { stein_derivative_right(thr, x) };
        let r = tz - d + x * stein_solution(thr, x);
        l1 += ind;
        l2 += ind * ind;
        r1 += r;
        r2 += r * r;
        let c = x - first;
        x1 += c;
        x2 += c * c;
    }
    let nf = n as f64;
    if !shift_seen || x2 - x1 * x1 / nf <= 0.0 {
        return Err(Error::Degenerate("sampler has zero variance".into()));
    }
    let se_of = |s1: f64, s2: f64| (((s2 - s1 * s1 / nf) / (nf - 1.0)).max(0.0) / nf).sqrt();
    Ok(TailIdentityRecord {
        z,
        lhs: l1 / nf,
        rhs: r1 / nf,
        se: se_of(l1, l2).max(se_of(r1, r2)),
        n,
        seed,
    })
}
