//! Finite Wiener chaos over a `d`-dimensional standard Gaussian vector `w`.
//!
//! A [`ChaosRV`] is `Σ_α c_α Π_i He_{α_i}(w_i)` with probabilists' Hermite
//! polynomials. The Hilbert space is `ℝ^d` with the Euclidean product, so
//! `D_i` is the partial derivative in `w_i` and `-L⁻¹` divides the
//! coefficient of `α` by `|α| = Σ α_i`. Products are re-expanded with the
//! Hermite linearisation formula in exact integer arithmetic, which keeps
//! `G = ⟨DX, -DL⁻¹X⟩` and `‖DX‖²` as exact polynomials.

use std::collections::BTreeMap;
use std::ops::{Add, Mul, Neg, Sub};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian_stein::Sampler;
use crate::stats::StreamRng;

pub mod verify;

/// Multi-index `α ∈ ℕ^d`.
pub type MultiIndex = Vec<u32>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ChaosJson", into = "ChaosJson")]
pub struct ChaosRV {
    dim: usize,
    terms: BTreeMap<MultiIndex, f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TermJson {
    alpha: MultiIndex,
    coeff: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ChaosJson {
    dim: usize,
    terms: Vec<TermJson>,
}

impl From<ChaosRV> for ChaosJson {
    fn from(rv: ChaosRV) -> Self {
        ChaosJson {
            dim: rv.dim,
            terms: rv.terms.into_iter().map(|(alpha, coeff)| TermJson { alpha, coeff }).collect(),
        }
    }
}

impl TryFrom<ChaosJson> for ChaosRV {
    type Error = Error;

    fn try_from(j: ChaosJson) -> Result<Self> {
        ChaosRV::from_terms(j.dim, j.terms.into_iter().map(|t| (t.alpha, t.coeff)))
    }
}

/// `He_0(x), ..., He_n(x)` by the three-term recurrence.
fn hermite_table(x: f64, n: usize) -> Vec<f64> {
    let mut h = Vec::with_capacity(n + 1);
    h.push(1.0);
    if n >= 1 {
        h.push(x);
    }
    for k in 2..=n {
        let next = x * h[k - 1] - (k - 1) as f64 * h[k - 2];
        h.push(next);
    }
    h
}

/// `He_n(x)`.
pub fn hermite(n: u32, x: f64) -> f64 {
    hermite_table(x, n as usize)[n as usize]
}

fn factorial(n: u32) -> Result<u128> {
    (1..=n as u128).try_fold(1u128, |acc, k| acc.checked_mul(k)).ok_or(Error::Overflow)
}

fn binomial(n: u32, k: u32) -> Result<u128> {
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k as u128 {
        acc = acc.checked_mul(n as u128 - i).ok_or(Error::Overflow)? / (i + 1);
    }
    Ok(acc)
}

/// `He_m He_n = Σ_k C(m,k) C(n,k) k! He_{m+n-2k}` as `(degree, weight)`.
fn linearize(m: u32, n: u32) -> Result<Vec<(u32, u128)>> {
    (0..=m.min(n))
        .map(|k| {
            let w = binomial(m, k)?
                .checked_mul(binomial(n, k)?)
                .and_then(|v| v.checked_mul(factorial(k).ok()?))
                .ok_or(Error::Overflow)?;
            Ok((m + n - 2 * k, w))
        })
        .collect()
}

/// `E[Π He_{α_i}(w_i)²] = Π α_i!`.
fn norm_sq(alpha: &[u32]) -> Result<f64> {
    alpha.iter().try_fold(1.0, |acc, &a| Ok(acc * factorial(a)? as f64))
}

fn order(alpha: &[u32]) -> u32 {
    alpha.iter().sum()
}

impl ChaosRV {
    pub fn zero(dim: usize) -> Self {
        assert!(dim > 0, "chaos dimension must be positive");
        ChaosRV { dim, terms: BTreeMap::new() }
    }

    pub fn constant(dim: usize, c: f64) -> Self {
        let mut rv = Self::zero(dim);
        rv.push(vec![0; dim], c);
        rv
    }

    /// `He_n(w_i)`.
    pub fn hermite(dim: usize, i: usize, n: u32) -> Self {
        assert!(i < dim, "coordinate {i} out of range for dimension {dim}");
        let mut alpha = vec![0; dim];
        alpha[i] = n;
        let mut rv = Self::zero(dim);
        rv.push(alpha, 1.0);
        rv
    }

    /// `w_i`.
    pub fn coordinate(dim: usize, i: usize) -> Self {
        Self::hermite(dim, i, 1)
    }

    pub fn from_terms<I>(dim: usize, terms: I) -> Result<Self>
    where
        I: IntoIterator<Item = (MultiIndex, f64)>,
    {
        if dim == 0 {
            return Err(Error::InvalidArgument("chaos dimension must be positive".into()));
        }
        let mut rv = Self::zero(dim);
        for (alpha, c) in terms {
            if alpha.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: alpha.len() });
            }
            if !c.is_finite() {
                return Err(Error::InvalidArgument(format!("non-finite coefficient for {alpha:?}")));
            }
            rv.push(alpha, c);
        }
        Ok(rv)
    }

    fn push(&mut self, alpha: MultiIndex, c: f64) {
        let e = self.terms.entry(alpha).or_insert(0.0);
        *e += c;
    }

    fn pruned(mut self) -> Self {
        self.terms.retain(|_, c| *c != 0.0);
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn terms(&self) -> impl Iterator<Item = (&MultiIndex, f64)> {
        self.terms.iter().map(|(a, &c)| (a, c))
    }

    pub fn coefficient(&self, alpha: &[u32]) -> f64 {
        self.terms.get(alpha).copied().unwrap_or(0.0)
    }

    /// Coefficient of the constant term, i.e. the mean.
    pub fn mean(&self) -> f64 {
        self.terms.iter().filter(|(a, _)| order(a) == 0).map(|(_, c)| c).sum()
    }

    pub fn is_centered(&self) -> bool {
        self.mean() == 0.0
    }

    /// Highest total degree carrying a nonzero coefficient.
    pub fn degree(&self) -> u32 {
        self.terms.iter().filter(|(_, c)| **c != 0.0).map(|(a, _)| order(a)).max().unwrap_or(0)
    }

    /// `Some(n)` when every nonzero term lies in the `n`-th chaos.
    pub fn chaos_order(&self) -> Option<u32> {
        let mut orders = self.terms.iter().filter(|(_, c)| **c != 0.0).map(|(a, _)| order(a));
        let first = orders.next()?;
        orders.all(|o| o == first).then_some(first)
    }

    pub fn eval(&self, w: &[f64]) -> Result<f64> {
        if w.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: w.len() });
        }
        let max_deg = self.terms.keys().flat_map(|a| a.iter().copied()).max().unwrap_or(0) as usize;
        let tables: Vec<Vec<f64>> = w.iter().map(|&x| hermite_table(x, max_deg)).collect();
        Ok(self
            .terms
            .iter()
            .map(|(alpha, c)| c * alpha.iter().enumerate().map(|(i, &a)| tables[i][a as usize]).product::<f64>())
            .sum())
    }

    /// Mean and variance from orthogonality: `Var = Σ_{α≠0} c_α² α!`.
    pub fn moments(&self) -> Result<(f64, f64)> {
        let mut var = 0.0;
        for (alpha, c) in &self.terms {
            if order(alpha) > 0 {
                var += c * c * norm_sq(alpha)?;
            }
        }
        Ok((self.mean(), var))
    }

    /// `E[XY] = Σ_α c_α d_α α!`.
    pub fn inner(&self, other: &ChaosRV) -> Result<f64> {
        self.check_dim(other)?;
        let mut s = 0.0;
        for (alpha, c) in &self.terms {
            if let Some(d) = other.terms.get(alpha) {
                s += c * d * norm_sq(alpha)?;
            }
        }
        Ok(s)
    }

    fn check_dim(&self, other: &ChaosRV) -> Result<()> {
        if self.dim == other.dim {
            Ok(())
        } else {
            Err(Error::DimensionMismatch { expected: self.dim, got: other.dim })
        }
    }

    /// `D_i X`: lowers `α_i` by one and multiplies by `α_i`.
    pub fn derivative(&self, i: usize) -> ChaosRV {
        let mut out = ChaosRV::zero(self.dim);
        for (alpha, c) in &self.terms {
            if alpha[i] > 0 {
                let mut beta = alpha.clone();
                beta[i] -= 1;
                out.push(beta, c * alpha[i] as f64);
            }
        }
        out.pruned()
    }

    /// `DX` as a vector of chaos variables.
    pub fn malliavin_derivative(&self) -> HVector {
        HVector { components: (0..self.dim).map(|i| self.derivative(i)).collect() }
    }

    /// `-L⁻¹X`: each coefficient divided by its chaos order.
    pub fn inverse_ou(&self) -> Result<ChaosRV> {
        let m = self.mean();
        if m != 0.0 {
            return Err(Error::NotCentered(m));
        }
        let mut out = ChaosRV::zero(self.dim);
        for (alpha, c) in &self.terms {
            let n = order(alpha);
            if n > 0 {
                out.push(alpha.clone(), c / n as f64);
            }
        }
        Ok(out.pruned())
    }

    /// Exact product, re-expanded in the Hermite basis.
    pub fn try_mul(&self, other: &ChaosRV) -> Result<ChaosRV> {
        self.check_dim(other)?;
        let mut out = ChaosRV::zero(self.dim);
        for (a, ca) in &self.terms {
            for (b, cb) in &other.terms {
                let mut partial: Vec<(MultiIndex, u128)> = vec![(Vec::with_capacity(self.dim), 1)];
                for i in 0..self.dim {
                    let lin = linearize(a[i], b[i])?;
                    let mut next = Vec::with_capacity(partial.len() * lin.len());
                    for (idx, w) in &partial {
                        for &(deg, lw) in &lin {
                            let mut idx = idx.clone();
                            idx.push(deg);
                            next.push((idx, w.checked_mul(lw).ok_or(Error::Overflow)?));
                        }
                    }
                    partial = next;
                }
                for (idx, w) in partial {
                    out.push(idx, ca * cb * w as f64);
                }
            }
        }
        Ok(out.pruned())
    }

    /// `G = Σ_i D_iX · D_i(-L⁻¹X)`.
    pub fn gamma_g(&self) -> Result<ChaosRV> {
        let dx = self.malliavin_derivative();
        let dl = self.inverse_ou()?.malliavin_derivative();
        dx.dot(&dl)
    }

    /// `‖DX‖² = Σ_i (D_iX)²`.
    pub fn norm_dx_squared(&self) -> Result<ChaosRV> {
        let dx = self.malliavin_derivative();
        dx.dot(&dx)
    }

    pub fn scale(&self, a: f64) -> ChaosRV {
        ChaosRV { dim: self.dim, terms: self.terms.iter().map(|(k, c)| (k.clone(), a * c)).collect() }.pruned()
    }

    fn combine(&self, other: &ChaosRV, sign: f64) -> ChaosRV {
        assert_eq!(self.dim, other.dim, "chaos dimensions differ");
        let mut out = self.clone();
        for (alpha, c) in &other.terms {
            out.push(alpha.clone(), sign * c);
        }
        out.pruned()
    }

    /// One draw of `w ~ N(0, I_d)`.
    pub fn draw_point(&self, rng: &mut StreamRng) -> Vec<f64> {
        (0..self.dim).map(|_| rng.sample(StandardNormal)).collect()
    }
}

impl Add for &ChaosRV {
    type Output = ChaosRV;
    fn add(self, rhs: &ChaosRV) -> ChaosRV {
        self.combine(rhs, 1.0)
    }
}

impl Sub for &ChaosRV {
    type Output = ChaosRV;
    fn sub(self, rhs: &ChaosRV) -> ChaosRV {
        self.combine(rhs, -1.0)
    }
}

impl Mul<f64> for &ChaosRV {
    type Output = ChaosRV;
    fn mul(self, a: f64) -> ChaosRV {
        self.scale(a)
    }
}

impl Neg for &ChaosRV {
    type Output = ChaosRV;
    fn neg(self) -> ChaosRV {
        self.scale(-1.0)
    }
}

impl Sampler for ChaosRV {
    fn sample(&self, rng: &mut StreamRng) -> f64 {
        let w = self.draw_point(rng);
        self.eval(&w).expect("point drawn with matching dimension")
    }
}

/// Element of `ℝ^d` whose components are chaos variables.
#[derive(Clone, Debug, PartialEq)]
pub struct HVector {
    pub components: Vec<ChaosRV>,
}

impl HVector {
    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn eval(&self, w: &[f64]) -> Result<Vec<f64>> {
        self.components.iter().map(|c| c.eval(w)).collect()
    }

    /// `Σ_i U_i V_i` as an exact chaos variable.
    pub fn dot(&self, other: &HVector) -> Result<ChaosRV> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: other.dim() });
        }
        let dim = self.components.first().map_or(1, ChaosRV::dim);
        let mut acc = ChaosRV::zero(dim);
        for (u, v) in self.components.iter().zip(&other.components) {
            acc = &acc + &u.try_mul(v)?;
        }
        Ok(acc)
    }
}
