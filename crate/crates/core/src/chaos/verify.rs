//! Monte Carlo checks of the chaos identities, each paired with its exact
//! value from coefficient arithmetic where one exists.
//!
//! Draws are split into fixed-size chunks, chunk `k` reading the stream
//! `(seed, label, k)`, so results depend only on `(seed, n)`.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use super::{ChaosRV, HVector};
use crate::error::{Error, Result};
use crate::quadrature::split_theta_rule;
use crate::report::{ConfidenceBand, TailReport};
use crate::stats::{derive_stream, mean_se, DkwBand, Ecdf, StreamRng};
use crate::tail_engine::{GForm, GFunctionSpec, GTable};

const CHUNK: usize = 1 << 16;

/// Calls `f` once per Gaussian point, `n` times in total.
fn for_each_point(dim: usize, n: usize, seed: u64, label: &str, mut f: impl FnMut(&[f64], &mut StreamRng)) {
    let mut w = vec![0.0; dim];
    for chunk in 0..n.div_ceil(CHUNK) {
        let mut rng = derive_stream(seed, label, chunk as u64).rng();
        let len = CHUNK.min(n - chunk * CHUNK);
        for _ in 0..len {
            for x in w.iter_mut() {
                *x = rng.sample(StandardNormal);
            }
            f(&w, &mut rng);
        }
    }
}

/// Running sums for the mean and standard error of a paired difference.
#[derive(Default)]
struct Paired {
    n: f64,
    lhs: f64,
    rhs: f64,
    d1: f64,
    d2: f64,
}

impl Paired {
    fn push(&mut self, l: f64, r: f64) {
        let d = l - r;
        self.n += 1.0;
        self.lhs += l;
        self.rhs += r;
        self.d1 += d;
        self.d2 += d * d;
    }

    fn finish(&self, check: &str, seed: u64) -> VerificationRecord {
        let n = self.n;
        let var = ((self.d2 - self.d1 * self.d1 / n) / (n - 1.0)).max(0.0);
        VerificationRecord {
            check: check.to_string(),
            lhs: self.lhs / n,
            rhs: self.rhs / n,
            se: (var / n).sqrt(),
            n: n as usize,
            seed,
        }
    }
}

/// Two Monte Carlo means of the same draws and the standard error of
/// their difference.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VerificationRecord {
    pub check: String,
    pub lhs: f64,
    pub rhs: f64,
    pub se: f64,
    pub n: usize,
    pub seed: u64,
}

/// Absorbs rounding when the paired difference is identically zero.
const ROUNDING_FLOOR: f64 = 1e-12;

impl VerificationRecord {
    pub fn gap(&self) -> f64 {
        (self.lhs - self.rhs).abs()
    }

    pub fn agrees(&self, k: f64) -> bool {
        self.gap() <= k * self.se + ROUNDING_FLOOR * self.lhs.abs().max(1.0)
    }
}

/// Test function `h` with its derivative.
#[derive(Clone, Copy, Debug)]
pub enum TestFunction {
    Identity,
    Tanh,
    Custom { name: &'static str, h: fn(f64) -> f64, dh: fn(f64) -> f64 },
}

impl TestFunction {
    pub fn name(&self) -> &'static str {
        match self {
            TestFunction::Identity => "identity",
            TestFunction::Tanh => "tanh",
            TestFunction::Custom { name, .. } => name,
        }
    }

    pub fn h(&self, x: f64) -> f64 {
        match self {
            TestFunction::Identity => x,
            TestFunction::Tanh => x.tanh(),
            TestFunction::Custom { h, .. } => h(x),
        }
    }

    pub fn dh(&self, x: f64) -> f64 {
        match self {
            TestFunction::Identity => 1.0,
            TestFunction::Tanh => 1.0 - x.tanh().powi(2),
            TestFunction::Custom { dh, .. } => dh(x),
        }
    }

    /// `sup |h'|` on `[-10, 10]` and `[-10⁴, 10⁴]`; a derivative that keeps
    /// growing between the two windows is treated as unbounded.
    fn check_bounded(&self) -> Result<()> {
        let sup = |r: f64| {
            (0..=20_000).map(|i| self.dh(-r + 2.0 * r * i as f64 / 20_000.0).abs()).fold(0.0, f64::max)
        };
        let (near, far) = (sup(10.0), sup(1e4));
        if far.is_finite() && far <= 2.0 * near + 1e-12 {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "h' of {} looks unbounded (sup {near} on [-10, 10], {far} on [-1e4, 1e4])",
                self.name()
            )))
        }
    }
}

/// `E[X h(X)] = E[h'(X) G]` by Monte Carlo, `n ≥ 10⁵`.
pub fn verify_lemkey(rv: &ChaosRV, h: TestFunction, n: usize, seed: u64) -> Result<VerificationRecord> {
    if n < 100_000 {
        return Err(Error::InvalidArgument(format!("need n >= 1e5 draws, got {n}")));
    }
    h.check_bounded()?;
    let g = rv.gamma_g()?;
    let mut acc = Paired::default();
    for_each_point(rv.dim(), n, seed, "lemkey", |w, _| {
        let x = rv.eval(w).expect("dimension checked");
        let gv = g.eval(w).expect("dimension checked");
        acc.push(x * h.h(x), h.dh(x) * gv);
    });
    Ok(acc.finish(&format!("lemkey/{}", h.name()), seed))
}

/// `E[G]` and `Var X` from coefficients; equal for every centered `X`.
pub fn exact_gamma_identity(rv: &ChaosRV) -> Result<(f64, f64)> {
    let g = rv.gamma_g()?;
    Ok((g.mean(), rv.moments()?.1))
}

/// Monte Carlo and exact sides of `E[I_n(f_n) Y] = n⁻¹ E[⟨D I_n(f_n), DY⟩]`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LemskoReport {
    pub mc: VerificationRecord,
    pub exact_lhs: f64,
    pub exact_rhs: f64,
}

pub fn verify_lemsko(fn_rv: &ChaosRV, y: &ChaosRV, n_mc: usize, seed: u64) -> Result<LemskoReport> {
    if fn_rv.dim() != y.dim() {
        return Err(Error::DimensionMismatch { expected: fn_rv.dim(), got: y.dim() });
    }
    let order = match fn_rv.chaos_order() {
        Some(k) if k >= 1 => k,
        _ => return Err(Error::NotHomogeneous(fn_rv.degree() as usize)),
    };
    if n_mc < 2 {
        return Err(Error::InvalidArgument("need at least two draws".into()));
    }
    let inv = 1.0 / order as f64;
    let df = fn_rv.malliavin_derivative();
    let dy = y.malliavin_derivative();
    let exact_lhs = fn_rv.inner(y)?;
    let exact_rhs = inv
        * df.components.iter().zip(&dy.components).map(|(a, b)| a.inner(b)).sum::<Result<f64>>()?;
    let mut acc = Paired::default();
    for_each_point(fn_rv.dim(), n_mc, seed, "lemsko", |w, _| {
        let f = fn_rv.eval(w).expect("dimension checked");
        let yv = y.eval(w).expect("dimension checked");
        let a = df.eval(w).expect("dimension checked");
        let b = dy.eval(w).expect("dimension checked");
        acc.push(f * yv, inv * a.iter().zip(&b).map(|(p, q)| p * q).sum::<f64>());
    });
    Ok(LemskoReport { mc: acc.finish("lemsko", seed), exact_lhs, exact_rhs })
}

/// Mehler-type estimate of `-DL⁻¹X` at a point, next to the exact value.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MehlerEstimate {
    pub at: Vec<f64>,
    pub estimate: Vec<f64>,
    pub se: Vec<f64>,
    pub exact: Vec<f64>,
    pub theta_nodes_per_half: usize,
    pub n_mc: usize,
    pub seed: u64,
}

impl MehlerEstimate {
    /// Every component within `k·se + quad_tol` of the exact value.
    pub fn agrees(&self, k: f64, quad_tol: f64) -> bool {
        self.estimate.iter().zip(&self.se).zip(&self.exact).all(|((e, s), x)| (e - x).abs() <= k * s + quad_tol)
    }
}

/// `-D_i L⁻¹X(w) ≈ ½ ∫ sgn(θ) sin θ E'[∂_i X(w cos θ + w' sin θ)] dθ`.
///
/// The θ integral uses Gauss–Legendre on each half of `[-π/2, π/2]`; `E'`
/// averages over `n_mc` independent `w'`, and the standard error is taken
/// across those draws.
pub fn mehler_minus_dl_inv(
    rv: &ChaosRV,
    at: &[f64],
    theta_nodes_per_half: usize,
    n_mc: usize,
    seed: u64,
) -> Result<MehlerEstimate> {
    let d = rv.dim();
    if at.len() != d {
        return Err(Error::DimensionMismatch { expected: d, got: at.len() });
    }
    if theta_nodes_per_half < 16 {
        return Err(Error::InvalidArgument(format!("need at least 16 theta nodes per half, got {theta_nodes_per_half}")));
    }
    if n_mc < 2 {
        return Err(Error::InvalidArgument("need at least two w' draws".into()));
    }
    let exact = rv.inverse_ou()?.malliavin_derivative().eval(at)?;
    let grad: HVector = rv.malliavin_derivative();
    let rule = split_theta_rule(theta_nodes_per_half);
    let mut per_draw: Vec<Vec<f64>> = vec![Vec::with_capacity(n_mc); d];
    let mut point = vec![0.0; d];
    for_each_point(d, n_mc, seed, "mehler", |wp, _| {
        let mut v = vec![0.0; d];
        for &(theta, weight) in &rule {
            let (s, c) = theta.sin_cos();
            for i in 0..d {
                point[i] = at[i] * c + wp[i] * s;
            }
            let g = grad.eval(&point).expect("dimension checked");
            for i in 0..d {
                v[i] += 0.5 * weight * s * g[i];
            }
        }
        for i in 0..d {
            per_draw[i].push(v[i]);
        }
    });
    let (estimate, se) = per_draw.iter().map(|xs| mean_se(xs)).unzip();
    Ok(MehlerEstimate { at: at.to_vec(), estimate, se, exact, theta_nodes_per_half, n_mc, seed })
}

/// `½ ∫ sgn(θ) sin θ cosⁿ θ dθ` over `[-π/2, π/2]` with the split rule;
/// the exact value is `1/(n+1)`.
pub fn mehler_weight_moment(n: u32, theta_nodes_per_half: usize) -> f64 {
    split_theta_rule(theta_nodes_per_half).iter().map(|&(t, w)| 0.5 * w * t.sin() * t.cos().powi(n as i32)).sum()
}

/// Empirical `P[|X - EX| > u]` against `2 e^{-u²/(2σ²)}` where `‖DX‖ ≤ σ`.
///
/// `σ` is certified only when `‖DX‖²` is a constant polynomial; any
/// non-constant polynomial is unbounded on `ℝ^d`, so nothing else can be
/// certified. A violation is a grid point whose DKW lower band (level 0.99)
/// exceeds the envelope.
pub fn subgaussian_check(rv: &ChaosRV, u_grid: &[f64], n_mc: usize, seed: u64) -> Result<(f64, TailReport)> {
    let nd = rv.norm_dx_squared()?;
    if nd.degree() != 0 {
        return Err(Error::Uncertifiable(format!(
            "|DX|^2 is a polynomial of degree {} and has no finite supremum",
            nd.degree()
        )));
    }
    let sigma = nd.mean().max(0.0).sqrt();
    if sigma == 0.0 {
        return Err(Error::Degenerate("X is constant".into()));
    }
    let mean = rv.mean();
    let mut dev = Vec::with_capacity(n_mc);
    for_each_point(rv.dim(), n_mc, seed, "subgauss", |w, _| {
        dev.push((rv.eval(w).expect("dimension checked") - mean).abs());
    });
    let ecdf = Ecdf::new(&dev)?;
    let band = DkwBand::new(0.99, n_mc)?;
    let tail: Vec<f64> = u_grid.iter().map(|&u| ecdf.tail(u)).collect();
    let envelope: Vec<f64> = u_grid.iter().map(|&u| 2.0 * (-u * u / (2.0 * sigma * sigma)).exp()).collect();
    let (lo, hi): (Vec<f64>, Vec<f64>) = tail.iter().map(|&t| band.around(t)).unzip();
    let mut report = TailReport::new(u_grid.to_vec(), tail)?;
    report.add_envelope("subgaussian", envelope.clone())?;
    for (i, &u) in u_grid.iter().enumerate() {
        if lo[i] > envelope[i] {
            report.flag("subgaussian", u);
        }
    }
    report.set_band(ConfidenceBand { level: band.level, lo, hi })?;
    Ok((sigma, report))
}

/// Binned estimate of `g(z) = E[G | X = z]` plus `E|X|`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GEstimate {
    pub g: GFunctionSpec,
    pub counts: Vec<usize>,
    pub mean_abs: f64,
    pub mean_abs_se: f64,
    pub n: usize,
    pub seed: u64,
}

/// Equal-count binning of `(X, G)` pairs sorted by `X`. Each node is the
/// within-bin mean of `X`; its value is the within-bin mean of `G` with a
/// standard error. The support's left end is the smallest sampled `X`.
pub fn estimate_g(rv: &ChaosRV, n: usize, bins: usize, seed: u64) -> Result<GEstimate> {
    if n < 10_000 || bins < 10 {
        return Err(Error::InvalidArgument(format!("need n >= 1e4 and bins >= 10, got n = {n}, bins = {bins}")));
    }
    let g = rv.gamma_g()?;
    let mut pairs = Vec::with_capacity(n);
    for_each_point(rv.dim(), n, seed, "estimate-g", |w, _| {
        pairs.push((rv.eval(w).expect("dimension checked"), g.eval(w).expect("dimension checked")));
    });
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    if pairs[0].0 == pairs[n - 1].0 {
        return Err(Error::Degenerate("X is constant on every draw".into()));
    }
    let abs: Vec<f64> = pairs.iter().map(|p| p.0.abs()).collect();
    let (mean_abs, mean_abs_se) = mean_se(&abs);
    let mut grid = Vec::with_capacity(bins);
    let mut values = Vec::with_capacity(bins);
    let mut se = Vec::with_capacity(bins);
    let mut counts = Vec::with_capacity(bins);
    for b in 0..bins {
        let slice = &pairs[b * n / bins..(b + 1) * n / bins];
        let xs: Vec<f64> = slice.iter().map(|p| p.0).collect();
        let gs: Vec<f64> = slice.iter().map(|p| p.1).collect();
        grid.push(mean_se(&xs).0);
        let (m, s) = mean_se(&gs);
        values.push(m.max(0.0));
        se.push(s);
        counts.push(slice.len());
    }
    let left = pairs[0].0;
    if left >= 0.0 {
        return Err(Error::Degenerate(format!("smallest sample {left} is not negative; X is not centered")));
    }
    let table = GTable::new(grid, values, Some(se)).map_err(|e| Error::Degenerate(format!("bins do not separate: {e}")))?;
    Ok(GEstimate {
        g: GFunctionSpec::new(GForm::Tabulated(table), Some(left))?,
        counts,
        mean_abs,
        mean_abs_se,
        n,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn w1() -> ChaosRV {
        ChaosRV::coordinate(2, 0)
    }

    fn he2() -> ChaosRV {
        ChaosRV::hermite(2, 0, 2)
    }

    #[test]
    fn lemkey_first_chaos_identity() {
        let r = verify_lemkey(&w1(), TestFunction::Identity, 100_000, 1).unwrap();
        assert_eq!(r.rhs, 1.0);
        assert!(r.agrees(4.0), "{r:?}");
    }

    #[test]
    fn lemkey_second_chaos_tanh() {
        let r = verify_lemkey(&he2(), TestFunction::Tanh, 200_000, 2).unwrap();
        assert!(r.agrees(4.0), "{r:?}");
        assert_eq!(exact_gamma_identity(&he2()).unwrap(), (2.0, 2.0));
    }

    #[test]
    fn lemkey_rejects_unbounded_derivative_and_small_n() {
        let cube = TestFunction::Custom { name: "cube", h: |x| x * x * x, dh: |x| 3.0 * x * x };
        assert!(verify_lemkey(&w1(), cube, 100_000, 0).is_err());
        assert!(verify_lemkey(&w1(), TestFunction::Tanh, 10, 0).is_err());
    }

    #[test]
    fn lemsko_examples() {
        let r = verify_lemsko(&he2(), &he2(), 100_000, 3).unwrap();
        assert_eq!((r.exact_lhs, r.exact_rhs), (2.0, 2.0));
        assert!(r.mc.agrees(4.0));
        let y = ChaosRV::hermite(2, 1, 3);
        let r = verify_lemsko(&he2(), &y, 50_000, 3).unwrap();
        assert_eq!((r.exact_lhs, r.exact_rhs), (0.0, 0.0));
        assert!(r.mc.agrees(4.0));
        let r = verify_lemsko(&w1(), &ChaosRV::coordinate(2, 1), 50_000, 3).unwrap();
        assert_eq!((r.exact_lhs, r.exact_rhs), (0.0, 0.0));
        assert!(r.mc.agrees(4.0));
        assert!(matches!(verify_lemsko(&(&w1() + &he2()), &w1(), 100, 0), Err(Error::NotHomogeneous(_))));
    }

    #[test]
    fn mehler_first_and_second_chaos() {
        let m = mehler_minus_dl_inv(&w1(), &[0.3, -1.0], 16, 64, 4).unwrap();
        assert!((m.estimate[0] - 1.0).abs() < 1e-13 && m.se[0] < 1e-13);
        assert_eq!(m.exact, vec![1.0, 0.0]);
        let m = mehler_minus_dl_inv(&he2(), &[0.7, 0.2], 16, 20_000, 4).unwrap();
        assert_eq!(m.exact, vec![0.7, 0.0]);
        assert!(m.agrees(4.0, 1e-8), "{m:?}");
    }

    #[test]
    fn mehler_weight_moments() {
        for n in 0..=6 {
            assert!((mehler_weight_moment(n, 16) - 1.0 / (n as f64 + 1.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn subgaussian_examples() {
        let grid: Vec<f64> = (0..30).map(|i| 0.1 * i as f64).collect();
        let (s, r) = subgaussian_check(&w1(), &grid, 20_000, 5).unwrap();
        assert_eq!(s, 1.0);
        assert!(r.violations.is_empty());
        let x = &(&ChaosRV::coordinate(2, 0) + &ChaosRV::coordinate(2, 1)) * std::f64::consts::FRAC_1_SQRT_2;
        let (s, r) = subgaussian_check(&x, &grid, 20_000, 5).unwrap();
        assert!((s - 1.0).abs() < 1e-15);
        assert!(r.violations.is_empty());
        assert!(matches!(subgaussian_check(&he2(), &grid, 1000, 5), Err(Error::Uncertifiable(_))));
    }

    #[test]
    fn estimated_g_of_first_chaos_is_one() {
        let est = estimate_g(&w1(), 100_000, 20, 6).unwrap();
        let GForm::Tabulated(t) = &est.g.form else { panic!("tabulated expected") };
        let se = t.se.as_ref().unwrap();
        for (v, s) in t.values.iter().zip(se) {
            assert!((v - 1.0).abs() <= 3.0 * s + 1e-12);
        }
        assert!(estimate_g(&w1(), 100, 20, 0).is_err());
    }

    #[test]
    fn estimated_g_of_second_chaos_is_affine() {
        let est = estimate_g(&he2(), 100_000, 20, 7).unwrap();
        let GForm::Tabulated(t) = &est.g.form else { panic!("tabulated expected") };
        // Given X = z, w₁² = 1 + z and G = 2 w₁², so bin means obey 2(1 + x̄).
        for (x, v) in t.grid.iter().zip(&t.values) {
            assert!((v - 2.0 * (1.0 + x)).abs() < 1e-9 * v.max(1.0));
        }
    }
}
