//! Estimation utilities shared by the verification suites and the polymer
//! simulation: jackknife variance errors, empirical CDFs with DKW bands,
//! weighted log-log regression and hash-derived RNG streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Generator behind every stream.
pub type StreamRng = ChaCha8Rng;

/// Unbiased (`n-1`) sample variance and its leave-one-out jackknife
/// standard error. With exactly two samples the jackknife is undefined and
/// the error is reported as NaN.
pub fn sample_variance(xs: &[f64]) -> Result<(f64, f64)> {
    let n = xs.len();
    if n < 2 {
        return Err(Error::InvalidArgument(format!("variance needs at least 2 samples, got {n}")));
    }
    let nf = n as f64;
    let mean = xs.iter().sum::<f64>() / nf;
    let centered: Vec<f64> = xs.iter().map(|x| x - mean).collect();
    let s1: f64 = centered.iter().sum();
    let s2: f64 = centered.iter().map(|d| d * d).sum();
    let var = (s2 - s1 * s1 / nf) / (nf - 1.0);
    if n == 2 {
        return Ok((var, f64::NAN));
    }
    let m = nf - 1.0;
    let loo: Vec<f64> = centered
        .iter()
        .map(|&d| {
            let a = s1 - d;
            let b = s2 - d * d;
            ((b - a * a / m) / (m - 1.0)).max(0.0)
        })
        .collect();
    let loo_mean = loo.iter().sum::<f64>() / nf;
    let ss: f64 = loo.iter().map(|v| (v - loo_mean).powi(2)).sum();
    Ok((var, ((nf - 1.0) / nf * ss).sqrt()))
}

/// Mean and standard error of the mean.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Dvoretzky–Kiefer–Wolfowitz confidence band for an empirical CDF.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DkwBand {
    pub level: f64,
    pub n: usize,
    pub halfwidth: f64,
}

impl DkwBand {
    pub fn new(level: f64, n: usize) -> Result<Self> {
        if !(level > 0.0 && level < 1.0) || n == 0 {
            return Err(Error::InvalidArgument(format!("DKW band needs level in (0,1) and n > 0 (level {level}, n {n})")));
        }
        let halfwidth = ((2.0 / (1.0 - level)).ln() / (2.0 * n as f64)).sqrt();
        Ok(Self { level, n, halfwidth })
    }

    /// Band around a probability, clipped to `[0, 1]`.
    pub fn around(&self, p: f64) -> (f64, f64) {
        ((p - self.halfwidth).max(0.0), (p + self.halfwidth).min(1.0))
    }
}

/// Right-continuous empirical CDF over a sorted copy of the sample.
#[derive(Debug, Clone)]
pub struct Ecdf {
    sorted: Vec<f64>,
}

impl Ecdf {
    pub fn new(xs: &[f64]) -> Result<Self> {
        if xs.iter().any(|x| x.is_nan()) {
            return Err(Error::InvalidArgument("NaN in ECDF sample".into()));
        }
        let mut sorted = xs.to_vec();
        sorted.sort_by(f64::total_cmp);
        Ok(Self { sorted })
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    /// `#{x_i <= x} / n`.
    pub fn cdf(&self, x: f64) -> f64 {
        let k = self.sorted.partition_point(|&v| v <= x);
        k as f64 / self.sorted.len() as f64
    }

    /// `#{x_i > x} / n`.
    pub fn tail(&self, x: f64) -> f64 {
        1.0 - self.cdf(x)
    }

    pub fn samples(&self) -> &[f64] {
        &self.sorted
    }
}

/// ECDF of `xs` together with its DKW band at confidence `level`.
pub fn empirical_cdf_band(xs: &[f64], level: f64) -> Result<(Ecdf, DkwBand)> {
    if xs.len() < 20 {
        return Err(Error::InvalidArgument(format!("ECDF band needs at least 20 samples, got {}", xs.len())));
    }
    Ok((Ecdf::new(xs)?, DkwBand::new(level, xs.len())?))
}

/// Weighted least squares line through `(ln t, ln v)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogLogFit {
    pub slope: f64,
    pub intercept: f64,
    pub stderr: f64,
    pub r2: f64,
}

pub fn loglog_fit(ts: &[f64], vals: &[f64], weights: &[f64]) -> Result<LogLogFit> {
    let n = ts.len();
    if n < 3 || vals.len() != n || weights.len() != n {
        return Err(Error::InvalidArgument(format!(
            "log-log fit needs >= 3 matching points (t {}, v {}, w {})",
            n,
            vals.len(),
            weights.len()
        )));
    }
    if ts.iter().chain(vals).any(|&v| !(v > 0.0) || !v.is_finite()) {
        return Err(Error::InvalidArgument("log-log fit needs strictly positive finite inputs".into()));
    }
    if weights.iter().any(|&w| !(w > 0.0) || !w.is_finite()) {
        return Err(Error::InvalidArgument("log-log fit weights must be positive".into()));
    }
    let x: Vec<f64> = ts.iter().map(|t| t.ln()).collect();
    let y: Vec<f64> = vals.iter().map(|v| v.ln()).collect();
    let sw: f64 = weights.iter().sum();
    let xm = x.iter().zip(weights).map(|(a, w)| a * w).sum::<f64>() / sw;
    let ym = y.iter().zip(weights).map(|(a, w)| a * w).sum::<f64>() / sw;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for i in 0..n {
        let dx = x[i] - xm;
        let dy = y[i] - ym;
        sxx += weights[i] * dx * dx;
        sxy += weights[i] * dx * dy;
        syy += weights[i] * dy * dy;
    }
    if sxx == 0.0 {
        return Err(Error::InvalidArgument("log-log fit needs distinct abscissae".into()));
    }
    let slope = sxy / sxx;
    let intercept = ym - slope * xm;
    let rss: f64 = (0..n).map(|i| weights[i] * (y[i] - intercept - slope * x[i]).powi(2)).sum();
    let stderr = (rss / (n as f64 - 2.0) / sxx).sqrt();
    let r2 = if syy > 0.0 { 1.0 - rss / syy } else { 1.0 };
    Ok(LogLogFit { slope, intercept, stderr, r2 })
}

/// Identity of an independent random stream: a master seed plus a
/// `(label, index)` pair. The generator seed is the SHA-256 digest of all
/// three, so distinct identities give unrelated ChaCha keys and the same
/// identity always reproduces the same stream regardless of thread
/// scheduling.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
    pub master_seed: u64,
    pub label: String,
    pub index: u64,
}

impl RngStream {
    pub fn key(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update(b"chaostail-stream-v1");
        h.update(self.master_seed.to_le_bytes());
        h.update((self.label.len() as u64).to_le_bytes());
        h.update(self.label.as_bytes());
        h.update(self.index.to_le_bytes());
        let digest = h.finalize();
        let mut key = [0u8; 32];
        key.copy_from_slice(&digest);
        key
    }

    pub fn rng(&self) -> StreamRng {
        StreamRng::from_seed(self.key())
    }

    /// A child stream, e.g. one per environment under a run-level stream.
    pub fn child(&self, label: &str, index: u64) -> RngStream {
        let key = self.key();
        let mut seed = [0u8; 8];
        seed.copy_from_slice(&key[..8]);
        RngStream { master_seed: u64::from_le_bytes(seed), label: label.to_string(), index }
    }
}

pub fn derive_stream(master: u64, label: &str, index: u64) -> RngStream {
    RngStream { master_seed: master, label: label.to_string(), index }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn variance_of_two_points() {
        let (v, _) = sample_variance(&[0.0, 2.0]).unwrap();
        assert_eq!(v, 2.0);
    }

    #[test]
    fn constant_sample_has_zero_variance_and_error() {
        let (v, se) = sample_variance(&[3.5; 50]).unwrap();
        assert_eq!(v, 0.0);
        assert_eq!(se, 0.0);
    }

    #[test]
    fn short_sample_rejected() {
        assert!(sample_variance(&[1.0]).is_err());
    }

    #[test]
    fn normal_sample_variance_within_four_se() {
        let mut rng = derive_stream(7, "var-test", 0).rng();
        let xs: Vec<f64> = (0..10_000).map(|_| rng.sample(StandardNormal)).collect();
        let (v, se) = sample_variance(&xs).unwrap();
        assert!((v - 1.0).abs() < 4.0 * se, "var {v} se {se}");
        // jackknife se of a normal variance is about sqrt(2/n)
        assert!((se - (2.0f64 / 1e4).sqrt()).abs() < 0.003);
    }

    #[test]
    fn jackknife_error_shrinks_with_n() {
        let mut rng = derive_stream(8, "var-test", 0).rng();
        let xs: Vec<f64> = (0..40_000).map(|_| rng.sample(StandardNormal)).collect();
        let (_, se_small) = sample_variance(&xs[..1_000]).unwrap();
        let (_, se_big) = sample_variance(&xs).unwrap();
        assert!(se_big < se_small / 4.0);
    }

    #[test]
    fn dkw_halfwidth_formula() {
        let b = DkwBand::new(0.99, 200).unwrap();
        let want = ((2.0f64 / 0.01).ln() / 400.0).sqrt();
        assert!((b.halfwidth - want).abs() < 1e-15);
        assert!((b.halfwidth - 0.1151).abs() < 1e-4);
        assert!(DkwBand::new(0.99, 800).unwrap().halfwidth < b.halfwidth);
    }

    #[test]
    fn ecdf_basic_properties() {
        let xs: Vec<f64> = (0..50).map(|i| ((i * 37) % 50) as f64 * 0.1).collect();
        let (e, _) = empirical_cdf_band(&xs, 0.99).unwrap();
        assert_eq!(e.cdf(4.9), 1.0);
        assert_eq!(e.cdf(-1.0), 0.0);
        let mut prev = 0.0;
        for k in 0..100 {
            let c = e.cdf(k as f64 * 0.06 - 0.5);
            assert!(c >= prev);
            prev = c;
        }
        assert!(empirical_cdf_band(&xs[..10], 0.99).is_err());
    }

    #[test]
    fn exact_power_laws() {
        let ts = [1.0, 2.0, 4.0, 8.0, 16.0];
        let w = [1.0; 5];
        let lin: Vec<f64> = ts.iter().map(|t| 3.0 * t).collect();
        let f = loglog_fit(&ts, &lin, &w).unwrap();
        assert!((f.slope - 1.0).abs() < 1e-12 && (f.r2 - 1.0).abs() < 1e-12);
        let sq: Vec<f64> = ts.iter().map(|t| t * t).collect();
        assert!((loglog_fit(&ts, &sq, &w).unwrap().slope - 2.0).abs() < 1e-12);
    }

    #[test]
    fn noisy_linear_fit() {
        let mut rng = derive_stream(9, "fit", 0).rng();
        let ts: Vec<f64> = (0..8).map(|k| 2f64.powi(k)).collect();
        let vs: Vec<f64> = ts
            .iter()
            .map(|t| t * (1.0 + 0.05 * rng.sample::<f64, _>(StandardNormal)))
            .collect();
        let f = loglog_fit(&ts, &vs, &[1.0; 8]).unwrap();
        assert!((0.9..=1.1).contains(&f.slope), "slope {}", f.slope);
    }

    #[test]
    fn fit_rejects_bad_input() {
        assert!(loglog_fit(&[1.0, 2.0], &[1.0, 2.0], &[1.0, 1.0]).is_err());
        assert!(loglog_fit(&[1.0, 2.0, 3.0], &[1.0, 0.0, 2.0], &[1.0; 3]).is_err());
    }

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: u64 = derive_stream(1, "env", 3).rng().random();
        let b: u64 = derive_stream(1, "env", 3).rng().random();
        let c: u64 = derive_stream(1, "env", 4).rng().random();
        let d: u64 = derive_stream(1, "paths", 3).rng().random();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, d);
    }

    #[test]
    fn streams_are_uncorrelated() {
        let n = 10_000;
        let mut r1 = derive_stream(42, "x", 0).rng();
        let mut r2 = derive_stream(42, "x", 1).rng();
        let xs: Vec<f64> = (0..n).map(|_| r1.random::<f64>() - 0.5).collect();
        let ys: Vec<f64> = (0..n).map(|_| r2.random::<f64>() - 0.5).collect();
        let cov: f64 = xs.iter().zip(&ys).map(|(x, y)| x * y).sum::<f64>() / n as f64;
        let corr = cov / (1.0 / 12.0);
        assert!(corr.abs() < 4.0 / (n as f64).sqrt(), "corr {corr}");
    }
}
