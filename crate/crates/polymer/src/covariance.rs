//! Spatial covariances on the periodic lattice `ℤ/pℤ`.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{PolymerError, Result};

/// Eigenvalues above `-PSD_TOL · q0` count as zero.
const PSD_TOL: f64 = 1e-10;
/// Cholesky pivots at or below `PIVOT_TOL · q0` are treated as exact zeros.
const PIVOT_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CovarianceKind {
    /// `Q ≡ q` on `p` sites: every site sees the same noise.
    Constant { q: f64, p: usize },
    /// `Q(j, k) = a + b cos(2π(j-k)/p)`.
    CircleCosine { a: f64, b: f64, p: usize },
    /// Arbitrary symmetric kernel, row-major rows.
    Kernel { matrix: Vec<Vec<f64>> },
}

/// Materialised covariance with a lower-triangular factor `L L^T = Q`.
#[derive(Clone, Debug)]
pub struct Covariance {
    pub kind: CovarianceKind,
    p: usize,
    q: Vec<f64>,
    factor: Vec<f64>,
    /// Columns of `factor` that carry a nonzero pivot.
    rank_cols: Vec<usize>,
    /// `max_x Q(x, x)`.
    pub q0: f64,
    /// `min_{x,y} Q(x, y)`.
    pub qm: f64,
}

impl Covariance {
    pub fn sites(&self) -> usize {
        self.p
    }

    pub fn at(&self, j: usize, k: usize) -> f64 {
        self.q[j * self.p + k]
    }

    /// Row-major `p × p` matrix.
    pub fn matrix(&self) -> &[f64] {
        &self.q
    }

    pub fn rank(&self) -> usize {
        self.rank_cols.len()
    }

    /// `out = L z` for a vector `z` of length `rank()`.
    pub fn apply_factor(&self, z: &[f64], out: &mut [f64]) {
        debug_assert_eq!(z.len(), self.rank_cols.len());
        for (i, o) in out.iter_mut().enumerate() {
            *o = self
                .rank_cols
                .iter()
                .zip(z)
                .take_while(|(&c, _)| c <= i)
                .map(|(&c, &zc)| self.factor[i * self.p + c] * zc)
                .sum();
        }
    }
}

fn materialise(kind: &CovarianceKind) -> Result<(usize, Vec<f64>)> {
    match kind {
        CovarianceKind::Constant { q, p } => {
            if *p < 2 || !(q.is_finite() && *q >= 0.0) {
                return Err(PolymerError::InvalidArgument(format!("constant covariance needs p >= 2, q >= 0 (got p = {p}, q = {q})")));
            }
            Ok((*p, vec![*q; p * p]))
        }
        CovarianceKind::CircleCosine { a, b, p } => {
            if *p < 2 || !(a.is_finite() && b.is_finite() && *b >= 0.0 && a >= b) {
                return Err(PolymerError::InvalidArgument(format!(
                    "circle-cosine covariance needs p >= 2 and a >= b >= 0 (got a = {a}, b = {b}, p = {p})"
                )));
            }
            let mut q = vec![0.0; p * p];
            for j in 0..*p {
                for k in 0..*p {
                    // Lattice distance keeps the matrix bitwise symmetric.
                    let d = ((j + p - k) % p).min((k + p - j) % p);
                    q[j * p + k] = a + b * (2.0 * std::f64::consts::PI * d as f64 / *p as f64).cos();
                }
            }
            Ok((*p, q))
        }
        CovarianceKind::Kernel { matrix } => {
            let p = matrix.len();
            if p < 2 || matrix.iter().any(|r| r.len() != p) {
                return Err(PolymerError::InvalidArgument("kernel must be a square matrix with p >= 2".into()));
            }
            let q: Vec<f64> = matrix.iter().flatten().copied().collect();
            if q.iter().any(|v| !v.is_finite()) {
                return Err(PolymerError::InvalidArgument("kernel entries must be finite".into()));
            }
            for j in 0..p {
                for k in 0..j {
                    let (x, y) = (q[j * p + k], q[k * p + j]);
                    if (x - y).abs() > 1e-12 * x.abs().max(y.abs()).max(1.0) {
                        return Err(PolymerError::InvalidArgument(format!("kernel is not symmetric at ({j}, {k})")));
                    }
                }
            }
            Ok((p, q))
        }
    }
}

/// Materialises `Q`, checks it is positive semidefinite through its
/// spectrum and factors it by a Cholesky sweep that zeroes vanishing pivots,
/// so rank-deficient kernels (a constant `Q`, the three-mode circle cosine)
/// are factored exactly without jitter.
pub fn build_covariance(kind: CovarianceKind) -> Result<Covariance> {
    let (p, q) = materialise(&kind)?;
    let q0 = (0..p).map(|i| q[i * p + i]).fold(f64::NEG_INFINITY, f64::max);
    let qm = q.iter().copied().fold(f64::INFINITY, f64::min);
    let scale = q0.max(f64::MIN_POSITIVE);
    let eig = SymmetricEigen::new(DMatrix::from_row_slice(p, p, &q));
    if let Some((index, &eigenvalue)) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .filter(|(_, &e)| e < -PSD_TOL * scale)
    {
        return Err(PolymerError::NotPsd { eigenvalue, index });
    }
    let mut l = vec![0.0; p * p];
    let mut rank_cols = Vec::new();
    for j in 0..p {
        let d = q[j * p + j] - (0..j).map(|k| l[j * p + k] * l[j * p + k]).sum::<f64>();
        if d <= PIVOT_TOL * scale {
            continue;
        }
        let ljj = d.sqrt();
        l[j * p + j] = ljj;
        for i in j + 1..p {
            let s = q[i * p + j] - (0..j).map(|k| l[i * p + k] * l[j * p + k]).sum::<f64>();
            l[i * p + j] = s / ljj;
        }
        rank_cols.push(j);
    }
    Ok(Covariance { kind, p, q, factor: l, rank_cols, q0, qm })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reconstruct(c: &Covariance) -> Vec<f64> {
        let p = c.sites();
        let mut out = vec![0.0; p * p];
        for i in 0..p {
            for j in 0..p {
                out[i * p + j] = (0..p).map(|k| c.factor[i * p + k] * c.factor[j * p + k]).sum();
            }
        }
        out
    }

    #[test]
    fn constant_kernel() {
        let c = build_covariance(CovarianceKind::Constant { q: 1.0, p: 8 }).unwrap();
        assert_eq!((c.q0, c.qm, c.rank()), (1.0, 1.0, 1));
        let mut out = vec![0.0; 8];
        c.apply_factor(&[0.37], &mut out);
        assert!(out.iter().all(|&v| v == out[0]));
    }

    #[test]
    fn circle_cosine_extremes_and_rank() {
        let c = build_covariance(CovarianceKind::CircleCosine { a: 1.0, b: 0.5, p: 16 }).unwrap();
        assert!((c.q0 - 1.5).abs() < 1e-15);
        assert!((c.qm - 0.5).abs() < 1e-15);
        assert_eq!(c.rank(), 3);
        for (x, y) in reconstruct(&c).iter().zip(c.matrix()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    /// Circulant eigenvalues are the DFT of the first row:
    /// `λ_m = Σ_d Q(d) cos(2π m d / p)`.
    #[test]
    fn circle_cosine_spectrum_is_nonnegative() {
        for &(a, b, p) in &[(1.0, 0.5, 16usize), (0.08, 0.02, 16), (1.0, 1.0, 7)] {
            let c = build_covariance(CovarianceKind::CircleCosine { a, b, p }).unwrap();
            for m in 0..p {
                let lam: f64 = (0..p)
                    .map(|d| c.at(0, d) * (2.0 * std::f64::consts::PI * (m * d) as f64 / p as f64).cos())
                    .sum();
                assert!(lam > -1e-12, "a={a} b={b} p={p} m={m}: {lam}");
            }
        }
    }

    #[test]
    fn rejects_indefinite_kernel() {
        let k = CovarianceKind::Kernel { matrix: vec![vec![1.0, 2.0], vec![2.0, 1.0]] };
        match build_covariance(k) {
            Err(PolymerError::NotPsd { eigenvalue, .. }) => assert!((eigenvalue + 1.0).abs() < 1e-12),
            other => panic!("expected NotPsd, got {other:?}"),
        }
        assert!(build_covariance(CovarianceKind::CircleCosine { a: 0.5, b: 1.0, p: 8 }).is_err());
        assert!(build_covariance(CovarianceKind::Kernel { matrix: vec![vec![1.0, 0.2], vec![0.3, 1.0]] }).is_err());
    }

    #[test]
    fn full_rank_kernel_factor() {
        let m = vec![vec![2.0, 0.5, 0.1], vec![0.5, 1.0, 0.2], vec![0.1, 0.2, 1.5]];
        let c = build_covariance(CovarianceKind::Kernel { matrix: m }).unwrap();
        assert_eq!(c.rank(), 3);
        assert_eq!((c.q0, c.qm), (2.0, 0.1));
        for (x, y) in reconstruct(&c).iter().zip(c.matrix()) {
            assert!((x - y).abs() < 1e-14);
        }
    }

    #[test]
    fn json_tags() {
        let k: CovarianceKind = serde_json::from_str(r#"{"kind":"circle_cosine","a":1,"b":0.5,"p":16}"#).unwrap();
        assert_eq!(k, CovarianceKind::CircleCosine { a: 1.0, b: 0.5, p: 16 });
        assert!(serde_json::from_str::<CovarianceKind>(r#"{"kind":"constant","q":1,"p":4,"r":2}"#).is_err());
    }
}
