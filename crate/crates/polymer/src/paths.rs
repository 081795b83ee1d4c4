//! Lazy symmetric nearest-neighbour walk on `ℤ/pℤ`.
//!
//! One step consumes two random bits: `00` and `01` stay, `10` moves left,
//! `11` moves right, so the step law is `(1/2, 1/4, 1/4)` with mean zero and
//! variance `1/2`. One walk step is taken per time step `dt`, so the walk's
//! diffusive constant in physical time is `1/(2 dt)`.

use chaostail_core::stats::{derive_stream, StreamRng};
use rand::RngCore;

use crate::error::{PolymerError, Result};

/// Streams two-bit walk steps out of 64-bit words.
pub struct Walker<'a> {
    rng: &'a mut StreamRng,
    word: u64,
    left: u32,
}

impl<'a> Walker<'a> {
    pub fn new(rng: &'a mut StreamRng) -> Self {
        Self { rng, word: 0, left: 0 }
    }

    /// Step offset in `{p-1, 0, 1}` (that is, `-1, 0, +1` modulo `p`).
    #[inline]
    pub fn step(&mut self, p: usize) -> usize {
        if self.left == 0 {
            self.word = self.rng.next_u64();
            self.left = 32;
        }
        let bits = self.word & 3;
        self.word >>= 2;
        self.left -= 1;
        match bits {
            2 => p - 1,
            3 => 1,
            _ => 0,
        }
    }

    /// Fills `sites` with the positions at the start of each step, from 0.
    pub fn fill(&mut self, p: usize, sites: &mut [u32]) {
        let mut x = 0usize;
        for s in sites.iter_mut() {
            *s = x as u32;
            x = (x + self.step(p)) % p;
        }
    }
}

/// `n_b` independent walks of `n_t` steps, row `j` holding the start-of-step
/// positions of walk `j`.
#[derive(Clone, Debug, PartialEq)]
pub struct PathEnsemble {
    pub p: usize,
    pub n_t: usize,
    pub n_b: usize,
    sites: Vec<u32>,
}

impl PathEnsemble {
    pub fn path(&self, j: usize) -> &[u32] {
        &self.sites[j * self.n_t..(j + 1) * self.n_t]
    }

    pub fn paths(&self) -> impl ExactSizeIterator<Item = &[u32]> {
        self.sites.chunks_exact(self.n_t)
    }
}

/// Draws from the stream `(seed, "paths", 0)`.
pub fn sample_paths(p: usize, n_t: usize, n_b: usize, seed: u64) -> Result<PathEnsemble> {
    sample_paths_with(p, n_t, n_b, &mut derive_stream(seed, "paths", 0).rng())
}

pub fn sample_paths_with(p: usize, n_t: usize, n_b: usize, rng: &mut StreamRng) -> Result<PathEnsemble> {
    if p < 2 || n_t == 0 || n_b == 0 {
        return Err(PolymerError::InvalidArgument(format!("paths need p >= 2, n_t >= 1, n_b >= 1 (got {p}, {n_t}, {n_b})")));
    }
    let mut sites = vec![0u32; n_b * n_t];
    let mut walker = Walker::new(rng);
    for row in sites.chunks_exact_mut(n_t) {
        walker.fill(p, row);
    }
    Ok(PathEnsemble { p, n_t, n_b, sites })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn offset(a: u32, b: u32, p: usize) -> i64 {
        let d = (b as i64 - a as i64).rem_euclid(p as i64);
        if d > p as i64 / 2 { d - p as i64 } else { d }
    }

    #[test]
    fn one_step_from_origin_on_four_sites() {
        let e = sample_paths(4, 2, 500, 1).unwrap();
        let mut seen = [false; 4];
        for path in e.paths() {
            assert_eq!(path[0], 0);
            seen[path[1] as usize] = true;
        }
        assert_eq!(seen, [true, true, false, true]);
    }

    /// Enumerating the step law gives mean 0 and variance
    /// `(1/4)(-1)² + (1/4)(1)² = 1/2`.
    #[test]
    fn step_moments() {
        let law = [(-1.0, 0.25), (0.0, 0.5), (1.0, 0.25)];
        let mean: f64 = law.iter().map(|(x, w)| x * w).sum();
        let var: f64 = law.iter().map(|(x, w)| x * x * w).sum::<f64>() - mean * mean;
        assert_eq!((mean, var), (0.0, 0.5));

        let p = 64;
        let e = sample_paths(p, 201, 2000, 5).unwrap();
        let steps: Vec<f64> = e
            .paths()
            .flat_map(|path| path.windows(2).map(move |w| offset(w[0], w[1], p) as f64))
            .collect();
        let n = steps.len() as f64;
        let m = steps.iter().sum::<f64>() / n;
        let v = steps.iter().map(|s| s * s).sum::<f64>() / n - m * m;
        assert!(m.abs() < 5.0 * (0.5 / n).sqrt());
        // Squared steps are Bernoulli(1/2), so their variance is 1/4.
        assert!((v - 0.5).abs() < 5.0 * (0.25 / n).sqrt());
    }

    #[test]
    fn steps_are_nearest_neighbour() {
        let p = 5;
        let e = sample_paths(p, 300, 20, 2).unwrap();
        for path in e.paths() {
            for w in path.windows(2) {
                assert!(offset(w[0], w[1], p).abs() <= 1);
            }
        }
    }

    /// The lazy walk is doubly stochastic, so its stationary law is uniform.
    /// Positions at step `n_t - 1 ≫ p²` are compared to `1/p` per site.
    #[test]
    fn occupation_tends_to_uniform() {
        let (p, n_t, n_b) = (5, 400, 20_000);
        let e = sample_paths(p, n_t, n_b, 8).unwrap();
        let mut counts = vec![0usize; p];
        for path in e.paths() {
            counts[path[n_t - 1] as usize] += 1;
        }
        let se = ((1.0 / p as f64) * (1.0 - 1.0 / p as f64) / n_b as f64).sqrt();
        for c in counts {
            assert!((c as f64 / n_b as f64 - 1.0 / p as f64).abs() < 5.0 * se);
        }
    }

    #[test]
    fn deterministic_given_seed() {
        assert_eq!(sample_paths(7, 30, 10, 4).unwrap(), sample_paths(7, 30, 10, 4).unwrap());
    }
}
