//! Monte Carlo laws of `∫|G|` and `∫|G⁽ⁱ⁾ − G⁽ʲ⁾|` for a centered Gaussian
//! process `G` with a given grid covariance.

use std::fmt;
use std::str::FromStr;

use nalgebra::{Cholesky, DMatrix, SymmetricEigen};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::distance::ceil_rank;
use crate::error::{Error, Result};
use crate::kernels::GridCovariance;
use crate::rng::stream_rng;

/// Draw count used when none is given.
pub const DEFAULT_DRAWS: usize = 10_000;

/// Draws per random stream. Each block has its own stream, so the
/// ensemble does not depend on the worker count.
const BLOCK: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LimitMode {
    /// `∫|G|` with `G ~ GP(0, Σ)`.
    OneSample,
    /// `∫|G⁽ⁱ⁾ − G⁽ʲ⁾|`, i.e. `∫|Z|` with `Z ~ GP(0, 2Σ)`.
    Pairwise,
}

impl fmt::Display for LimitMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::OneSample => "one-sample",
            Self::Pairwise => "pairwise",
        })
    }
}

impl FromStr for LimitMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "one-sample" => Ok(Self::OneSample),
            "pairwise" => Ok(Self::Pairwise),
            other => Err(Error::Parse(format!("unknown limit mode '{other}'"))),
        }
    }
}

/// `factor·factorᵀ = Σ + jitter·I`.
#[derive(Debug, Clone)]
pub struct FactorizedCovariance {
    pub factor: DMatrix<f64>,
    pub jitter_used: f64,
}

/// Cholesky with escalating diagonal jitter, then an eigenvalue square-root
/// factor as the last resort.
pub fn factorize(cov: &GridCovariance) -> Result<FactorizedCovariance> {
    let sigma = cov.matrix();
    let j = cov.size();
    let scale = sigma.trace() / j as f64;
    let tol = 1e-8 * sigma.amax().max(1.0);

    let mut attempts = vec![0.0];
    if scale > 0.0 {
        let mut jitter = 1e-12 * scale;
        while jitter <= 1e-6 * scale * (1.0 + 1e-9) {
            attempts.push(jitter);
            jitter *= 10.0;
        }
    }
    for jitter in attempts {
        let mut m = sigma.clone();
        for d in 0..j {
            m[(d, d)] += jitter;
        }
        if let Some(ch) = Cholesky::new(m) {
            let factor = ch.unpack();
            if reconstruction_error(&factor, sigma) <= tol + jitter {
                return Ok(FactorizedCovariance { factor, jitter_used: jitter });
            }
        }
    }

    let eig = SymmetricEigen::try_new(sigma.clone(), f64::EPSILON, 0)
        .ok_or_else(|| Error::numerical("eigendecomposition of the covariance did not converge"))?;
    let min_eig = eig.eigenvalues.min();
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    let factor = &eig.eigenvectors * DMatrix::from_diagonal(&roots);
    let err = reconstruction_error(&factor, sigma);
    if err <= tol + (-min_eig).max(0.0) {
        return Ok(FactorizedCovariance { factor, jitter_used: 0.0 });
    }
    Err(Error::numerical(format!(
        "covariance could not be factorized: smallest eigenvalue {min_eig:e}, largest {:e}, reconstruction error {err:e}",
        eig.eigenvalues.max()
    )))
}

fn reconstruction_error(factor: &DMatrix<f64>, sigma: &DMatrix<f64>) -> f64 {
    (factor * factor.transpose() - sigma).amax()
}

/// `Σ_j (|v_j| + |v_{j+1}|)/2 · (s_{j+1} − s_j)`.
pub fn trapezoid_abs(values: &[f64], grid: &[f64]) -> f64 {
    debug_assert_eq!(values.len(), grid.len());
    values
        .windows(2)
        .zip(grid.windows(2))
        .map(|(v, s)| 0.5 * (v[0].abs() + v[1].abs()) * (s[1] - s[0]))
        .sum()
}

/// Sorted Monte Carlo draws of a limit functional.
#[derive(Debug, Clone, PartialEq)]
pub struct LimitEnsemble {
    draws: Vec<f64>,
    mode: LimitMode,
    grid: Vec<f64>,
    seed: u64,
}

/// Draws `n` realizations of the limit functional for `cov`.
pub fn simulate_limit(cov: &GridCovariance, mode: LimitMode, n: usize, seed: u64) -> Result<LimitEnsemble> {
    if n == 0 {
        return Err(Error::invalid("the limit ensemble needs at least one draw"));
    }
    let fac = factorize(cov)?;
    let mut factor = fac.factor;
    if mode == LimitMode::Pairwise {
        factor *= std::f64::consts::SQRT_2;
    }
    let grid = cov.grid();
    let j = grid.len();
    let blocks = n.div_ceil(BLOCK);
    let parts: Vec<Vec<f64>> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let size = BLOCK.min(n - b * BLOCK);
            let mut rng = stream_rng(seed, b as u64);
            let z = DMatrix::from_fn(j, size, |_, _| StandardNormal.sample(&mut rng));
            let paths = &factor * z;
            paths
                .column_iter()
                .map(|c| trapezoid_abs(c.as_slice(), grid))
                .collect()
        })
        .collect();
    let mut draws: Vec<f64> = parts.concat();
    draws.sort_by(f64::total_cmp);
    LimitEnsemble::new(draws, mode, grid.to_vec(), seed)
}

impl LimitEnsemble {
    /// Wraps precomputed draws; they are sorted here.
    pub fn new(mut draws: Vec<f64>, mode: LimitMode, grid: Vec<f64>, seed: u64) -> Result<Self> {
        if draws.is_empty() {
            return Err(Error::invalid("empty limit ensemble"));
        }
        if draws.iter().any(|d| !d.is_finite() || *d < 0.0) {
            return Err(Error::invalid("limit draws must be finite and nonnegative"));
        }
        draws.sort_by(f64::total_cmp);
        Ok(Self { draws, mode, grid, seed })
    }

    pub fn draws(&self) -> &[f64] {
        &self.draws
    }

    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    pub fn mode(&self) -> LimitMode {
        self.mode
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// The `⌈pN⌉`-th order statistic.
    pub fn quantile(&self, p: f64) -> f64 {
        self.draws[ceil_rank(p, self.draws.len()) - 1]
    }

    /// `(1 + #{draws ≥ t}) / (N + 1)`.
    pub fn p_value(&self, t: f64) -> f64 {
        let below = self.draws.partition_point(|&d| d < t);
        (1 + self.draws.len() - below) as f64 / (self.draws.len() + 1) as f64
    }

    /// SHA-256 of the grid's little-endian bytes.
    pub fn grid_hash(&self) -> String {
        grid_hash(&self.grid)
    }
}

pub fn grid_hash(grid: &[f64]) -> String {
    let mut h = Sha256::new();
    for s in grid {
        h.update(s.to_le_bytes());
    }
    hex::encode(h.finalize())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cov(grid: Vec<f64>, m: DMatrix<f64>) -> GridCovariance {
        GridCovariance::new(grid, m, false).unwrap()
    }

    #[test]
    fn factorize_identity_and_rank_one() {
        let id = cov(vec![0.0, 1.0, 2.0], DMatrix::identity(3, 3));
        let f = factorize(&id).unwrap();
        assert_eq!(f.jitter_used, 0.0);
        assert!((f.factor - DMatrix::<f64>::identity(3, 3)).amax() < 1e-15);

        let v = nalgebra::DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let vvt = &v * v.transpose();
        let f = factorize(&cov(vec![0.0, 1.0, 2.0], vvt.clone())).unwrap();
        assert!((&f.factor * f.factor.transpose() - vvt).amax() < 1e-9 + f.jitter_used);
    }

    #[test]
    fn factorize_tolerates_tiny_negative_eigenvalue() {
        let q = DMatrix::from_row_slice(2, 2, &[0.6, 0.8, -0.8, 0.6]);
        let d = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, -1e-11]));
        let mut m = &q * d * q.transpose();
        let avg = 0.5 * (m[(0, 1)] + m[(1, 0)]);
        m[(0, 1)] = avg;
        m[(1, 0)] = avg;
        let f = factorize(&cov(vec![0.0, 1.0], m.clone())).unwrap();
        assert!(f.jitter_used <= 1e-6 * m.trace() / 2.0);
        assert!((&f.factor * f.factor.transpose() - m).amax() < 1e-8 + f.jitter_used.max(1e-11));
    }

    #[test]
    fn trapezoid_examples() {
        assert_eq!(trapezoid_abs(&[2.0, 4.0], &[0.0, 1.0]), 3.0);
        assert_eq!(trapezoid_abs(&[0.0, 0.0, 0.0], &[0.0, 1.0, 3.0]), 0.0);
        assert_eq!(trapezoid_abs(&[1.0, -1.0], &[0.0, 2.0]), 2.0);
    }

    #[test]
    fn zero_covariance_gives_zero_draws() {
        let e = simulate_limit(&cov(vec![0.0, 1.0], DMatrix::zeros(2, 2)), LimitMode::OneSample, 100, 1).unwrap();
        assert!(e.draws().iter().all(|&d| d == 0.0));
    }

    #[test]
    fn quantile_and_p_value_conventions() {
        let e = LimitEnsemble::new(vec![4.0, 2.0, 3.0, 1.0], LimitMode::OneSample, vec![0.0, 1.0], 0).unwrap();
        assert_eq!(e.quantile(0.5), 2.0);
        assert_eq!(e.quantile(0.999_999), 4.0);
        assert_eq!(e.p_value(0.0), 1.0);
        assert_eq!(e.p_value(5.0), 0.2);
        assert_eq!(e.p_value(2.5), 0.6);
        assert_eq!(e.p_value(2.0), 0.8);
    }

    #[test]
    fn identity_mean_abs() {
        let c = cov(vec![0.0, 1.0], DMatrix::identity(2, 2));
        let e = simulate_limit(&c, LimitMode::OneSample, 100_000, 11).unwrap();
        let mean: f64 = e.draws().iter().sum::<f64>() / e.len() as f64;
        let want = (2.0 / std::f64::consts::PI).sqrt();
        assert!((mean / want - 1.0).abs() < 0.01, "{mean}");
        let p = simulate_limit(&c, LimitMode::Pairwise, 100_000, 11).unwrap();
        for (a, b) in e.draws().iter().zip(p.draws()) {
            assert!((b - a * std::f64::consts::SQRT_2).abs() < 1e-12 * b.max(1.0));
        }
    }

    #[test]
    fn deterministic_and_seed_sensitive() {
        let c = cov(vec![0.0, 0.5, 1.0], DMatrix::from_row_slice(3, 3, &[1.0, 0.5, 0.2, 0.5, 1.0, 0.5, 0.2, 0.5, 1.0]));
        let a = simulate_limit(&c, LimitMode::OneSample, 3000, 5).unwrap();
        let b = simulate_limit(&c, LimitMode::OneSample, 3000, 5).unwrap();
        let d = simulate_limit(&c, LimitMode::OneSample, 3000, 6).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.draws(), d.draws());
        assert!(a.draws().windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn covariance_scaling_scales_draws() {
        let m = DMatrix::from_row_slice(3, 3, &[1.0, 0.3, 0.1, 0.3, 0.8, 0.2, 0.1, 0.2, 0.5]);
        let base = simulate_limit(&cov(vec![0.0, 1.0, 2.5], m.clone()), LimitMode::OneSample, 2000, 9).unwrap();
        let twice = simulate_limit(&cov(vec![0.0, 1.0, 2.5], &m * 4.0), LimitMode::OneSample, 2000, 9).unwrap();
        let thrice = simulate_limit(&cov(vec![0.0, 1.0, 2.5], &m * 9.0), LimitMode::OneSample, 2000, 9).unwrap();
        for i in 0..base.len() {
            assert_eq!(twice.draws()[i], 2.0 * base.draws()[i]);
            assert!((thrice.draws()[i] - 3.0 * base.draws()[i]).abs() <= 1e-12 * thrice.draws()[i].max(1.0));
        }
    }

    #[test]
    fn mode_round_trip() {
        for m in [LimitMode::OneSample, LimitMode::Pairwise] {
            assert_eq!(m.to_string().parse::<LimitMode>().unwrap(), m);
        }
        assert!("both".parse::<LimitMode>().is_err());
    }

    #[test]
    fn grid_hash_is_stable() {
        assert_eq!(grid_hash(&[0.0, 1.0]), grid_hash(&[0.0, 1.0]));
        assert_ne!(grid_hash(&[0.0, 1.0]), grid_hash(&[0.0, 1.5]));
        assert_eq!(grid_hash(&[]).len(), 64);
    }
}
