//! Newey–West estimation of the long-run covariance of the centered
//! indicator process on a threshold grid, pooled across trajectories.
//!
//! Pipeline: pooled quantile grid → pooled CDF at the grid → per-trajectory
//! indicator panel → Bartlett-weighted lag covariances → average over
//! trajectories → nearest PSD matrix by eigenvalue clipping.
//!
//! Trajectories are time series and are never sorted here.

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distance::SortedSample;
use crate::error::{Error, Result};
use crate::kernels::{check_grid, default_grid, GridCovariance, GridSpec};

/// Lag truncation, grid and burn-in for [`estimate_long_run_covariance`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HacConfig {
    /// Bartlett truncation `L`; `None` selects `⌊4 (n/100)^{2/9}⌋`.
    pub lags: Option<usize>,
    pub grid: GridSpec,
    /// Leading observations dropped from every trajectory.
    pub burn_in: usize,
}

impl HacConfig {
    pub fn effective_lags(&self, n: usize) -> usize {
        self.lags.unwrap_or_else(|| default_bandwidth(n))
    }
}

/// The usual Newey–West plug-in rule `⌊4 (n/100)^{2/9}⌋`.
pub fn default_bandwidth(n: usize) -> usize {
    (4.0 * (n as f64 / 100.0).powf(2.0 / 9.0)).floor() as usize
}

/// Position of `x` relative to the grid: the number of thresholds strictly
/// below it, so that `x ≤ s_j ⇔ j ≥ rank`.
#[inline]
fn grid_rank(grid: &[f64], x: f64) -> usize {
    grid.partition_point(|&s| s < x)
}

/// `F̂(s_j)`: fraction of all pooled observations at or below each threshold.
pub fn pooled_cdf<T: AsRef<[f64]>>(trajectories: &[T], grid: &[f64]) -> Result<Vec<f64>> {
    let total: usize = trajectories.iter().map(|t| t.as_ref().len()).sum();
    if trajectories.is_empty() || total == 0 {
        return Err(Error::invalid("pooled CDF needs at least one non-empty trajectory"));
    }
    let mut counts = vec![0u64; grid.len() + 1];
    for x in trajectories.iter().flat_map(|t| t.as_ref().iter()) {
        if !x.is_finite() {
            return Err(Error::invalid("trajectory contains a non-finite value"));
        }
        counts[grid_rank(grid, *x)] += 1;
    }
    let mut running = 0u64;
    Ok(counts[..grid.len()]
        .iter()
        .map(|&c| {
            running += c;
            running as f64 / total as f64
        })
        .collect())
}

/// The `n×J` matrix `Y_t(s_j) = 1{X_t ≤ s_j} − F̂(s_j)`, stored as grid
/// ranks so that lag products reduce to joint counts.
#[derive(Debug, Clone)]
pub struct IndicatorPanel {
    ranks: Vec<u32>,
    centers: Vec<f64>,
}

/// Builds the indicator panel of one time-ordered trajectory.
pub fn indicator_panel(trajectory: &[f64], grid: &[f64], pooled: &[f64]) -> Result<IndicatorPanel> {
    if grid.len() != pooled.len() {
        return Err(Error::invalid("grid and pooled CDF lengths differ"));
    }
    if trajectory.is_empty() {
        return Err(Error::invalid("trajectory is empty"));
    }
    if trajectory.iter().any(|x| !x.is_finite()) {
        return Err(Error::invalid("trajectory contains a non-finite value"));
    }
    let ranks = trajectory.iter().map(|&x| grid_rank(grid, x) as u32).collect();
    Ok(IndicatorPanel {
        ranks,
        centers: pooled.to_vec(),
    })
}

impl IndicatorPanel {
    pub fn rows(&self) -> usize {
        self.ranks.len()
    }

    pub fn cols(&self) -> usize {
        self.centers.len()
    }

    pub fn value(&self, t: usize, j: usize) -> f64 {
        let ind = if (self.ranks[t] as usize) <= j { 1.0 } else { 0.0 };
        ind - self.centers[j]
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.rows(), self.cols(), |t, j| self.value(t, j))
    }
}

/// `G_k = (1/(n−k)) Y_{1:n−k}ᵀ Y_{1+k:n}`.
///
/// Expanding the product,
/// `Σ_t Y_t(j) Y_{t+k}(l) = N_k(j,l) − F_l A_k(j) − F_j B_k(l) + (n−k) F_j F_l`
/// with `N_k` the joint count of `{X_t ≤ s_j, X_{t+k} ≤ s_l}` (a 2-D prefix
/// sum of the lag-`k` rank histogram) and `A_k`, `B_k` its margins.
pub fn lag_cov(panel: &IndicatorPanel, k: usize) -> Result<DMatrix<f64>> {
    let n = panel.rows();
    if k >= n {
        return Err(Error::invalid(format!("lag {k} must be below the panel length {n}")));
    }
    let j = panel.cols();
    let w = j + 1;
    let m = n - k;
    let mut hist = vec![0u64; w * w];
    for t in 0..m {
        let (r, s) = (panel.ranks[t] as usize, panel.ranks[t + k] as usize);
        hist[r * w + s] += 1;
    }
    // prefix sums over both axes: hist[r][s] = #{rank_t ≤ r, rank_{t+k} ≤ s}
    for r in 0..w {
        for s in 1..w {
            hist[r * w + s] += hist[r * w + s - 1];
        }
    }
    for r in 1..w {
        for s in 0..w {
            hist[r * w + s] += hist[(r - 1) * w + s];
        }
    }
    let lead: Vec<f64> = (0..j).map(|r| hist[r * w + (w - 1)] as f64).collect();
    let lagged: Vec<f64> = (0..j).map(|s| hist[(w - 1) * w + s] as f64).collect();
    let f = &panel.centers;
    let mf = m as f64;
    let mut g = DMatrix::from_fn(j, j, |r, s| {
        let joint = hist[r * w + s] as f64;
        (joint - f[s] * lead[r] - f[r] * lagged[s] + mf * f[r] * f[s]) / mf
    });
    if k == 0 {
        symmetrize(&mut g);
    }
    Ok(g)
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let j = m.nrows();
    for r in 0..j {
        for c in 0..r {
            let v = 0.5 * (m[(r, c)] + m[(c, r)]);
            m[(r, c)] = v;
            m[(c, r)] = v;
        }
    }
}

/// `Σ̂ = Γ₀ + Σ_{k=1}^{L} (1 − k/(L+1)) (G_k + G_kᵀ)`, exactly symmetric.
///
/// All lags are folded into one weighted rank histogram, with weight
/// `w_k/(n−k)` for each pair `(t, t+k)`, so the cost is `O(nL + J²)`
/// rather than `L` separate lag matrices.
pub fn newey_west(panel: &IndicatorPanel, lags: usize) -> Result<DMatrix<f64>> {
    let n = panel.rows();
    if lags >= n {
        return Err(Error::invalid(format!(
            "lag truncation {lags} must be below the trajectory length {n}"
        )));
    }
    let mut out = lag_cov(panel, 0)?;
    if lags == 0 {
        return Ok(out);
    }
    let j = panel.cols();
    let w = j + 1;
    let coef: Vec<f64> = (1..=lags).map(|k| bartlett_weight(k, lags) / (n - k) as f64).collect();
    let mut hist = vec![0.0f64; w * w];
    let ranks = &panel.ranks;
    for t in 0..n - 1 {
        let row = &mut hist[ranks[t] as usize * w..][..w];
        let reach = lags.min(n - 1 - t);
        for (c, &r) in coef[..reach].iter().zip(&ranks[t + 1..=t + reach]) {
            row[r as usize] += c;
        }
    }
    for r in 0..w {
        for s in 1..w {
            hist[r * w + s] += hist[r * w + s - 1];
        }
    }
    for r in 1..w {
        for s in 0..w {
            hist[r * w + s] += hist[(r - 1) * w + s];
        }
    }
    let lead: Vec<f64> = (0..j).map(|r| hist[r * w + (w - 1)]).collect();
    let lagged: Vec<f64> = (0..j).map(|s| hist[(w - 1) * w + s]).collect();
    let mass: f64 = coef.iter().enumerate().map(|(i, c)| c * (n - i - 1) as f64).sum();
    let f = &panel.centers;
    let g = |r: usize, s: usize| hist[r * w + s] - f[s] * lead[r] - f[r] * lagged[s] + mass * f[r] * f[s];
    for r in 0..j {
        for c in 0..=r {
            let v = g(r, c) + g(c, r);
            out[(r, c)] += v;
            if r != c {
                out[(c, r)] += v;
            }
        }
    }
    Ok(out)
}

/// `w_k = 1 − k/(L+1)`.
pub fn bartlett_weight(k: usize, lags: usize) -> f64 {
    1.0 - k as f64 / (lags as f64 + 1.0)
}

/// Averages per-trajectory estimates, symmetrizes, and clips negative
/// eigenvalues to zero. A matrix with no negative eigenvalue is returned
/// as the symmetrized average itself.
pub fn pool_and_repair(per_trajectory: &[DMatrix<f64>], grid: &[f64]) -> Result<GridCovariance> {
    let Some(first) = per_trajectory.first() else {
        return Err(Error::invalid("nothing to pool"));
    };
    let shape = first.shape();
    if per_trajectory.iter().any(|m| m.shape() != shape) {
        return Err(Error::invalid("per-trajectory matrices differ in shape"));
    }
    let mut mean = DMatrix::zeros(shape.0, shape.1);
    for m in per_trajectory {
        mean += m;
    }
    mean /= per_trajectory.len() as f64;
    symmetrize(&mut mean);
    let (matrix, repaired) = nearest_psd(mean)?;
    GridCovariance::new(grid.to_vec(), matrix, repaired)
}

/// Eigenvalue-clipping projection onto the PSD cone.
pub fn nearest_psd(sym: DMatrix<f64>) -> Result<(DMatrix<f64>, bool)> {
    if sym.iter().any(|v| !v.is_finite()) {
        return Err(Error::numerical("cannot eigendecompose a matrix with non-finite entries"));
    }
    let eig = SymmetricEigen::try_new(sym.clone(), f64::EPSILON, 0)
        .ok_or_else(|| Error::numerical("symmetric eigendecomposition did not converge"))?;
    if eig.eigenvalues.iter().all(|&l| l >= 0.0) {
        return Ok((sym, false));
    }
    let clipped = eig.eigenvalues.map(|l| l.max(0.0));
    let v = &eig.eigenvectors;
    let mut out = v * DMatrix::from_diagonal(&clipped) * v.transpose();
    symmetrize(&mut out);
    Ok((out, true))
}

/// Applies burn-in and checks that all trajectories share one length.
fn trimmed<T: AsRef<[f64]>>(trajectories: &[T], burn_in: usize) -> Result<Vec<&[f64]>> {
    if trajectories.is_empty() {
        return Err(Error::invalid("no trajectories supplied"));
    }
    let out: Vec<&[f64]> = trajectories
        .iter()
        .map(|t| t.as_ref().get(burn_in..).unwrap_or(&[]))
        .collect();
    let n = out[0].len();
    if out.iter().any(|t| t.len() != n) {
        return Err(Error::invalid("trajectories have different lengths after burn-in"));
    }
    if n < 2 {
        return Err(Error::invalid("trajectories are too short after burn-in"));
    }
    Ok(out)
}

/// End-to-end estimate on the pooled-quantile grid of the data.
pub fn estimate_long_run_covariance<T: AsRef<[f64]> + Sync>(
    trajectories: &[T],
    config: &HacConfig,
) -> Result<GridCovariance> {
    let series = trimmed(trajectories, config.burn_in)?;
    let pooled = SortedSample::new(series.iter().flat_map(|s| s.iter().copied()).collect())?;
    let grid = default_grid(&pooled, config.grid)?;
    let lags = config.effective_lags(series[0].len());
    estimate_on_grid(&series, &grid, lags)
}

/// Estimate on a caller-supplied grid (burn-in applied first).
pub fn estimate_long_run_covariance_on_grid<T: AsRef<[f64]> + Sync>(
    trajectories: &[T],
    grid: &[f64],
    lags: usize,
    burn_in: usize,
) -> Result<GridCovariance> {
    let series = trimmed(trajectories, burn_in)?;
    estimate_on_grid(&series, grid, lags)
}

fn estimate_on_grid(series: &[&[f64]], grid: &[f64], lags: usize) -> Result<GridCovariance> {
    check_grid(grid)?;
    let n = series[0].len();
    if lags >= n {
        return Err(Error::invalid(format!("lag truncation {lags} must be below the trajectory length {n}")));
    }
    let pooled = pooled_cdf(series, grid)?;
    let per: Vec<DMatrix<f64>> = series
        .par_iter()
        .map(|s| indicator_panel(s, grid, &pooled).and_then(|p| newey_west(&p, lags)))
        .collect::<Result<_>>()?;
    pool_and_repair(&per, grid)
}
