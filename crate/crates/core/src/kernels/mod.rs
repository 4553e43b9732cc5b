//! Model-implied autocovariances and the long-run covariance kernel of
//! the centered indicator process `1{X_t ≤ s} − F(s)` on a threshold grid.
//!
//! The model route assumes Gaussian marginals: for a Gaussian process the
//! lag-`k` indicator covariance depends only on `ρ_k = γ(k)/γ(0)`.
//! Non-Gaussian data should go through [`crate::hac`] instead.

mod bvn;
mod models;

pub use bvn::bvn_indicator_cov;
pub use models::{arma_acvf, is_stationary, ma_acvf, AcvfSequence, ArmaModel, MaModel};

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distance::AnalyticDistribution;
use crate::error::{Error, Result};
use bvn::LagRule;

/// Default number of lags kept for ARMA kernels.
pub const DEFAULT_ARMA_LAGS: usize = 200;

/// Thresholds `s_1 < … < s_J` with a symmetric `J×J` covariance matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct GridCovariance {
    grid: Vec<f64>,
    matrix: DMatrix<f64>,
    psd_repaired: bool,
}

impl GridCovariance {
    pub fn new(grid: Vec<f64>, matrix: DMatrix<f64>, psd_repaired: bool) -> Result<Self> {
        check_grid(&grid)?;
        let j = grid.len();
        if matrix.nrows() != j || matrix.ncols() != j {
            return Err(Error::invalid(format!(
                "matrix is {}x{} but the grid has {j} points",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("covariance matrix has non-finite entries"));
        }
        let scale = matrix.amax().max(1.0);
        for r in 0..j {
            for c in 0..r {
                if (matrix[(r, c)] - matrix[(c, r)]).abs() > 1e-12 * scale {
                    return Err(Error::invalid(format!("covariance matrix is not symmetric at ({r}, {c})")));
                }
            }
        }
        Ok(Self { grid, matrix, psd_repaired })
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn psd_repaired(&self) -> bool {
        self.psd_repaired
    }

    pub fn size(&self) -> usize {
        self.grid.len()
    }

    /// The same kernel with every entry multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            grid: self.grid.clone(),
            matrix: &self.matrix * factor,
            psd_repaired: self.psd_repaired,
        }
    }
}

pub(crate) fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.len() < 2 {
        return Err(Error::invalid("a threshold grid needs at least two points"));
    }
    if grid.iter().any(|s| !s.is_finite()) {
        return Err(Error::invalid("grid thresholds must be finite"));
    }
    if grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::invalid("grid thresholds must be strictly increasing"));
    }
    Ok(())
}

/// Size and tail trimming of a quantile grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub size: usize,
    /// Lowest probability level; the highest is `1 − tail_trim`.
    pub tail_trim: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            size: 101,
            tail_trim: 0.005,
        }
    }
}

impl GridSpec {
    pub fn with_size(size: usize) -> Self {
        Self {
            size,
            ..Self::default()
        }
    }

    /// Equispaced levels `p_j = trim + (j − 1)(1 − 2·trim)/(J − 1)`.
    pub fn levels(&self) -> Result<Vec<f64>> {
        if self.size < 2 {
            return Err(Error::invalid("grid size must be at least 2"));
        }
        if !(self.tail_trim > 0.0 && self.tail_trim < 0.5) {
            return Err(Error::invalid("tail trim must lie in (0, 0.5)"));
        }
        let step = (1.0 - 2.0 * self.tail_trim) / (self.size - 1) as f64;
        Ok((0..self.size).map(|j| self.tail_trim + j as f64 * step).collect())
    }
}

/// Quantile grid of an analytic law or of a (pooled) sample.
///
/// Repeated quantiles, which only occur for tied data, are merged; fewer
/// than two distinct thresholds is a degenerate-input error.
pub fn default_grid(dist: &dyn AnalyticDistribution, spec: GridSpec) -> Result<Vec<f64>> {
    let mut grid: Vec<f64> = spec.levels()?.into_iter().map(|p| dist.quantile(p)).collect();
    grid.dedup();
    if grid.len() < 2 {
        return Err(Error::invalid("degenerate distribution: all grid quantiles coincide"));
    }
    check_grid(&grid)?;
    Ok(grid)
}

/// `Γ_K(s, t) = C₀(s, t) + 2 Σ_{k=1}^{K} C_k(s, t)` where `C_k` is the
/// Gaussian indicator covariance at correlation `ρ_k`.
pub fn model_grid_covariance(acvf: &AcvfSequence, grid: &[f64]) -> Result<GridCovariance> {
    check_grid(grid)?;
    let sd = acvf.variance().sqrt();
    let z: Vec<f64> = grid.iter().map(|s| (s - acvf.mean()) / sd).collect();
    let rules: Vec<LagRule> = (1..=acvf.max_lag())
        .map(|k| acvf.rho(k))
        .filter(|&r| r != 0.0)
        .map(LagRule::new)
        .collect();
    let lag0 = LagRule::new(1.0);
    let j = grid.len();

    let rows: Vec<Vec<f64>> = (0..j)
        .into_par_iter()
        .map(|r| {
            (0..=r)
                .map(|c| {
                    let tail: f64 = rules.iter().map(|rule| rule.eval(z[r], z[c])).sum();
                    lag0.eval(z[r], z[c]) + 2.0 * tail
                })
                .collect()
        })
        .collect();

    let mut m = DMatrix::zeros(j, j);
    for (r, row) in rows.iter().enumerate() {
        for (c, &v) in row.iter().enumerate() {
            m[(r, c)] = v;
            m[(c, r)] = v;
        }
    }
    GridCovariance::new(grid.to_vec(), m, false)
}
