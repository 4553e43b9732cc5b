//! Empirical measures on the real line and exact Wasserstein-1 distances.
//!
//! On ℝ the W1 distance between two laws equals the L1 distance between
//! their distribution functions, so everything here reduces to integrating
//! step functions against each other or against an analytic CDF.

mod analytic;

pub use analytic::{w1_vs_analytic, AnalyticDistribution, Normal, Uniform};

use crate::error::{Error, Result};
use crate::numeric::KahanSum;

/// Ascending, finite, non-empty observations representing the empirical
/// measure `(1/n) Σ δ_{x_i}`. Sorting happens once, here.
#[derive(Debug, Clone, PartialEq)]
pub struct SortedSample {
    values: Vec<f64>,
}

impl SortedSample {
    pub fn new(mut values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("sample must contain at least one value"));
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("sample contains non-finite value {bad}")));
        }
        values.sort_by(f64::total_cmp);
        Ok(Self { values })
    }

    pub fn from_slice(values: &[f64]) -> Result<Self> {
        Self::new(values.to_vec())
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn min(&self) -> f64 {
        self.values[0]
    }

    pub fn max(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    /// Number of observations `≤ t`.
    pub fn count_le(&self, t: f64) -> usize {
        self.values.partition_point(|&v| v <= t)
    }

    /// Empirical distribution function `F̂(t) = #{x_i ≤ t} / n`.
    pub fn ecdf(&self, t: f64) -> f64 {
        self.count_le(t) as f64 / self.len() as f64
    }

    /// The `⌈p·n⌉`-th order statistic (1-based), clamped to the sample.
    pub fn order_quantile(&self, p: f64) -> f64 {
        self.values[ceil_rank(p, self.len()) - 1]
    }
}

/// `⌈p·n⌉` clamped to `1..=n`. Products within 1e-9 of an integer are
/// snapped to it so that e.g. `0.95 * 1000` never rounds up to 951.
pub(crate) fn ceil_rank(p: f64, n: usize) -> usize {
    let x = p * n as f64;
    let r = x.round();
    let k = if (x - r).abs() < 1e-9 { r } else { x.ceil() };
    (k.max(1.0) as usize).min(n)
}

/// Exact W1 distance between two empirical measures.
///
/// Equal sizes use the order-statistic form `(1/n) Σ |a_(k) − b_(k)|`;
/// otherwise the two step CDFs are swept over their merged breakpoints.
pub fn w1_empirical(a: &SortedSample, b: &SortedSample) -> f64 {
    if a.len() == b.len() {
        w1_equal_size(a.values(), b.values())
    } else {
        w1_breakpoints(a, b)
    }
}

fn w1_equal_size(a: &[f64], b: &[f64]) -> f64 {
    let sum: KahanSum = a.iter().zip(b).map(|(x, y)| (x - y).abs()).collect();
    sum.value() / a.len() as f64
}

/// `∫ |F_a − F_b| dt` as a finite sum over the merged breakpoints of the
/// two step functions. CDF gaps are formed from integer counts, so the only
/// rounding is in the widths and the compensated sum.
pub fn w1_breakpoints(a: &SortedSample, b: &SortedSample) -> f64 {
    let (xa, xb) = (a.values(), b.values());
    let (na, nb) = (xa.len(), xb.len());
    let denom = (na as f64) * (nb as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut prev = xa[0].min(xb[0]);
    let mut acc = KahanSum::new();
    while i < na || j < nb {
        let next = match (xa.get(i), xb.get(j)) {
            (Some(&u), Some(&v)) => u.min(v),
            (Some(&u), None) => u,
            (None, Some(&v)) => v,
            (None, None) => unreachable!(),
        };
        let gap = ((i * nb) as f64 - (j * na) as f64).abs() / denom;
        if gap > 0.0 {
            acc.add(gap * (next - prev));
        }
        while i < na && xa[i] == next {
            i += 1;
        }
        while j < nb && xb[j] == next {
            j += 1;
        }
        prev = next;
    }
    acc.value()
}

/// `T_n = √n · W1`.
pub fn scaled_statistic(w1: f64, n: usize) -> f64 {
    (n as f64).sqrt() * w1
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(v: &[f64]) -> SortedSample {
        SortedSample::from_slice(v).unwrap()
    }

    #[test]
    fn rejects_empty_and_nan() {
        assert!(matches!(SortedSample::new(vec![]), Err(Error::InvalidInput(_))));
        assert!(matches!(SortedSample::new(vec![1.0, f64::NAN]), Err(Error::InvalidInput(_))));
        assert!(SortedSample::new(vec![f64::INFINITY]).is_err());
    }

    #[test]
    fn sorts_on_construction() {
        assert_eq!(s(&[3.0, -1.0, 2.0]).values(), &[-1.0, 2.0, 3.0]);
    }

    #[test]
    fn identical_samples_are_at_distance_zero() {
        assert_eq!(w1_empirical(&s(&[1.0, 2.0, 3.0]), &s(&[1.0, 2.0, 3.0])), 0.0);
    }

    #[test]
    fn point_masses() {
        assert_eq!(w1_empirical(&s(&[0.0]), &s(&[2.0])), 2.0);
    }

    #[test]
    fn unequal_sizes() {
        // F_a = 1/2 on [0, 1), F_b jumps at 0.5: |1/2 − 0|·0.5 + |1/2 − 1|·0.5.
        assert!((w1_empirical(&s(&[0.0, 1.0]), &s(&[0.5])) - 0.5).abs() < 1e-15);
        // Duplicated atoms do not change the measure.
        assert!(w1_empirical(&s(&[1.0, 1.0, 4.0, 4.0]), &s(&[1.0, 4.0])).abs() < 1e-15);
    }

    #[test]
    fn scaled() {
        assert_eq!(scaled_statistic(2.0, 4), 4.0);
        assert_eq!(scaled_statistic(0.0, 100), 0.0);
        assert!((scaled_statistic(0.1, 1000) - 3.162_277_660_168_379_5).abs() < 1e-12);
    }

    #[test]
    fn rank_rounding() {
        assert_eq!(ceil_rank(0.5, 4), 2);
        assert_eq!(ceil_rank(0.95, 1000), 950);
        assert_eq!(ceil_rank(0.951, 1000), 951);
        assert_eq!(ceil_rank(1e-9, 10), 1);
        assert_eq!(ceil_rank(0.999_999, 10), 10);
    }

    #[test]
    fn ecdf_and_quantiles() {
        let x = s(&[1.0, 2.0, 2.0, 5.0]);
        assert_eq!(x.ecdf(0.0), 0.0);
        assert_eq!(x.ecdf(2.0), 0.75);
        assert_eq!(x.ecdf(9.0), 1.0);
        assert_eq!(x.order_quantile(0.5), 2.0);
        assert_eq!(x.order_quantile(0.99), 5.0);
    }
}
