//! One-sample and pairwise W1 tests, Bonferroni control over many pairs,
//! and the power/coverage experiment harness.

mod experiment;

pub use experiment::{
    run_experiment, Cell, ExperimentOutcome, ExperimentSpec, GeneratorSpec, Histogram, KernelSource, PairDesign,
};

use serde::{Deserialize, Serialize};

use crate::distance::{scaled_statistic, w1_empirical, w1_vs_analytic, AnalyticDistribution, SortedSample};
use crate::error::{Error, Result};
use crate::limitlaw::{LimitEnsemble, LimitMode};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    pub critical_value: f64,
    pub p_value: f64,
    pub alpha: f64,
    pub reject: bool,
    pub n: usize,
    pub mode: LimitMode,
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("test level must lie in (0, 1), got {alpha}")))
    }
}

/// Compares a scaled statistic with the `(1 − α)` quantile of `ens`.
pub fn decide(statistic: f64, n: usize, ens: &LimitEnsemble, alpha: f64) -> Result<TestResult> {
    check_alpha(alpha)?;
    if !(statistic.is_finite() && statistic >= 0.0) {
        return Err(Error::invalid(format!("statistic must be finite and nonnegative, got {statistic}")));
    }
    let critical_value = ens.quantile(1.0 - alpha);
    Ok(TestResult {
        statistic,
        critical_value,
        p_value: ens.p_value(statistic),
        alpha,
        reject: statistic > critical_value,
        n,
        mode: ens.mode(),
    })
}

fn require_mode(ens: &LimitEnsemble, mode: LimitMode) -> Result<()> {
    if ens.mode() == mode {
        Ok(())
    } else {
        Err(Error::invalid(format!("a {mode} test needs a {mode} limit ensemble, got {}", ens.mode())))
    }
}

/// `T_n = √n W1(μ̂_n, μ)` against a one-sample limit ensemble.
pub fn one_sample_test(
    sample: &SortedSample,
    target: &dyn AnalyticDistribution,
    ens: &LimitEnsemble,
    alpha: f64,
) -> Result<TestResult> {
    require_mode(ens, LimitMode::OneSample)?;
    let w1 = w1_vs_analytic(sample, target)?;
    decide(scaled_statistic(w1, sample.len()), sample.len(), ens, alpha)
}

/// `T_{ij,n} = √n W1(μ̂⁽ⁱ⁾, μ̂⁽ʲ⁾)` for two series of common length `n`.
pub fn pairwise_test(a: &[f64], b: &[f64], ens: &LimitEnsemble, alpha: f64) -> Result<TestResult> {
    pairwise_test_sorted(&SortedSample::from_slice(a)?, &SortedSample::from_slice(b)?, ens, alpha)
}

/// [`pairwise_test`] on already sorted samples.
pub fn pairwise_test_sorted(a: &SortedSample, b: &SortedSample, ens: &LimitEnsemble, alpha: f64) -> Result<TestResult> {
    require_mode(ens, LimitMode::Pairwise)?;
    let n = a.len();
    if b.len() != n {
        return Err(Error::invalid(format!("pairwise test needs equal lengths, got {n} and {}", b.len())));
    }
    decide(scaled_statistic(w1_empirical(a, b), n), n, ens, alpha)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseReport {
    pub pair_indices: Vec<(usize, usize)>,
    pub results: Vec<TestResult>,
    pub family_alpha: f64,
    pub bonferroni_alpha: f64,
}

impl PairwiseReport {
    pub fn rejections(&self) -> usize {
        self.results.iter().filter(|r| r.reject).count()
    }

    pub fn any_rejected(&self) -> bool {
        self.results.iter().any(|r| r.reject)
    }
}

/// Tests every listed pair at level `family_alpha / K` against one shared
/// pairwise ensemble.
pub fn bonferroni_pairwise(
    trajectories: &[SortedSample],
    pairs: &[(usize, usize)],
    ens: &LimitEnsemble,
    family_alpha: f64,
) -> Result<PairwiseReport> {
    check_alpha(family_alpha)?;
    if pairs.is_empty() {
        return Err(Error::invalid("no pairs to test"));
    }
    let level = family_alpha / pairs.len() as f64;
    let results = pairs
        .iter()
        .map(|&(i, j)| {
            let (a, b) = (trajectories.get(i), trajectories.get(j));
            match (a, b) {
                (Some(a), Some(b)) => pairwise_test_sorted(a, b, ens, level),
                _ => Err(Error::invalid(format!("pair ({i}, {j}) is out of range"))),
            }
        })
        .collect::<Result<_>>()?;
    Ok(PairwiseReport {
        pair_indices: pairs.to_vec(),
        results,
        family_alpha,
        bonferroni_alpha: level,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distance::Normal;

    fn toy(mode: LimitMode) -> LimitEnsemble {
        LimitEnsemble::new((1..=1000).map(|i| i as f64 / 1000.0).collect(), mode, vec![0.0, 1.0], 0).unwrap()
    }

    #[test]
    fn identical_series_never_reject() {
        let x = [0.3, -1.0, 2.0, 0.1];
        let r = pairwise_test(&x, &x, &toy(LimitMode::Pairwise), 0.05).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert!(!r.reject);
        assert_eq!(r.p_value, 1.0);
    }

    #[test]
    fn decision_matches_quantile() {
        let e = toy(LimitMode::Pairwise);
        let r = decide(0.951, 10, &e, 0.05).unwrap();
        assert_eq!(r.critical_value, 0.95);
        assert!(r.reject);
        assert!(!decide(0.95, 10, &e, 0.05).unwrap().reject);
        assert!(decide(0.5, 10, &e, 0.0).is_err());
        assert!(decide(0.5, 10, &e, 1.0).is_err());
    }

    #[test]
    fn input_checks() {
        let e = toy(LimitMode::Pairwise);
        assert!(pairwise_test(&[1.0, 2.0], &[1.0], &e, 0.05).is_err());
        let s = SortedSample::from_slice(&[0.0, 1.0]).unwrap();
        assert!(one_sample_test(&s, &Normal::standard(), &e, 0.05).is_err());
        assert!(pairwise_test_sorted(&s, &s, &toy(LimitMode::OneSample), 0.05).is_err());
    }

    #[test]
    fn one_sample_on_matching_atoms() {
        let s = SortedSample::from_slice(&[1.0, 2.0, 2.0, 5.0]).unwrap();
        let r = one_sample_test(&s, &s, &toy(LimitMode::OneSample), 0.05).unwrap();
        assert!(r.statistic.abs() < 1e-15);
        assert!(!r.reject);
    }

    #[test]
    fn bonferroni_levels() {
        let e = toy(LimitMode::Pairwise);
        let t: Vec<SortedSample> = (0..11)
            .map(|i| SortedSample::from_slice(&[i as f64 * 0.1, 1.0 + i as f64 * 0.1]).unwrap())
            .collect();
        let pairs: Vec<(usize, usize)> = (1..11).map(|j| (0, j)).collect();
        let rep = bonferroni_pairwise(&t, &pairs, &e, 0.05).unwrap();
        assert!((rep.bonferroni_alpha - 0.005).abs() < 1e-15);
        assert!(rep.results.iter().all(|r| r.critical_value == e.quantile(0.995)));
        let single = bonferroni_pairwise(&t, &[(0, 3)], &e, 0.05).unwrap();
        let direct = pairwise_test_sorted(&t[0], &t[3], &e, 0.05).unwrap();
        assert_eq!(single.results[0], direct);
        assert!(bonferroni_pairwise(&t, &[(0, 99)], &e, 0.05).is_err());
        assert!(bonferroni_pairwise(&t, &[], &e, 0.05).is_err());
    }
}
