use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::kernels::{is_stationary, ArmaModel, MaModel};
use crate::rng::stream_rng;

/// Burn-in used for ARMA paths when none is requested.
pub const DEFAULT_ARMA_BURN_IN: usize = 1000;

fn innovations(count: usize, sigma2: f64, seed: u64) -> Vec<f64> {
    let sd = sigma2.sqrt();
    let mut rng = stream_rng(seed, 0);
    (0..count)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            sd * z
        })
        .collect()
}

/// `ma_part(e, θ, t) = e_t + Σ_j θ_j e_{t−j}`, skipping indices before 0.
#[inline]
fn ma_part(e: &[f64], theta: &[f64], t: usize) -> f64 {
    let mut v = e[t];
    for (j, th) in theta.iter().enumerate() {
        if t > j {
            v += th * e[t - j - 1];
        }
    }
    v
}

/// `n` observations of the MA model after discarding `burn_in + q` values.
/// Innovations come from stream 0 of `seed`.
pub fn simulate_ma(model: &MaModel, n: usize, burn_in: usize, seed: u64) -> Vec<f64> {
    let skip = burn_in + model.order();
    let e = innovations(skip + n, model.sigma2, seed);
    (skip..skip + n)
        .map(|t| model.mean + ma_part(&e, &model.theta, t))
        .collect()
}

/// `n` observations of the ARMA recursion started at zero deviations, after
/// discarding `burn_in + max(p, q)` values. With `p = 0` this reproduces
/// [`simulate_ma`] exactly for the same seed.
pub fn simulate_arma(model: &ArmaModel, n: usize, burn_in: usize, seed: u64) -> Result<Vec<f64>> {
    if !is_stationary(&model.phi) {
        return Err(Error::InvalidModel(format!("AR part {:?} is not stationary", model.phi)));
    }
    let skip = burn_in + model.ar_order().max(model.ma_order());
    let total = skip + n;
    let e = innovations(total, model.sigma2, seed);
    let mut y = vec![0.0; total];
    for t in 0..total {
        let mut ar = 0.0;
        for (i, ph) in model.phi.iter().enumerate() {
            if t > i {
                ar += ph * y[t - i - 1];
            }
        }
        y[t] = ar + ma_part(&e, &model.theta, t);
    }
    Ok(y[skip..].iter().map(|v| model.mean + v).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{arma_acvf, ma_acvf};

    fn sample_acvf(x: &[f64], k: usize) -> f64 {
        let n = x.len();
        let m = x.iter().sum::<f64>() / n as f64;
        (0..n - k).map(|t| (x[t] - m) * (x[t + k] - m)).sum::<f64>() / n as f64
    }

    #[test]
    fn white_noise_ma() {
        let m = MaModel::new(5.0, vec![], 4.0).unwrap();
        let x = simulate_ma(&m, 50_000, 0, 1);
        let mean = x.iter().sum::<f64>() / x.len() as f64;
        assert!((mean - 5.0).abs() < 0.05);
        assert!((sample_acvf(&x, 0) / 4.0 - 1.0).abs() < 0.03);
        assert!(sample_acvf(&x, 1).abs() < 0.1);
    }

    #[test]
    fn ma_is_deterministic() {
        let m = MaModel::ma3(0.0);
        assert_eq!(simulate_ma(&m, 100, 10, 3), simulate_ma(&m, 100, 10, 3));
        assert_ne!(simulate_ma(&m, 100, 10, 3), simulate_ma(&m, 100, 10, 4));
        assert_eq!(simulate_ma(&m, 100, 0, 3).len(), 100);
    }

    #[test]
    fn arma_without_ar_part_matches_ma() {
        let m = MaModel::ma3(1.5);
        let a = ArmaModel::from_ma(&m);
        assert_eq!(simulate_ma(&m, 500, 7, 21), simulate_arma(&a, 500, 7, 21).unwrap());
    }

    #[test]
    fn nonstationary_is_rejected() {
        let bad = ArmaModel {
            mean: 0.0,
            phi: vec![1.0],
            theta: vec![],
            sigma2: 1.0,
        };
        assert!(matches!(simulate_arma(&bad, 10, 0, 0), Err(Error::InvalidModel(_))));
    }

    #[test]
    fn ma3_long_run_moments() {
        let m = MaModel::ma3(0.0);
        let x = simulate_ma(&m, 1_000_000, 0, 8);
        let g = ma_acvf(&m, 5).unwrap();
        assert!((sample_acvf(&x, 0) / 1.56 - 1.0).abs() < 0.01);
        for k in 0..=3 {
            assert!((sample_acvf(&x, k) - g.gamma()[k]).abs() < 0.01 * 1.56, "lag {k}");
        }
    }

    #[test]
    fn arma53_long_run_acvf() {
        let m = ArmaModel::arma53(0.0);
        let x = simulate_arma(&m, 1_000_000, DEFAULT_ARMA_BURN_IN, 12).unwrap();
        let g = arma_acvf(&m, 5).unwrap();
        for k in 0..=5 {
            let err = (sample_acvf(&x, k) - g.gamma()[k]).abs();
            assert!(err < 0.01 * g.gamma()[0], "lag {k}: {} vs {}", sample_acvf(&x, k), g.gamma()[k]);
        }
    }

    #[test]
    fn ar1_lag_one_correlation() {
        let m = ArmaModel::new(0.0, vec![0.5], vec![], 1.0).unwrap();
        let x = simulate_arma(&m, 1_000_000, DEFAULT_ARMA_BURN_IN, 2).unwrap();
        let r = sample_acvf(&x, 1) / sample_acvf(&x, 0);
        assert!((r - 0.5).abs() < 0.01);
    }
}
