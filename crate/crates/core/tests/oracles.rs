use rand::Rng;
use rand_distr::StandardNormal;
use w1test::distance::{Normal, SortedSample};
use w1test::dynsys::simulate_ma;
use w1test::kernels::{bvn_indicator_cov, default_grid, ma_acvf, model_grid_covariance, GridSpec, MaModel};
use w1test::numeric::norm_cdf;
use w1test::rng::{derive_seed, stream_rng};

#[test]
fn bivariate_indicator_covariance_against_monte_carlo() {
    let (a, b, rho) = (0.3, -0.7, 0.6);
    let s = (1.0f64 - rho * rho).sqrt();
    let fb = norm_cdf(b);
    let draws = 100_000_000u64;
    // conditional on X, P(Y <= b | X) is exact; only X is sampled
    let mut rng = stream_rng(31, 0);
    let (mut sum, mut sumsq) = (0.0, 0.0);
    for _ in 0..draws {
        let x: f64 = rng.sample(StandardNormal);
        let v = if x <= a { norm_cdf((b - rho * x) / s) - fb } else { 0.0 };
        sum += v;
        sumsq += v * v;
    }
    let mean = sum / draws as f64;
    let se = ((sumsq / draws as f64 - mean * mean) / draws as f64).sqrt();
    let got = bvn_indicator_cov(a, b, rho).unwrap();
    assert!((got - mean).abs() <= 3e-5, "quadrature {got}, monte carlo {mean} (se {se})");
}

#[test]
fn ma3_kernel_against_empirical_process() {
    let model = MaModel::ma3(0.0);
    let acvf = ma_acvf(&model, 3).unwrap();
    let sd = acvf.variance().sqrt();
    let grid = default_grid(&Normal::new(0.0, sd).unwrap(), GridSpec::with_size(11)).unwrap();
    let kernel = model_grid_covariance(&acvf, &grid).unwrap();
    let f: Vec<f64> = grid.iter().map(|s| norm_cdf(s / sd)).collect();
    let (paths, n) = (10_000u64, 2000usize);
    let mut sum = vec![0.0; grid.len()];
    let mut sumsq = vec![0.0; grid.len()];
    for p in 0..paths {
        let x = SortedSample::new(simulate_ma(&model, n, 0, derive_seed(77, p))).unwrap();
        for (k, s) in grid.iter().enumerate() {
            let v = (n as f64).sqrt() * (x.ecdf(*s) - f[k]);
            sum[k] += v;
            sumsq[k] += v * v;
        }
    }
    for k in 0..grid.len() {
        let mean = sum[k] / paths as f64;
        let var = sumsq[k] / paths as f64 - mean * mean;
        let want = kernel.matrix()[(k, k)];
        assert!((var / want - 1.0).abs() <= 0.05, "grid point {k}: {var} vs {want}");
    }
}
