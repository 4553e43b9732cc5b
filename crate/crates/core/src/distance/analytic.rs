
use super::SortedSample;
use crate::error::{Error, Result};
use crate::numeric::{adaptive_gk, norm_cdf, norm_quantile, norm_sf, KahanSum};

/// Bisection cap for each adaptive panel.
const MAX_DEPTH: u32 = 20;
/// Error budget per unit length for the interior (t-space) integrals.
const INTERIOR_TOL: f64 = 1e-11;
/// Error budget per unit length for the tail (u-space) integrals.
const TAIL_TOL: f64 = 1e-10;

/// A univariate law known through its distribution and quantile functions.
///
/// `quantile` must be the generalized inverse `inf { t : cdf(t) ≥ u }`.
/// The law must have a finite first moment for W1 to be finite.
pub trait AnalyticDistribution: Send + Sync {
    fn cdf(&self, x: f64) -> f64;

    fn quantile(&self, u: f64) -> f64;

    fn mean(&self) -> f64;

    fn support(&self) -> (f64, f64) {
        (f64::NEG_INFINITY, f64::INFINITY)
    }

    /// `1 − cdf(x)`; override when it can be computed without cancellation.
    fn sf(&self, x: f64) -> f64 {
        1.0 - self.cdf(x)
    }

    /// `quantile(1 − v)`; override to stay accurate for tiny `v`.
    fn upper_quantile(&self, v: f64) -> f64 {
        self.quantile(1.0 - v)
    }

    /// Jump points of the CDF inside the open interval `(lo, hi)`.
    /// Continuous laws have none.
    fn atoms_between(&self, _lo: f64, _hi: f64) -> Vec<f64> {
        Vec::new()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Normal {
    mean: f64,
    sd: f64,
}

impl Normal {
    pub fn new(mean: f64, sd: f64) -> Result<Self> {
        if !mean.is_finite() || !(sd > 0.0 && sd.is_finite()) {
            return Err(Error::invalid(format!("normal needs finite mean and sd > 0, got ({mean}, {sd})")));
        }
        Ok(Self { mean, sd })
    }

    pub fn standard() -> Self {
        Self { mean: 0.0, sd: 1.0 }
    }

    pub fn sd(&self) -> f64 {
        self.sd
    }
}

impl AnalyticDistribution for Normal {
    fn cdf(&self, x: f64) -> f64 {
        norm_cdf((x - self.mean) / self.sd)
    }

    fn quantile(&self, u: f64) -> f64 {
        self.mean + self.sd * norm_quantile(u)
    }

    fn mean(&self) -> f64 {
        self.mean
    }

    fn sf(&self, x: f64) -> f64 {
        norm_sf((x - self.mean) / self.sd)
    }

    fn upper_quantile(&self, v: f64) -> f64 {
        self.mean - self.sd * norm_quantile(v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Uniform {
    lo: f64,
    hi: f64,
}

impl Uniform {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::invalid(format!("uniform needs finite lo < hi, got [{lo}, {hi}]")));
        }
        Ok(Self { lo, hi })
    }
}

impl AnalyticDistribution for Uniform {
    fn cdf(&self, x: f64) -> f64 {
        ((x - self.lo) / (self.hi - self.lo)).clamp(0.0, 1.0)
    }

    fn quantile(&self, u: f64) -> f64 {
        self.lo + u.clamp(0.0, 1.0) * (self.hi - self.lo)
    }

    fn mean(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    fn support(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    fn upper_quantile(&self, v: f64) -> f64 {
        self.hi - v.clamp(0.0, 1.0) * (self.hi - self.lo)
    }
}

/// An empirical measure is itself a (discrete) analytic target.
impl AnalyticDistribution for SortedSample {
    fn cdf(&self, x: f64) -> f64 {
        self.ecdf(x)
    }

    fn quantile(&self, u: f64) -> f64 {
        self.order_quantile(u)
    }

    fn mean(&self) -> f64 {
        let s: KahanSum = self.values().iter().copied().collect();
        s.value() / self.len() as f64
    }

    fn support(&self) -> (f64, f64) {
        (self.min(), self.max())
    }

    fn upper_quantile(&self, v: f64) -> f64 {
        let n = self.len();
        // smallest k with k/n ≥ 1 − v, i.e. k = n − ⌊v·n⌋
        let k = n - ((v * n as f64).floor() as usize).min(n - 1);
        self.values()[k - 1]
    }

    fn atoms_between(&self, lo: f64, hi: f64) -> Vec<f64> {
        let v = self.values();
        let start = v.partition_point(|&x| x <= lo);
        let end = v.partition_point(|&x| x < hi);
        let mut out: Vec<f64> = v[start..end].to_vec();
        out.dedup();
        out
    }
}

/// `∫ |F̂_n(t) − F(t)| dt` between a sample and an analytic law.
///
/// Between consecutive order statistics the empirical CDF is the constant
/// `k/n`; each such interval is split where `F` crosses `k/n` (and at any
/// atoms of `F`) and integrated adaptively. The two unbounded tails are
/// integrated in quantile space,
/// `∫_{-∞}^{x_(1)} F = ∫_0^{F(x_(1))} (x_(1) − Q(u)) du` and its mirror,
/// over dyadic panels shrinking toward the singular endpoint.
pub fn w1_vs_analytic(sample: &SortedSample, target: &dyn AnalyticDistribution) -> Result<f64> {
    let x = sample.values();
    let n = x.len();
    let mut total = KahanSum::new();
    let mut converged = true;

    let (left, ok) = left_tail(target, x[0]);
    total.add(left);
    converged &= ok;
    let (right, ok) = right_tail(target, x[n - 1]);
    total.add(right);
    converged &= ok;

    let mut f_lo = target.cdf(x[0]);
    for k in 1..n {
        let (lo, hi) = (x[k - 1], x[k]);
        let f_hi = target.cdf(hi);
        if hi > lo {
            let level = k as f64 / n as f64;
            let (v, ok) = interval(target, lo, hi, level, f_lo, f_hi);
            total.add(v);
            converged &= ok;
        }
        f_lo = f_hi;
    }

    let value = total.value();
    if converged {
        Ok(value)
    } else {
        Err(Error::NumericalFailure {
            message: format!("quadrature did not converge within {MAX_DEPTH} bisection levels"),
            partial: Some(value),
        })
    }
}

fn interval(
    target: &dyn AnalyticDistribution,
    lo: f64,
    hi: f64,
    level: f64,
    f_lo: f64,
    f_hi: f64,
) -> (f64, bool) {
    let mut cuts = vec![lo];
    if f_lo < level && level < f_hi {
        let t = target.quantile(level);
        if t > lo && t < hi {
            cuts.push(t);
        }
    }
    cuts.extend(target.atoms_between(lo, hi));
    cuts.push(hi);
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();

    let integrand = |t: f64| (level - target.cdf(t)).abs();
    let mut acc = KahanSum::new();
    let mut converged = true;
    for w in cuts.windows(2) {
        let q = adaptive_gk(&integrand, w[0], w[1], INTERIOR_TOL, MAX_DEPTH);
        acc.add(q.value);
        converged &= q.converged;
    }
    (acc.value(), converged)
}

/// `∫_0^{mass} g(u) du` for an integrand that may blow up (integrably)
/// at `u = 0`, using panels `[mass·2^{-(k+1)}, mass·2^{-k}]`.
fn dyadic_toward_zero<G: Fn(f64) -> f64>(g: G, mass: f64) -> (f64, bool) {
    let mut acc = KahanSum::new();
    let mut converged = true;
    let mut hi = mass;
    let mut quiet = 0;
    while hi > f64::MIN_POSITIVE && quiet < 3 {
        let lo = 0.5 * hi;
        let q = adaptive_gk(&g, lo, hi, TAIL_TOL, MAX_DEPTH);
        acc.add(q.value);
        converged &= q.converged;
        if q.value.abs() <= 1e-17 * acc.value().abs().max(1e-300) || q.value == 0.0 {
            quiet += 1;
        } else {
            quiet = 0;
        }
        hi = lo;
    }
    (acc.value(), converged)
}

fn left_tail(target: &dyn AnalyticDistribution, x: f64) -> (f64, bool) {
    let mass = target.cdf(x);
    if mass <= 0.0 {
        return (0.0, true);
    }
    dyadic_toward_zero(|u| (x - target.quantile(u)).max(0.0), mass)
}

fn right_tail(target: &dyn AnalyticDistribution, x: f64) -> (f64, bool) {
    let mass = target.sf(x);
    if mass <= 0.0 {
        return (0.0, true);
    }
    dyadic_toward_zero(|v| (target.upper_quantile(v) - x).max(0.0), mass)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::norm_pdf;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    /// Closed-form oracle for a standard normal target using the
    /// antiderivative `∫ Φ = tΦ(t) + φ(t)`.
    fn w1_vs_std_normal_closed_form(x: &[f64]) -> f64 {
        let big = |t: f64| t * norm_cdf(t) + norm_pdf(t);
        let n = x.len();
        let mut acc = big(x[0]) + (norm_pdf(x[n - 1]) - x[n - 1] * norm_sf(x[n - 1]));
        for k in 1..n {
            let (a, b, c) = (x[k - 1], x[k], k as f64 / n as f64);
            // ∫_a^b (c − Φ) over the part where Φ < c, and (Φ − c) elsewhere
            let z = norm_quantile(c).clamp(a, b);
            let below = c * (z - a) - (big(z) - big(a));
            let above = (big(b) - big(z)) - c * (b - z);
            acc += below + above;
        }
        acc
    }

    #[test]
    fn single_atom_at_zero_is_mean_abs_normal() {
        let a = SortedSample::new(vec![0.0]).unwrap();
        let w = w1_vs_analytic(&a, &Normal::standard()).unwrap();
        assert!((w - (2.0 / std::f64::consts::PI).sqrt()).abs() < 1e-9, "{w}");
    }

    #[test]
    fn duplicate_atoms_leave_the_measure_unchanged() {
        let one = w1_vs_analytic(&SortedSample::new(vec![0.0]).unwrap(), &Normal::standard()).unwrap();
        let two = w1_vs_analytic(&SortedSample::new(vec![0.0, 0.0]).unwrap(), &Normal::standard()).unwrap();
        assert!((one - two).abs() < 1e-12);
    }

    #[test]
    fn matches_closed_form_on_random_samples() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for size in [1usize, 2, 5, 17, 300] {
            let v: Vec<f64> = (0..size)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    1.5 * z + 0.3
                })
                .collect();
            let s = SortedSample::new(v).unwrap();
            let got = w1_vs_analytic(&s, &Normal::standard()).unwrap();
            let want = w1_vs_std_normal_closed_form(s.values());
            assert!((got - want).abs() < 1e-9, "size {size}: {got} vs {want}");
        }
    }

    #[test]
    fn far_tail_sample() {
        let s = SortedSample::new(vec![-9.0, 12.0]).unwrap();
        let got = w1_vs_analytic(&s, &Normal::standard()).unwrap();
        let want = w1_vs_std_normal_closed_form(s.values());
        assert!((got - want).abs() < 1e-9);
    }

    #[test]
    fn large_iid_sample_is_close() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let v: Vec<f64> = (0..1_000_000).map(|_| -> f64 { StandardNormal.sample(&mut rng) }).collect();
        let w = w1_vs_analytic(&SortedSample::new(v).unwrap(), &Normal::standard()).unwrap();
        assert!(w <= 0.005, "{w}");
    }

    #[test]
    fn sample_against_itself_and_other_discrete_targets() {
        let s = SortedSample::new(vec![0.5, -1.0, 2.0, 2.0]).unwrap();
        assert!(w1_vs_analytic(&s, &s).unwrap().abs() < 1e-14);
        let t = SortedSample::new(vec![0.0, 1.0, 3.0]).unwrap();
        let exact = super::super::w1_empirical(&s, &t);
        assert!((w1_vs_analytic(&s, &t).unwrap() - exact).abs() < 1e-12);
    }

    #[test]
    fn uniform_target() {
        // single atom at the centre of U(0, 1): ∫_0^1 |1{t ≥ 1/2} − t| dt = 1/4
        let s = SortedSample::new(vec![0.5]).unwrap();
        let w = w1_vs_analytic(&s, &Uniform::new(0.0, 1.0).unwrap()).unwrap();
        assert!((w - 0.25).abs() < 1e-12);
    }

    #[test]
    fn normal_rejects_bad_parameters() {
        assert!(Normal::new(0.0, 0.0).is_err());
        assert!(Normal::new(f64::NAN, 1.0).is_err());
        assert!(Uniform::new(1.0, 1.0).is_err());
    }
}
