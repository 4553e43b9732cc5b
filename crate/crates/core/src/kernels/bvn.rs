//! Covariance of threshold indicators of a standard bivariate normal pair.
//!
//! `Cov(1{Z₀ ≤ a}, 1{Z₁ ≤ b}) = Φ₂(a, b; ρ) − Φ(a)Φ(b) = ∫₀^ρ φ₂(a, b; r) dr`.
//! The integral is evaluated with 64-point Gauss–Legendre after the
//! substitution `r = sin θ`, which removes the `1/√(1 − r²)` factor of the
//! density. Writing the exponent as `(a − b)²/(2cos²θ) + ab/(1 + sin θ)`
//! keeps it free of cancellation as `ρ → 1`; negative correlations are
//! reflected via `Cov(a, b; ρ) = −Cov(a, −b; −ρ)`.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::numeric::{gauss_legendre_64, norm_cdf};

/// Indicator covariance for standardized thresholds `a`, `b` at correlation `rho`.
pub fn bvn_indicator_cov(a: f64, b: f64, rho: f64) -> Result<f64> {
    if !(rho.abs() <= 1.0) {
        return Err(Error::invalid(format!("correlation must lie in [-1, 1], got {rho}")));
    }
    Ok(LagRule::new(rho).eval(a, b))
}

/// Quadrature nodes for one fixed correlation, reusable across thresholds.
#[derive(Debug, Clone)]
pub(crate) struct LagRule {
    kind: RuleKind,
}

#[derive(Debug, Clone)]
enum RuleKind {
    Independent,
    Comonotone,
    Antitone,
    /// `(sin θ_i, cos² θ_i, weight_i)`; `reflect` for negative ρ.
    Nodes { nodes: Vec<(f64, f64, f64)>, reflect: bool },
}

impl LagRule {
    pub(crate) fn new(rho: f64) -> Self {
        let kind = if rho == 0.0 {
            RuleKind::Independent
        } else if rho >= 1.0 {
            RuleKind::Comonotone
        } else if rho <= -1.0 {
            RuleKind::Antitone
        } else {
            let reflect = rho < 0.0;
            let top = rho.abs().asin();
            let half = 0.5 * top;
            let nodes = gauss_legendre_64()
                .iter()
                .map(|&(x, w)| {
                    let theta = half * (x + 1.0);
                    let c = theta.cos();
                    (theta.sin(), c * c, w * half / (2.0 * PI))
                })
                .collect();
            RuleKind::Nodes { nodes, reflect }
        };
        Self { kind }
    }

    pub(crate) fn eval(&self, a: f64, b: f64) -> f64 {
        match &self.kind {
            RuleKind::Independent => 0.0,
            RuleKind::Comonotone => norm_cdf(a.min(b)) - norm_cdf(a) * norm_cdf(b),
            RuleKind::Antitone => {
                let (fa, fb) = (norm_cdf(a), norm_cdf(b));
                (fa + fb - 1.0).max(0.0) - fa * fb
            }
            RuleKind::Nodes { nodes, reflect } => {
                let (b, sign) = if *reflect { (-b, -1.0) } else { (b, 1.0) };
                let d2 = (a - b) * (a - b);
                let ab = a * b;
                let sum: f64 = nodes
                    .iter()
                    .map(|&(s, c2, w)| w * (-(0.5 * d2 / c2) - ab / (1.0 + s)).exp())
                    .sum();
                sign * sum
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::{adaptive_gk, norm_pdf};

    /// Independent route: `Φ₂(a,b;ρ) = ∫_{-∞}^a φ(x) Φ((b − ρx)/√(1−ρ²)) dx`.
    fn cov_by_conditioning(a: f64, b: f64, rho: f64) -> f64 {
        let s = (1.0 - rho * rho).sqrt();
        let f = |x: f64| norm_pdf(x) * norm_cdf((b - rho * x) / s);
        let q = adaptive_gk(&f, -40.0, a, 1e-15, 40);
        q.value - norm_cdf(a) * norm_cdf(b)
    }

    #[test]
    fn arcsine_identity_at_origin() {
        for i in -9..=9 {
            let rho = i as f64 / 10.0;
            let got = bvn_indicator_cov(0.0, 0.0, rho).unwrap();
            assert!((got - rho.asin() / (2.0 * PI)).abs() < 1e-14, "rho {rho}");
        }
        assert!((bvn_indicator_cov(0.0, 0.0, 0.5).unwrap() - 1.0 / 12.0).abs() < 1e-15);
    }

    #[test]
    fn independence_gives_zero() {
        for &(a, b) in &[(0.0, 0.0), (1.3, -2.0), (-0.4, 0.9)] {
            assert_eq!(bvn_indicator_cov(a, b, 0.0).unwrap(), 0.0);
        }
    }

    #[test]
    fn matches_conditioning_oracle() {
        for &(a, b, rho) in &[
            (0.3, -0.7, 0.6),
            (1.5, 1.2, 0.95),
            (-2.0, 0.4, -0.8),
            (2.5, 2.5, 0.999),
            (-1.0, 1.0, -0.999),
            (0.1, -2.4, 0.3),
        ] {
            let got = bvn_indicator_cov(a, b, rho).unwrap();
            let want = cov_by_conditioning(a, b, rho);
            assert!((got - want).abs() < 1e-10, "({a},{b},{rho}): {got} vs {want}");
        }
    }

    #[test]
    fn endpoints() {
        let lag0 = bvn_indicator_cov(0.5, -0.2, 1.0).unwrap();
        assert!((lag0 - (norm_cdf(-0.2) - norm_cdf(0.5) * norm_cdf(-0.2))).abs() < 1e-16);
        let near = bvn_indicator_cov(0.5, -0.2, 1.0 - 1e-12).unwrap();
        assert!((near - lag0).abs() < 1e-5);
        assert!(bvn_indicator_cov(0.0, 0.0, 1.0 + 1e-9).is_err());
        assert!(bvn_indicator_cov(0.0, 0.0, f64::NAN).is_err());
    }

    #[test]
    fn monotone_in_rho() {
        for &(a, b) in &[(0.3, -0.7), (2.0, 2.1), (-1.5, 0.0)] {
            let vals: Vec<f64> = (-100..=100)
                .map(|i| bvn_indicator_cov(a, b, i as f64 / 100.0).unwrap())
                .collect();
            for (i, w) in vals.windows(2).enumerate() {
                assert!(w[1] >= w[0] - 1e-12, "({a},{b}) step {i}: {} -> {}", w[0], w[1]);
            }
        }
    }
}
