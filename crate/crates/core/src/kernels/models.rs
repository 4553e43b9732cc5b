use crate::error::{Error, Result};
use crate::numeric::KahanSum;

/// Relative threshold below which ψ-weights are treated as negligible.
const PSI_TOL: f64 = 1e-12;
/// Hard cap on the number of ψ-weights.
const PSI_CAP: usize = 100_000;

/// `X_t = μ + ε_t + Σ_j θ_j ε_{t−j}`, `ε_t ~ N(0, σ²)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MaModel {
    pub mean: f64,
    pub theta: Vec<f64>,
    pub sigma2: f64,
}

impl MaModel {
    pub fn new(mean: f64, theta: Vec<f64>, sigma2: f64) -> Result<Self> {
        check_innovations(sigma2)?;
        check_finite("theta", &theta)?;
        if !mean.is_finite() {
            return Err(Error::InvalidModel("mean must be finite".into()));
        }
        Ok(Self { mean, theta, sigma2 })
    }

    /// The MA(3) with θ = (0.6, 0.4, 0.2) and unit innovations.
    pub fn ma3(mean: f64) -> Self {
        Self {
            mean,
            theta: vec![0.6, 0.4, 0.2],
            sigma2: 1.0,
        }
    }

    pub fn order(&self) -> usize {
        self.theta.len()
    }
}

/// `Φ(B)(X_t − μ) = Θ(B) ε_t` with `Φ(z) = 1 − Σ φ_i zⁱ` and
/// `Θ(z) = 1 + Σ θ_j z^j`. Construction enforces causality.
#[derive(Debug, Clone, PartialEq)]
pub struct ArmaModel {
    pub mean: f64,
    pub phi: Vec<f64>,
    pub theta: Vec<f64>,
    pub sigma2: f64,
}

impl ArmaModel {
    pub fn new(mean: f64, phi: Vec<f64>, theta: Vec<f64>, sigma2: f64) -> Result<Self> {
        check_innovations(sigma2)?;
        check_finite("phi", &phi)?;
        check_finite("theta", &theta)?;
        if !mean.is_finite() {
            return Err(Error::InvalidModel("mean must be finite".into()));
        }
        if !is_stationary(&phi) {
            return Err(Error::InvalidModel(format!(
                "AR polynomial with phi = {phi:?} has a root on or inside the unit circle"
            )));
        }
        Ok(Self { mean, phi, theta, sigma2 })
    }

    /// The ARMA(5,3) with
    /// `Φ(B) = 1 − 0.7B + 0.25B² + 0.18B³ − 0.12B⁴ + 0.08B⁵` and
    /// `Θ(B) = 1 + 0.5B − 0.4B² + 0.25B³`.
    pub fn arma53(mean: f64) -> Self {
        Self::new(
            mean,
            vec![0.7, -0.25, -0.18, 0.12, -0.08],
            vec![0.5, -0.4, 0.25],
            1.0,
        )
        .expect("reference ARMA(5,3) is stationary")
    }

    pub fn from_ma(ma: &MaModel) -> Self {
        Self {
            mean: ma.mean,
            phi: Vec::new(),
            theta: ma.theta.clone(),
            sigma2: ma.sigma2,
        }
    }

    pub fn ar_order(&self) -> usize {
        self.phi.len()
    }

    pub fn ma_order(&self) -> usize {
        self.theta.len()
    }

    /// Causal MA(∞) weights, truncated once `max(p, 1)` consecutive
    /// weights beyond lag `q` fall below `1e-12 · max|ψ|`.
    pub fn psi_weights(&self) -> Result<Vec<f64>> {
        let (p, q) = (self.phi.len(), self.theta.len());
        let run_needed = p.max(1);
        let mut psi = vec![1.0];
        let mut max_abs: f64 = 1.0;
        let mut run = 0;
        for j in 1..PSI_CAP {
            let mut v = if j <= q { self.theta[j - 1] } else { 0.0 };
            for i in 1..=p.min(j) {
                v += self.phi[i - 1] * psi[j - i];
            }
            max_abs = max_abs.max(v.abs());
            psi.push(v);
            if j > q && v.abs() < PSI_TOL * max_abs {
                run += 1;
                if run >= run_needed {
                    return Ok(psi);
                }
            } else {
                run = 0;
            }
            if p == 0 && j >= q {
                return Ok(psi);
            }
        }
        Err(Error::NumericalFailure {
            message: format!("psi-weights did not decay within {PSI_CAP} terms"),
            partial: None,
        })
    }
}

fn check_innovations(sigma2: f64) -> Result<()> {
    if !(sigma2 > 0.0 && sigma2.is_finite()) {
        return Err(Error::InvalidModel(format!("innovation variance must be > 0, got {sigma2}")));
    }
    Ok(())
}

fn check_finite(name: &str, v: &[f64]) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidModel(format!("{name} coefficients must be finite")))
    }
}

/// Schur–Cohn test: `1 − Σ φ_i zⁱ` has all roots strictly outside the
/// unit disc iff every reflection coefficient of the step-down recursion
/// has modulus below one.
pub fn is_stationary(phi: &[f64]) -> bool {
    let mut a = phi.to_vec();
    while let Some(&k) = a.last() {
        if !(k.abs() < 1.0) {
            return false;
        }
        let m = a.len();
        let denom = 1.0 - k * k;
        let next: Vec<f64> = (0..m - 1).map(|i| (a[i] + k * a[m - 2 - i]) / denom).collect();
        a = next;
    }
    true
}

/// Autocovariances `γ(0..=K)` of a stationary model plus its marginal mean.
#[derive(Debug, Clone, PartialEq)]
pub struct AcvfSequence {
    gamma: Vec<f64>,
    mean: f64,
}

impl AcvfSequence {
    pub fn new(gamma: Vec<f64>, mean: f64) -> Result<Self> {
        let Some(&g0) = gamma.first() else {
            return Err(Error::invalid("autocovariance sequence is empty"));
        };
        if !(g0 > 0.0) || gamma.iter().any(|g| !g.is_finite()) || !mean.is_finite() {
            return Err(Error::invalid("autocovariances must be finite with gamma(0) > 0"));
        }
        if let Some((h, g)) = gamma.iter().enumerate().find(|(_, g)| g.abs() > g0 * (1.0 + 1e-12)) {
            return Err(Error::invalid(format!("|gamma({h})| = {} exceeds gamma(0) = {g0}", g.abs())));
        }
        Ok(Self { gamma, mean })
    }

    pub fn gamma(&self) -> &[f64] {
        &self.gamma
    }

    /// Truncation lag `K`.
    pub fn max_lag(&self) -> usize {
        self.gamma.len() - 1
    }

    pub fn variance(&self) -> f64 {
        self.gamma[0]
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// `ρ_k = γ(k) / γ(0)`, clamped to `[-1, 1]`.
    pub fn rho(&self, k: usize) -> f64 {
        (self.gamma[k] / self.gamma[0]).clamp(-1.0, 1.0)
    }
}

/// Closed-form MA autocovariances: `γ(h) = σ² Σ_{j=0}^{q−h} ψ_j ψ_{j+h}`
/// for `h ≤ q`, zero beyond.
pub fn ma_acvf(model: &MaModel, max_lag: usize) -> Result<AcvfSequence> {
    let q = model.order();
    if max_lag < q {
        return Err(Error::invalid(format!("truncation lag {max_lag} is below the MA order {q}")));
    }
    let psi: Vec<f64> = std::iter::once(1.0).chain(model.theta.iter().copied()).collect();
    let gamma = (0..=max_lag)
        .map(|h| {
            if h > q {
                0.0
            } else {
                let s: KahanSum = (0..=q - h).map(|j| psi[j] * psi[j + h]).collect();
                model.sigma2 * s.value()
            }
        })
        .collect();
    AcvfSequence::new(gamma, model.mean)
}

/// Model-implied ARMA autocovariances `γ(h) = σ² Σ_j ψ_j ψ_{j+h}` from the
/// truncated causal representation.
pub fn arma_acvf(model: &ArmaModel, max_lag: usize) -> Result<AcvfSequence> {
    if max_lag < 1 {
        return Err(Error::invalid("truncation lag must be at least 1"));
    }
    if !is_stationary(&model.phi) {
        return Err(Error::InvalidModel("AR polynomial is not causal".into()));
    }
    let psi = model.psi_weights()?;
    let gamma = (0..=max_lag)
        .map(|h| {
            if h >= psi.len() {
                return 0.0;
            }
            let s: KahanSum = psi.iter().zip(&psi[h..]).map(|(a, b)| a * b).collect();
            model.sigma2 * s.value()
        })
        .collect();
    AcvfSequence::new(gamma, model.mean)
}
