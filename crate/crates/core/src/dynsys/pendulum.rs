//! Planar double pendulum with point masses.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::stream_rng;

/// Largest relative energy drift tolerated along a trajectory.
pub const DRIFT_TOL: f64 = 1e-5;
const MAX_ATTEMPTS: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PendulumParams {
    pub m1: f64,
    pub m2: f64,
    pub l1: f64,
    pub l2: f64,
    pub g: f64,
}

impl Default for PendulumParams {
    /// Unit masses, 2 m rods, `g = 9.81`.
    fn default() -> Self {
        Self {
            m1: 1.0,
            m2: 1.0,
            l1: 2.0,
            l2: 2.0,
            g: 9.81,
        }
    }
}

impl PendulumParams {
    pub fn validate(&self) -> Result<()> {
        let all = [self.m1, self.m2, self.l1, self.l2, self.g];
        if all.iter().all(|v| v.is_finite() && *v > 0.0) {
            Ok(())
        } else {
            Err(Error::invalid(format!("pendulum parameters must be positive and finite: {self:?}")))
        }
    }

    pub fn total_mass(&self) -> f64 {
        self.m1 + self.m2
    }

    /// `min V = −M g l₁ − m₂ g l₂`.
    pub fn min_potential(&self) -> f64 {
        -self.total_mass() * self.g * self.l1 - self.m2 * self.g * self.l2
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PendulumState {
    pub theta1: f64,
    pub omega1: f64,
    pub theta2: f64,
    pub omega2: f64,
}

impl PendulumState {
    fn axpy(self, h: f64, d: Self) -> Self {
        Self {
            theta1: self.theta1 + h * d.theta1,
            omega1: self.omega1 + h * d.omega1,
            theta2: self.theta2 + h * d.theta2,
            omega2: self.omega2 + h * d.omega2,
        }
    }

    /// The state with both angular velocities negated.
    pub fn reversed(self) -> Self {
        Self {
            omega1: -self.omega1,
            omega2: -self.omega2,
            ..self
        }
    }

    pub fn get(&self, obs: Observable) -> f64 {
        match obs {
            Observable::Theta1 => self.theta1,
            Observable::Omega1 => self.omega1,
            Observable::Theta2 => self.theta2,
            Observable::Omega2 => self.omega2,
        }
    }
}

/// `V = −M g l₁ cos θ₁ − m₂ g l₂ cos θ₂`.
pub fn potential_energy(s: &PendulumState, p: &PendulumParams) -> f64 {
    -p.total_mass() * p.g * p.l1 * s.theta1.cos() - p.m2 * p.g * p.l2 * s.theta2.cos()
}

pub fn total_energy(s: &PendulumState, p: &PendulumParams) -> f64 {
    let kinetic = 0.5 * p.total_mass() * p.l1 * p.l1 * s.omega1 * s.omega1
        + 0.5 * p.m2 * p.l2 * p.l2 * s.omega2 * s.omega2
        + p.m2 * p.l1 * p.l2 * s.omega1 * s.omega2 * (s.theta1 - s.theta2).cos();
    kinetic + potential_energy(s, p)
}

/// Roots `(ω₂₋, ω₂₊)` of `Aω₂² + Bω₂ + C = 0`, the energy equation at fixed
/// angles and `ω₁`. `None` when no real root exists.
pub fn solve_omega2(theta1: f64, theta2: f64, omega1: f64, energy: f64, p: &PendulumParams) -> Option<(f64, f64)> {
    let v = potential_energy(
        &PendulumState {
            theta1,
            theta2,
            ..Default::default()
        },
        p,
    );
    let a = p.m2 * p.l2 * p.l2;
    let b = 2.0 * p.m2 * p.l1 * p.l2 * omega1 * (theta1 - theta2).cos();
    let c = p.total_mass() * p.l1 * p.l1 * omega1 * omega1 - 2.0 * (energy - v);
    let mut disc = b * b - 4.0 * a * c;
    let scale = b * b + (4.0 * a * c).abs();
    if disc < 0.0 {
        // rounding at the ω₁ bound
        if disc < -1e-12 * scale {
            return None;
        }
        disc = 0.0;
    }
    let root = disc.sqrt();
    Some(((-b - root) / (2.0 * a), (-b + root) / (2.0 * a)))
}

/// Uniform angles with rejection of `V > E`, `ω₁` uniform within the bound
/// that keeps the quadratic solvable, then `ω₂` from a fair-coin root.
pub fn sample_initial_condition<R: Rng + ?Sized>(energy: f64, p: &PendulumParams, rng: &mut R) -> Result<PendulumState> {
    p.validate()?;
    if !(energy.is_finite() && energy > p.min_potential()) {
        return Err(Error::invalid(format!(
            "energy {energy} must exceed the potential minimum {}",
            p.min_potential()
        )));
    }
    for _ in 0..MAX_ATTEMPTS {
        let theta1 = rng.random_range(-PI..PI);
        let theta2 = rng.random_range(-PI..PI);
        let v = potential_energy(
            &PendulumState {
                theta1,
                theta2,
                ..Default::default()
            },
            p,
        );
        if v > energy {
            continue;
        }
        let sin_d = (theta1 - theta2).sin();
        let omega1_max = (2.0 * (energy - v) / (p.l1 * p.l1 * (p.m1 + p.m2 * sin_d * sin_d))).sqrt();
        let omega1 = if omega1_max > 0.0 {
            rng.random_range(-omega1_max..=omega1_max)
        } else {
            0.0
        };
        let (lo, hi) = solve_omega2(theta1, theta2, omega1, energy, p)
            .ok_or_else(|| Error::numerical("negative discriminant inside the ω₁ bound"))?;
        let omega2 = if rng.random_bool(0.5) { hi } else { lo };
        return Ok(PendulumState {
            theta1,
            omega1,
            theta2,
            omega2,
        });
    }
    Err(Error::numerical(format!(
        "no admissible configuration at energy {energy} after {MAX_ATTEMPTS} attempts"
    )))
}

fn derivative(s: PendulumState, p: &PendulumParams) -> PendulumState {
    let m = p.total_mass();
    let d = s.theta1 - s.theta2;
    let (sd, cd) = d.sin_cos();
    let den = p.m1 + p.m2 * sd * sd;
    let w1 = s.omega1 * s.omega1;
    let w2 = s.omega2 * s.omega2;
    let a1 = (-p.m2 * p.l1 * w1 * sd * cd + p.m2 * p.g * s.theta2.sin() * cd
        - p.m2 * p.l2 * w2 * sd
        - m * p.g * s.theta1.sin())
        / (p.l1 * den);
    let a2 = (p.m2 * p.l2 * w2 * sd * cd + m * p.g * s.theta1.sin() * cd + m * p.l1 * w1 * sd
        - m * p.g * s.theta2.sin())
        / (p.l2 * den);
    PendulumState {
        theta1: s.omega1,
        omega1: a1,
        theta2: s.omega2,
        omega2: a2,
    }
}

fn rk4_step(s: PendulumState, p: &PendulumParams, dt: f64) -> PendulumState {
    let k1 = derivative(s, p);
    let k2 = derivative(s.axpy(0.5 * dt, k1), p);
    let k3 = derivative(s.axpy(0.5 * dt, k2), p);
    let k4 = derivative(s.axpy(dt, k3), p);
    PendulumState {
        theta1: s.theta1 + dt / 6.0 * (k1.theta1 + 2.0 * k2.theta1 + 2.0 * k3.theta1 + k4.theta1),
        omega1: s.omega1 + dt / 6.0 * (k1.omega1 + 2.0 * k2.omega1 + 2.0 * k3.omega1 + k4.omega1),
        theta2: s.theta2 + dt / 6.0 * (k1.theta2 + 2.0 * k2.theta2 + 2.0 * k3.theta2 + k4.theta2),
        omega2: s.omega2 + dt / 6.0 * (k1.omega2 + 2.0 * k2.omega2 + 2.0 * k3.omega2 + k4.omega2),
    }
}

fn relative_drift(e: f64, e0: f64) -> f64 {
    (e - e0).abs() / e0.abs().max(f64::MIN_POSITIVE)
}

/// Fixed-step RK4. Returns `n_steps + 1` states starting with `s0`; fails if
/// the relative energy drift ever exceeds [`DRIFT_TOL`].
pub fn integrate(s0: PendulumState, p: &PendulumParams, dt: f64, n_steps: usize) -> Result<Vec<PendulumState>> {
    p.validate()?;
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::invalid(format!("time step must be positive, got {dt}")));
    }
    let e0 = total_energy(&s0, p);
    let mut out = Vec::with_capacity(n_steps + 1);
    out.push(s0);
    let mut s = s0;
    for step in 1..=n_steps {
        s = rk4_step(s, p, dt);
        let drift = relative_drift(total_energy(&s, p), e0);
        if !drift.is_finite() || drift > DRIFT_TOL {
            return Err(Error::numerical(format!(
                "relative energy drift {drift:e} at step {step} exceeds {DRIFT_TOL:e}; use a smaller time step"
            )));
        }
        out.push(s);
    }
    Ok(out)
}

/// Maps to `[−π, π)`.
pub fn wrap_angle(x: f64) -> f64 {
    let w = x - 2.0 * PI * ((x + PI) / (2.0 * PI)).floor();
    if w >= PI {
        w - 2.0 * PI
    } else if w < -PI {
        -PI
    } else {
        w
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Observable {
    Theta1,
    Omega1,
    Theta2,
    Omega2,
}

impl Observable {
    pub const ALL: [Observable; 4] = [Self::Theta1, Self::Omega1, Self::Theta2, Self::Omega2];

    pub fn is_angle(self) -> bool {
        matches!(self, Self::Theta1 | Self::Theta2)
    }
}

impl fmt::Display for Observable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Theta1 => "theta1",
            Self::Omega1 => "omega1",
            Self::Theta2 => "theta2",
            Self::Omega2 => "omega2",
        })
    }
}

impl FromStr for Observable {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|o| o.to_string() == s)
            .ok_or_else(|| Error::Parse(format!("unknown observable '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleConfig {
    pub energy: f64,
    pub n_traj: usize,
    /// Integration steps per trajectory, burn-in included.
    pub n_steps: usize,
    pub dt: f64,
    pub burn_in: usize,
    pub record: Vec<Observable>,
    pub seed: u64,
}

impl EnsembleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_steps <= self.burn_in {
            return Err(Error::invalid("n_steps must exceed burn_in"));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::invalid("dt must be positive"));
        }
        if self.n_traj == 0 || self.record.is_empty() {
            return Err(Error::invalid("need at least one trajectory and one observable"));
        }
        Ok(())
    }
}

/// Per observable in `cfg.record` order, one series per trajectory holding
/// the `n_steps − burn_in` states after the burn-in. Trajectory `m` samples
/// its initial condition from stream `m` of `cfg.seed`.
pub fn generate_ensemble(cfg: &EnsembleConfig, p: &PendulumParams) -> Result<Vec<(Observable, Vec<Vec<f64>>)>> {
    cfg.validate()?;
    let per_traj: Vec<Vec<Vec<f64>>> = (0..cfg.n_traj)
        .into_par_iter()
        .map(|m| {
            let mut rng = stream_rng(cfg.seed, m as u64);
            let s0 = sample_initial_condition(cfg.energy, p, &mut rng)?;
            let states = integrate(s0, p, cfg.dt, cfg.n_steps)?;
            let kept = &states[cfg.burn_in + 1..];
            Ok(cfg
                .record
                .iter()
                .map(|&obs| {
                    kept.iter()
                        .map(|s| {
                            let v = s.get(obs);
                            if obs.is_angle() {
                                wrap_angle(v)
                            } else {
                                v
                            }
                        })
                        .collect()
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    let mut out: Vec<(Observable, Vec<Vec<f64>>)> = cfg.record.iter().map(|&o| (o, Vec::with_capacity(cfg.n_traj))).collect();
    for traj in per_traj {
        for (slot, series) in out.iter_mut().zip(traj) {
            slot.1.push(series);
        }
    }
    Ok(out)
}
