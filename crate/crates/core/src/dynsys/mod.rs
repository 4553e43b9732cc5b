//! Data generators: Gaussian MA/ARMA paths and double-pendulum ensembles.

mod linear;
mod pendulum;

pub use linear::{simulate_arma, simulate_ma, DEFAULT_ARMA_BURN_IN};
pub use pendulum::{
    generate_ensemble, integrate, potential_energy, sample_initial_condition, solve_omega2, total_energy,
    wrap_angle, EnsembleConfig, Observable, PendulumParams, PendulumState, DRIFT_TOL,
};
