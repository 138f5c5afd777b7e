//! Generalized dry-friction damping of `N` linear oscillators
//! `x_i'' + w_i^2 x_i = u`, `|u| <= 1`.
//!
//! The feedback is `u = -sign <B, d rho/dx>` where `rho` is the gauge of the
//! limit reachable-set body `Omega`, whose support function is the torus
//! average `H(p) = E|sum z_i cos phi_i|` of the adjoint amplitudes `z_i`.
//! Simulation uses the smooth regularization `-s_n(h)` and freezes the state
//! inside `{rho <= delta}`.

pub mod check;
pub mod config;
pub mod control;
pub mod dynamics;
pub mod error;
pub mod gauge;
pub mod report;
pub mod support;
pub mod system;

pub use control::{
    control_exact, control_smoothed, smooth_abs, smooth_sign, switching_value, ExactControl,
    SmoothedControl, SmoothingConfig,
};
pub use dynamics::{simulate, SimConfig, Simulator, Trajectory};
pub use error::{Error, Result};
pub use gauge::{duality_residual, rho_grad, GaugeSolution, GaugeSolver, SolverOptions, WarmStart};
pub use support::{
    omega_support, support_eval, support_grad, AmplitudeVector, Backend, Measure, Quadrature,
    QuadratureConfig, SupportEstimate,
};
pub use system::{resonance_check, DualVector, OscillatorSystem, PhaseState, ResonanceReport};
