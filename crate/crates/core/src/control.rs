//! Generalized dry friction `u = -sign <B, d rho/dx>` and its smooth
//! regularization `u = -s_n(<B, d rho/dx>)` with the frozen zone
//! `U_delta = { rho <= delta }`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gauge::{GaugeSolution, GaugeSolver, WarmStart};
use crate::system::PhaseState;

/// `|h|` below this fraction of `max(1, |grad rho|)` counts as a switch.
pub const MULTIVALUED_REL_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SmoothingConfig {
    /// Smoothing scale; the sign is smeared over `|h| ~ 1/n`.
    pub n: f64,
    /// Freeze radius in gauge units.
    pub delta: f64,
}

impl Default for SmoothingConfig {
    fn default() -> Self {
        Self { n: 1e3, delta: 1e-2 }
    }
}

impl SmoothingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.n > 0.0 && self.n.is_finite()) || !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(Error::Validation(format!(
                "smoothing needs n > 0 and delta > 0 (got n = {}, delta = {})",
                self.n, self.delta
            )));
        }
        Ok(())
    }
}

/// `m_n(h) = sqrt(h^2 + n^-2)`.
pub fn smooth_abs(h: f64, n: f64) -> f64 {
    h.hypot(1.0 / n)
}

/// `s_n(h) = m_n'(h) = h / sqrt(h^2 + n^-2)`.
pub fn smooth_sign(h: f64, n: f64) -> f64 {
    h / smooth_abs(h, n)
}

/// `h = <B, p>`: the sum of the velocity components of the normal.
fn b_projection(sol: &GaugeSolution) -> f64 {
    sol.p.as_slice().iter().skip(1).step_by(2).sum()
}

/// `h(x) = <B, d rho/dx>`.
pub fn switching_value(solver: &GaugeSolver, x: &PhaseState) -> Result<f64> {
    let sol = solver.solve(x)?;
    if sol.is_zero() {
        return Err(Error::Validation(
            "the switching value is undefined at x = 0".into(),
        ));
    }
    Ok(b_projection(&sol))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExactControl {
    /// `-sign h`, or 0 when multivalued.
    pub u: f64,
    /// `|h|` is below the reporting threshold: any `u` in `[-1, 1]` is admissible.
    pub multivalued: bool,
    pub h: f64,
}

impl ExactControl {
    /// Admissible control interval.
    pub fn interval(&self) -> (f64, f64) {
        if self.multivalued {
            (-1.0, 1.0)
        } else {
            (self.u, self.u)
        }
    }
}

pub fn control_exact(solver: &GaugeSolver, x: &PhaseState) -> Result<ExactControl> {
    let sol = solver.solve(x)?;
    if sol.is_zero() {
        return Err(Error::Validation(
            "the exact control is undefined at x = 0".into(),
        ));
    }
    let h = b_projection(&sol);
    let threshold = MULTIVALUED_REL_TOL * sol.p.norm().max(1.0);
    Ok(if h.abs() <= threshold {
        ExactControl {
            u: 0.0,
            multivalued: true,
            h,
        }
    } else {
        ExactControl {
            u: -h.signum(),
            multivalued: false,
            h,
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SmoothedControl {
    Frozen { rho: f64 },
    Active { u: f64, h: f64, rho: f64 },
}

impl SmoothedControl {
    pub fn is_frozen(&self) -> bool {
        matches!(self, SmoothedControl::Frozen { .. })
    }

    pub fn rho(&self) -> f64 {
        match *self {
            SmoothedControl::Frozen { rho } | SmoothedControl::Active { rho, .. } => rho,
        }
    }

    /// Control value, 0 when frozen.
    pub fn u(&self) -> f64 {
        match *self {
            SmoothedControl::Frozen { .. } => 0.0,
            SmoothedControl::Active { u, .. } => u,
        }
    }
}

pub fn control_smoothed(
    solver: &GaugeSolver,
    x: &PhaseState,
    scfg: &SmoothingConfig,
) -> Result<SmoothedControl> {
    control_smoothed_warm(solver, x.as_slice(), scfg, &mut WarmStart::default())
}

/// Same as [`control_smoothed`], reusing and updating a warm start.
pub fn control_smoothed_warm(
    solver: &GaugeSolver,
    x: &[f64],
    scfg: &SmoothingConfig,
    warm: &mut WarmStart,
) -> Result<SmoothedControl> {
    let (sol, h) = feedback(solver, x, warm)?;
    Ok(if sol.rho <= scfg.delta {
        SmoothedControl::Frozen { rho: sol.rho }
    } else {
        SmoothedControl::Active {
            u: -smooth_sign(h, scfg.n),
            h,
            rho: sol.rho,
        }
    })
}

/// Rate `d rho/dt = <grad rho, Ax> - s_n(h) h` along the smoothed field,
/// together with the drift term `<grad rho, Ax>` (zero up to solver error).
pub fn feedback_rate(solver: &GaugeSolver, x: &[f64], n: f64) -> Result<(f64, f64)> {
    let (sol, h) = feedback(solver, x, &mut WarmStart::default())?;
    if sol.is_zero() {
        return Ok((0.0, 0.0));
    }
    let sys = solver.system();
    let mut ax = vec![0.0; x.len()];
    sys.apply_a(x, &mut ax);
    let drift = crate::system::dot(sol.p.as_slice(), &ax);
    Ok((drift - smooth_sign(h, n) * h, drift))
}

/// Gauge solution and switching value; `h = 0` at the origin.
pub(crate) fn feedback(
    solver: &GaugeSolver,
    x: &[f64],
    warm: &mut WarmStart,
) -> Result<(GaugeSolution, f64)> {
    solver.system().check_len(x, "phase state")?;
    let sol = solver.solve_warm(x, warm)?;
    let h = if sol.is_zero() { 0.0 } else { b_projection(&sol) };
    Ok((sol, h))
}
