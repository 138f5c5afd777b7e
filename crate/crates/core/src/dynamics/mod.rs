//! Closed-loop simulation of `x' = Ax - B s_n(h(x))` with the frozen zone,
//! plus the studies built on it.

mod export;
mod optimal;
mod studies;

pub use export::{write_csv, CSV_FORMAT_VERSION};
pub use optimal::{
    compare_optimal, optimal_time_1osc, propagate_arc, replay_schedule, CompareCase,
    CompareConfig, CompareReport, OptimalSchedule, SearchOptions,
};
pub use studies::{
    converge_in_n, lipschitz_probe, semigroup_check, transport_residual, ConvergenceReport,
    TestFunction, TransportGrid, TransportReport,
};

use serde::{Deserialize, Serialize};

use crate::control::{feedback, smooth_sign, SmoothingConfig};
use crate::error::{Error, Result};
use crate::gauge::{GaugeSolver, SolverOptions, WarmStart};
use crate::support::{Quadrature, QuadratureConfig};
use crate::system::{norm, OscillatorSystem, PhaseState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub dt_base: f64,
    pub horizon: f64,
    pub smoothing: SmoothingConfig,
    pub quadrature: QuadratureConfig,
    pub solver: SolverOptions,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt_base: 1e-3,
            horizon: 10.0,
            smoothing: SmoothingConfig::default(),
            quadrature: QuadratureConfig::default(),
            solver: SolverOptions::default(),
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt_base > 0.0 && self.dt_base.is_finite()) {
            return Err(Error::Validation("dt_base must be positive".into()));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::Validation("horizon must be positive".into()));
        }
        self.smoothing.validate()?;
        self.quadrature.validate()?;
        self.solver.validate()
    }

    /// Effective step `min(dt_base, 0.1 / n)`, resolving the `1/n` layer.
    pub fn dt(&self) -> f64 {
        self.dt_base.min(0.1 / self.smoothing.n)
    }

    /// Number of steps covering `t` (rounded up).
    pub fn steps_for(&self, t: f64) -> usize {
        let k = t / self.dt();
        let r = k.round();
        if (k - r).abs() <= 1e-9 * r.max(1.0) {
            r as usize
        } else {
            k.ceil() as usize
        }
    }

    /// Step count if `t` is a whole number of steps.
    pub fn aligned_steps(&self, t: f64) -> Option<usize> {
        let k = t / self.dt();
        let r = k.round();
        ((k - r).abs() <= 1e-9 * r.max(1.0)).then_some(r as usize)
    }

    pub fn with_n(&self, n: f64) -> Self {
        let mut c = self.clone();
        c.smoothing.n = n;
        c
    }
}

/// Sampled closed-loop run. Row `k` is at `t = k dt`; `controls[k]` is the
/// control applied from that row on (0 once frozen).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub dt: f64,
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub controls: Vec<f64>,
    pub rho_values: Vec<f64>,
    pub h_values: Vec<f64>,
    /// Index of the row at which the state entered `U_delta`; the run stops
    /// there and the state is held from then on.
    pub frozen_from: Option<usize>,
}

impl Trajectory {
    fn new(dt: f64) -> Self {
        Self {
            dt,
            times: Vec::new(),
            states: Vec::new(),
            controls: Vec::new(),
            rho_values: Vec::new(),
            h_values: Vec::new(),
            frozen_from: None,
        }
    }

    fn push(&mut self, k: usize, x: &[f64], u: f64, rho: f64, h: f64) {
        self.times.push(k as f64 * self.dt);
        self.states.push(x.to_vec());
        self.controls.push(u);
        self.rho_values.push(rho);
        self.h_values.push(h);
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn is_frozen(&self, k: usize) -> bool {
        self.frozen_from.is_some_and(|f| k >= f)
    }

    pub fn final_state(&self) -> &[f64] {
        self.states.last().expect("trajectory has at least one row")
    }

    pub fn end_time(&self) -> f64 {
        *self.times.last().unwrap_or(&0.0)
    }

    /// State at time `t`: exact at grid times, linear in between, and the
    /// held state after a freeze. `None` past the end of an unfrozen run.
    pub fn state_at(&self, t: f64) -> Option<Vec<f64>> {
        let u = t / self.dt;
        let k = u.round();
        let last = self.len() - 1;
        if (u - k).abs() <= 1e-9 * k.max(1.0) {
            let k = k as usize;
            return if k <= last {
                Some(self.states[k].clone())
            } else if self.frozen_from.is_some() {
                Some(self.states[last].clone())
            } else {
                None
            };
        }
        let k0 = u.floor() as usize;
        if k0 >= last {
            return self.frozen_from.map(|_| self.states[last].clone());
        }
        let w = u - k0 as f64;
        Some(
            self.states[k0]
                .iter()
                .zip(&self.states[k0 + 1])
                .map(|(a, b)| a + w * (b - a))
                .collect(),
        )
    }

    /// Largest increase of `rho` between consecutive rows.
    pub fn max_rho_increase(&self) -> f64 {
        self.rho_values
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Simulator bound to one system and config. Each run owns its warm start.
pub struct Simulator<'a> {
    sys: &'a OscillatorSystem,
    quad: Quadrature,
    cfg: SimConfig,
}

/// Field value plus the feedback quantities at the evaluation point.
struct Sample {
    rho: f64,
    h: f64,
    u: f64,
}

impl<'a> Simulator<'a> {
    pub fn new(sys: &'a OscillatorSystem, cfg: &SimConfig) -> Result<Self> {
        cfg.validate()?;
        let quad = Quadrature::new(&cfg.quadrature, sys.len())?;
        Ok(Self {
            sys,
            quad,
            cfg: cfg.clone(),
        })
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    pub fn quadrature(&self) -> &Quadrature {
        &self.quad
    }

    pub fn solver(&self) -> GaugeSolver<'_> {
        GaugeSolver::new(self.sys, &self.quad, self.cfg.solver.clone())
    }

    fn field(
        &self,
        solver: &GaugeSolver,
        x: &[f64],
        warm: &mut WarmStart,
        out: &mut [f64],
    ) -> Result<Sample> {
        let (sol, h) = feedback(solver, x, warm)?;
        let u = if sol.is_zero() {
            0.0
        } else {
            -smooth_sign(h, self.cfg.smoothing.n)
        };
        self.sys.apply_a(x, out);
        for i in 0..self.sys.len() {
            out[2 * i + 1] += u;
        }
        Ok(Sample { rho: sol.rho, h, u })
    }

    /// Regularized field `F(x) = Ax + B u(x)` (no freeze).
    pub fn vector_field(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.sys.check_len(x, "phase state")?;
        let mut out = vec![0.0; x.len()];
        self.field(&self.solver(), x, &mut WarmStart::default(), &mut out)?;
        Ok(out)
    }

    /// Run to the configured horizon.
    pub fn run(&self, x0: &PhaseState) -> Result<Trajectory> {
        self.run_steps(x0, self.cfg.steps_for(self.cfg.horizon), None)
    }

    /// Run for `steps` steps, stopping early on freeze or, if given, once
    /// `rho <= stop_rho` at a step boundary.
    pub fn run_steps(
        &self,
        x0: &PhaseState,
        steps: usize,
        stop_rho: Option<f64>,
    ) -> Result<Trajectory> {
        self.sys.check_len(x0.as_slice(), "initial state")?;
        let dt = self.cfg.dt();
        let delta = self.cfg.smoothing.delta;
        let solver = self.solver();
        let mut warm = WarmStart::default();
        let mut traj = Trajectory::new(dt);
        let d = x0.as_slice().len();
        let mut x = x0.as_slice().to_vec();
        let (mut k1, mut k2, mut k3, mut k4) =
            (vec![0.0; d], vec![0.0; d], vec![0.0; d], vec![0.0; d]);
        let mut tmp = vec![0.0; d];

        let fail = |traj: &Trajectory, k: usize, e: Error| Error::Simulation {
            time: k as f64 * dt,
            reason: e.to_string(),
            partial: Box::new(traj.clone()),
        };

        for k in 0..=steps {
            let s = match self.field(&solver, &x, &mut warm, &mut k1) {
                Ok(s) => s,
                Err(e) => return Err(fail(&traj, k, e)),
            };
            if s.rho <= delta {
                traj.push(k, &x, 0.0, s.rho, s.h);
                traj.frozen_from = Some(k);
                break;
            }
            traj.push(k, &x, s.u, s.rho, s.h);
            if k == steps || stop_rho.is_some_and(|r| s.rho <= r) {
                break;
            }
            // The stage warm start is kept separate so the step-boundary
            // solve always starts from the previous boundary.
            let mut stage = warm.clone();
            let stages = (|| -> Result<()> {
                for (i, v) in tmp.iter_mut().enumerate() {
                    *v = x[i] + 0.5 * dt * k1[i];
                }
                self.field(&solver, &tmp, &mut stage, &mut k2)?;
                for (i, v) in tmp.iter_mut().enumerate() {
                    *v = x[i] + 0.5 * dt * k2[i];
                }
                self.field(&solver, &tmp, &mut stage, &mut k3)?;
                for (i, v) in tmp.iter_mut().enumerate() {
                    *v = x[i] + dt * k3[i];
                }
                self.field(&solver, &tmp, &mut stage, &mut k4)?;
                Ok(())
            })();
            if let Err(e) = stages {
                return Err(fail(&traj, k, e));
            }
            for i in 0..d {
                x[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
            if x.iter().any(|v| !v.is_finite()) {
                return Err(fail(
                    &traj,
                    k + 1,
                    Error::Validation("state became non-finite".into()),
                ));
            }
        }
        Ok(traj)
    }

    /// First time `rho <= level`, interpolated linearly between rows;
    /// `None` if not reached within `max_time`.
    pub fn first_passage(&self, x0: &PhaseState, level: f64, max_time: f64) -> Result<Option<f64>> {
        let traj = self.run_steps(x0, self.cfg.steps_for(max_time), Some(level))?;
        let r = &traj.rho_values;
        let k = r.len() - 1;
        if r[k] > level {
            return Ok(None);
        }
        if k == 0 {
            return Ok(Some(0.0));
        }
        let w = (r[k - 1] - level) / (r[k - 1] - r[k]);
        Ok(Some(traj.times[k - 1] + w * traj.dt))
    }
}

/// Run the closed loop from `x0` to `cfg.horizon`.
pub fn simulate(sys: &OscillatorSystem, x0: &PhaseState, cfg: &SimConfig) -> Result<Trajectory> {
    Simulator::new(sys, cfg)?.run(x0)
}

/// Energy norm `(sum w_i^2 x_i^2 + y_i^2)^(1/2)`. The drift preserves it and
/// the control changes it at rate at most `sqrt(N)`.
pub fn energy_norm(sys: &OscillatorSystem, x: &[f64]) -> f64 {
    let mut s = 0.0;
    for (i, &w) in sys.frequencies().iter().enumerate() {
        s += (w * x[2 * i]).powi(2) + x[2 * i + 1].powi(2);
    }
    s.sqrt()
}

pub(crate) fn distance(a: &[f64], b: &[f64]) -> f64 {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    norm(&d)
}
