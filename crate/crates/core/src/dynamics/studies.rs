//! Numerical witnesses for the semiflow: semigroup property, convergence
//! as `n` grows, local Lipschitz continuity and the transport equation
//! `dv/dt = <F, dv/dx>` for `v(x, t) = v0(phi_t(x))`.

use serde::{Deserialize, Serialize};

use super::{distance, SimConfig, Simulator, Trajectory};
use crate::error::{Error, Result};
use crate::system::{norm, OscillatorSystem, PhaseState};

/// `|phi_{t+s}(x0) - phi_s(phi_t(x0))|` with both `t` and `s` on the step grid.
pub fn semigroup_check(
    sys: &OscillatorSystem,
    x0: &PhaseState,
    cfg: &SimConfig,
    t: f64,
    s: f64,
) -> Result<f64> {
    let sim = Simulator::new(sys, cfg)?;
    let (kt, ks) = match (cfg.aligned_steps(t), cfg.aligned_steps(s)) {
        (Some(a), Some(b)) => (a, b),
        _ => {
            return Err(Error::Validation(format!(
                "t = {t} and s = {s} must be multiples of dt = {}",
                cfg.dt()
            )))
        }
    };
    let direct = sim.run_steps(x0, kt + ks, None)?;
    let first = sim.run_steps(x0, kt, None)?;
    let mid = PhaseState::new(first.final_state().to_vec())?;
    let second = sim.run_steps(&mid, ks, None)?;
    Ok(distance(direct.final_state(), second.final_state()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub n_values: Vec<f64>,
    pub dt_values: Vec<f64>,
    /// `d_k = max_t |x^{n_k}(t) - x^{n_{k+1}}(t)|` on the coarser time grid.
    pub distances: Vec<f64>,
    /// `log2(d_k / d_{k+1})` for consecutive distances (informational).
    pub observed_rates: Vec<f64>,
}

impl ConvergenceReport {
    pub fn strictly_decreasing(&self) -> bool {
        self.distances.windows(2).all(|w| w[1] < w[0])
    }
}

/// Max distance between two runs over the time grid of `a`, up to `horizon`.
fn sup_distance(a: &Trajectory, b: &Trajectory, horizon: f64) -> f64 {
    let mut worst: f64 = 0.0;
    let steps = (horizon / a.dt).round() as usize;
    for k in 0..=steps {
        let t = k as f64 * a.dt;
        if let (Some(xa), Some(xb)) = (a.state_at(t), b.state_at(t)) {
            worst = worst.max(distance(&xa, &xb));
        }
    }
    worst
}

pub fn converge_in_n(
    sys: &OscillatorSystem,
    x0: &PhaseState,
    cfg: &SimConfig,
    n_list: &[f64],
) -> Result<ConvergenceReport> {
    if n_list.len() < 2 {
        return Err(Error::Validation("need at least two values of n".into()));
    }
    let mut runs = Vec::with_capacity(n_list.len());
    for &n in n_list {
        let c = cfg.with_n(n);
        runs.push(Simulator::new(sys, &c)?.run(x0)?);
    }
    let distances: Vec<f64> = runs
        .windows(2)
        .map(|w| {
            let (coarse, fine) = if w[0].dt >= w[1].dt {
                (&w[0], &w[1])
            } else {
                (&w[1], &w[0])
            };
            sup_distance(coarse, fine, cfg.horizon)
        })
        .collect();
    let observed_rates = distances
        .windows(2)
        .map(|w| (w[0] / w[1]).log2())
        .collect();
    Ok(ConvergenceReport {
        n_values: n_list.to_vec(),
        dt_values: runs.iter().map(|r| r.dt).collect(),
        distances,
        observed_rates,
    })
}

/// `max_t |phi_t(x0 + e) - phi_t(x0)| / |e|` over the `2N` coordinate
/// directions scaled to length `perturbation`. `t = 0` is included, so the
/// estimate is at least 1 unless the perturbation is zero.
pub fn lipschitz_probe(
    sys: &OscillatorSystem,
    x0: &PhaseState,
    perturbation: f64,
    cfg: &SimConfig,
) -> Result<f64> {
    if perturbation == 0.0 {
        return Ok(0.0);
    }
    let sim = Simulator::new(sys, cfg)?;
    let base = sim.run(x0)?;
    let mut worst: f64 = 0.0;
    for j in 0..x0.as_slice().len() {
        let mut x = x0.as_slice().to_vec();
        x[j] += perturbation;
        let other = sim.run(&PhaseState::new(x)?)?;
        worst = worst.max(sup_distance(&base, &other, cfg.horizon) / perturbation.abs());
    }
    Ok(worst)
}

/// Smooth initial data `v0` for the transport check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TestFunction {
    Constant(f64),
    /// Phase coordinate with this index.
    Coordinate(usize),
    /// The gauge itself.
    Rho,
    Gaussian { center: Vec<f64>, width: f64 },
}

impl TestFunction {
    fn eval(&self, x: &[f64], rho: f64) -> f64 {
        match self {
            TestFunction::Constant(c) => *c,
            TestFunction::Coordinate(i) => x[*i],
            TestFunction::Rho => rho,
            TestFunction::Gaussian { center, width } => {
                let d = distance(x, center);
                (-0.5 * d * d / (width * width)).exp()
            }
        }
    }
}

/// Space-time sampling for [`transport_residual`]: a tensor grid of
/// `points^2N` states in the box `center +- half_width`, evaluated at
/// `times`, with spatial step `dx` and temporal step `dt_steps` simulation
/// steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransportGrid {
    pub center: Vec<f64>,
    pub half_width: f64,
    pub points: usize,
    pub times: Vec<f64>,
    pub dx: f64,
    pub dt_steps: usize,
    /// Stencils whose runs see `|h| <= margin` are excluded.
    pub margin: f64,
}

impl TransportGrid {
    /// Same grid with both finite-difference steps halved.
    pub fn refined(&self) -> Self {
        let mut g = self.clone();
        g.dx *= 0.5;
        g.dt_steps = (g.dt_steps / 2).max(1);
        g
    }

    fn states(&self) -> Vec<Vec<f64>> {
        let d = self.center.len();
        let m = self.points.max(1);
        let total = m.pow(d as u32);
        (0..total)
            .map(|mut idx| {
                (0..d)
                    .map(|a| {
                        let j = idx % m;
                        idx /= m;
                        let frac = if m == 1 {
                            0.0
                        } else {
                            2.0 * j as f64 / (m - 1) as f64 - 1.0
                        };
                        self.center[a] + self.half_width * frac
                    })
                    .collect()
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransportReport {
    /// Max of `|dv/dt - <F, dv/dx>|` over evaluated points.
    pub residual: f64,
    /// Same for the renormalized solution `beta(v) = v^2`.
    pub renormalized_residual: f64,
    pub evaluated: usize,
    pub excluded: usize,
}

/// Row index of time `t` in a run with step `dt`.
fn row(traj: &Trajectory, t: f64) -> Option<usize> {
    let k = (t / traj.dt).round() as usize;
    (k < traj.len()).then_some(k)
}

pub fn transport_residual(
    sys: &OscillatorSystem,
    v0: &TestFunction,
    grid: &TransportGrid,
    cfg: &SimConfig,
) -> Result<TransportReport> {
    sys.check_len(&grid.center, "grid center")?;
    if grid.dx <= 0.0 || grid.dt_steps == 0 || grid.times.is_empty() {
        return Err(Error::Validation(
            "transport grid needs dx > 0, dt_steps > 0 and at least one time".into(),
        ));
    }
    let dt = cfg.dt();
    let tau = grid.dt_steps as f64 * dt;
    for &t in &grid.times {
        if cfg.aligned_steps(t).is_none() || t < tau {
            return Err(Error::Validation(format!(
                "time {t} must be a multiple of dt = {dt} and at least {tau}"
            )));
        }
    }
    let t_max = grid.times.iter().cloned().fold(0.0, f64::max) + tau;
    let mut c = cfg.clone();
    c.horizon = t_max;
    let sim = Simulator::new(sys, &c)?;
    let d = grid.center.len();

    let usable = |traj: &Trajectory| {
        traj.frozen_from.is_none()
            && traj.len() == c.steps_for(t_max) + 1
            && traj.h_values.iter().all(|h| h.abs() > grid.margin)
    };
    let value = |traj: &Trajectory, t: f64, beta: bool| {
        let k = row(traj, t).expect("row within horizon");
        let v = v0.eval(&traj.states[k], traj.rho_values[k]);
        if beta {
            v * v
        } else {
            v
        }
    };

    let mut report = TransportReport {
        residual: 0.0,
        renormalized_residual: 0.0,
        evaluated: 0,
        excluded: 0,
    };
    for x in grid.states() {
        if norm(&x) == 0.0 {
            report.excluded += grid.times.len();
            continue;
        }
        let center = sim.run(&PhaseState::new(x.clone())?)?;
        let mut shifted = Vec::with_capacity(2 * d);
        for j in 0..d {
            for sgn in [1.0, -1.0] {
                let mut y = x.clone();
                y[j] += sgn * grid.dx;
                shifted.push(sim.run(&PhaseState::new(y)?)?);
            }
        }
        if !usable(&center) || !shifted.iter().all(usable) {
            report.excluded += grid.times.len();
            continue;
        }
        let field = sim.vector_field(&x)?;
        for &t in &grid.times {
            for (beta, slot) in [
                (false, &mut report.residual),
                (true, &mut report.renormalized_residual),
            ] {
                let dvdt = (value(&center, t + tau, beta) - value(&center, t - tau, beta))
                    / (2.0 * tau);
                let transport: f64 = (0..d)
                    .map(|j| {
                        let dv = (value(&shifted[2 * j], t, beta)
                            - value(&shifted[2 * j + 1], t, beta))
                            / (2.0 * grid.dx);
                        field[j] * dv
                    })
                    .sum();
                *slot = slot.max((dvdt - transport).abs());
            }
            report.evaluated += 1;
        }
    }
    Ok(report)
}
