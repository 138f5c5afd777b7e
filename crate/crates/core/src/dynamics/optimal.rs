//! Minimum-time damping of one oscillator `x'' = -w^2 x + u`, `|u| <= 1`,
//! and the dry-friction time `T_dry` measured against it.
//!
//! Optimal controls are bang-bang with `u = sign(eta(t))` and `eta`
//! harmonic, so interior arcs last exactly `pi / w`. The search enumerates
//! the first sign and the number of arcs `k` and solves for the first arc
//! length `tau_1` such that the state after the interior arcs lies on the
//! circle through the origin traced by the last control value. All arcs are
//! propagated by exact rotations.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use super::{SimConfig, Simulator};
use crate::error::{Error, Result};
use crate::system::{OscillatorSystem, PhaseState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchOptions {
    pub max_arcs: usize,
    /// Grid points for bracketing the first arc length.
    pub scan_points: usize,
    /// Required terminal distance from the origin.
    pub certificate_tol: f64,
}

impl Default for SearchOptions {
    fn default() -> Self {
        Self {
            max_arcs: 200,
            scan_points: 2000,
            certificate_tol: 1e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimalSchedule {
    pub omega: f64,
    pub x0: [f64; 2],
    pub time: f64,
    /// Control value on each arc.
    pub controls: Vec<f64>,
    /// Arc durations; they sum to `time`.
    pub durations: Vec<f64>,
    /// Distance from the origin after exact propagation.
    pub terminal_error: f64,
}

impl OptimalSchedule {
    /// Switching instants (cumulative arc ends, excluding the final time).
    pub fn switch_times(&self) -> Vec<f64> {
        let mut t = 0.0;
        let mut out = Vec::new();
        for d in &self.durations[..self.durations.len().saturating_sub(1)] {
            t += d;
            out.push(t);
        }
        out
    }
}

/// Exact state after holding `u` for `tau`: a clockwise rotation of
/// `(w (x - u/w^2), y)` by `w tau`.
pub fn propagate_arc(omega: f64, s: [f64; 2], u: f64, tau: f64) -> [f64; 2] {
    let c = u / (omega * omega);
    let (xr, yr) = (omega * (s[0] - c), s[1]);
    let (sn, cs) = (omega * tau).sin_cos();
    let xn = xr * cs + yr * sn;
    let yn = -xr * sn + yr * cs;
    [c + xn / omega, yn]
}

/// Half-period arc: rotation by exactly `pi`.
fn half_turn(omega: f64, s: [f64; 2], u: f64) -> [f64; 2] {
    let c = u / (omega * omega);
    [2.0 * c - s[0], -s[1]]
}

/// Signed distance of `s` from the circle through the origin for control `u`.
fn last_circle_gap(omega: f64, s: [f64; 2], u: f64) -> f64 {
    let c = u / (omega * omega);
    (omega * (s[0] - c)).hypot(s[1]) - 1.0 / omega
}

/// Clockwise time from `s` to the origin along the circle for `u`.
fn last_arc_time(omega: f64, s: [f64; 2], u: f64) -> f64 {
    let c = u / (omega * omega);
    let from = s[1].atan2(omega * (s[0] - c));
    let to = 0f64.atan2(-omega * c);
    (from - to).rem_euclid(TAU) / omega
}

struct Candidate {
    time: f64,
    controls: Vec<f64>,
    durations: Vec<f64>,
    error: f64,
}

impl Candidate {
    /// Shorter wins. Near-ties (a double root duplicates a shorter schedule
    /// to within `sqrt(eps)`) go to fewer arcs, then smaller terminal error.
    fn beats(&self, other: &Option<Candidate>) -> bool {
        match other {
            None => true,
            Some(b) => {
                let tie = 1e-7 * (1.0 + b.time);
                if (self.time - b.time).abs() > tie {
                    return self.time < b.time;
                }
                (self.controls.len(), self.error) < (b.controls.len(), b.error)
            }
        }
    }
}

fn state_after_prefix(omega: f64, x0: [f64; 2], sigma: f64, k: usize, tau1: f64) -> [f64; 2] {
    let mut s = propagate_arc(omega, x0, sigma, tau1);
    let mut u = sigma;
    for _ in 1..k - 1 {
        u = -u;
        s = half_turn(omega, s, u);
    }
    s
}

fn candidate(omega: f64, x0: [f64; 2], sigma: f64, k: usize, tau1: f64) -> Option<Candidate> {
    let half = PI / omega;
    let s = state_after_prefix(omega, x0, sigma, k, tau1);
    let u_last = if k % 2 == 1 { sigma } else { -sigma };
    let tl = last_arc_time(omega, s, u_last);
    if tl > half * (1.0 + 1e-9) {
        return None;
    }
    let mut controls = Vec::with_capacity(k);
    let mut durations = Vec::with_capacity(k);
    let mut u = sigma;
    controls.push(u);
    durations.push(tau1);
    for _ in 1..k - 1 {
        u = -u;
        controls.push(u);
        durations.push(half);
    }
    controls.push(u_last);
    durations.push(tl);
    let end = run_schedule(omega, x0, &controls, &durations);
    Some(Candidate {
        time: durations.iter().sum(),
        controls,
        durations,
        error: end[0].hypot(end[1]),
    })
}

/// Exact propagation of a schedule from `x0`.
fn run_schedule(omega: f64, x0: [f64; 2], controls: &[f64], durations: &[f64]) -> [f64; 2] {
    let half = PI / omega;
    controls
        .iter()
        .zip(durations)
        .fold(x0, |s, (&u, &d)| {
            if d == half {
                half_turn(omega, s, u)
            } else {
                propagate_arc(omega, s, u, d)
            }
        })
}

pub fn optimal_time_1osc(omega: f64, x0: [f64; 2], opts: &SearchOptions) -> Result<OptimalSchedule> {
    if !(omega > 0.0 && omega.is_finite()) || x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::Validation(
            "need a positive frequency and a finite initial state".into(),
        ));
    }
    if x0 == [0.0, 0.0] {
        return Ok(OptimalSchedule {
            omega,
            x0,
            time: 0.0,
            controls: vec![],
            durations: vec![],
            terminal_error: 0.0,
        });
    }
    let half = PI / omega;
    let mut best: Option<Candidate> = None;
    // Single arc: x0 already on a circle through the origin.
    for sigma in [1.0, -1.0] {
        if last_circle_gap(omega, x0, sigma).abs() <= 1e-12 * (1.0 + x0[0].hypot(x0[1])) {
            let t = last_arc_time(omega, x0, sigma);
            let end = propagate_arc(omega, x0, sigma, t);
            let c = Candidate {
                time: t,
                controls: vec![sigma],
                durations: vec![t],
                error: end[0].hypot(end[1]),
            };
            if t <= half * (1.0 + 1e-9) && c.beats(&best) {
                best = Some(c);
            }
        }
    }
    let m = opts.scan_points.max(8);
    for k in 2..=opts.max_arcs {
        if best
            .as_ref()
            .is_some_and(|b| (k as f64 - 2.0) * half > b.time)
        {
            break;
        }
        for sigma in [1.0, -1.0] {
            let u_last = if k % 2 == 1 { sigma } else { -sigma };
            let gap = |tau: f64| {
                last_circle_gap(omega, state_after_prefix(omega, x0, sigma, k, tau), u_last)
            };
            let mut a = half / m as f64 * 1e-6;
            let mut ga = gap(a);
            for j in 1..=m {
                let b = half * j as f64 / m as f64;
                let gb = gap(b);
                if ga == 0.0 || ga.signum() != gb.signum() {
                    let root = bisect(&gap, a, b, ga);
                    if let Some(c) = candidate(omega, x0, sigma, k, root) {
                        if c.beats(&best) {
                            best = Some(c);
                        }
                    }
                }
                a = b;
                ga = gb;
            }
        }
    }
    let best = best.ok_or_else(|| {
        Error::SearchExhausted(format!(
            "no admissible schedule with at most {} arcs",
            opts.max_arcs
        ))
    })?;
    let sol = OptimalSchedule {
        omega,
        x0,
        time: best.time,
        controls: best.controls,
        durations: best.durations,
        terminal_error: best.error,
    };
    if sol.terminal_error > opts.certificate_tol {
        return Err(Error::SearchExhausted(format!(
            "best schedule (T = {}) misses the origin by {:e}",
            sol.time, sol.terminal_error
        )));
    }
    Ok(sol)
}

fn bisect(f: &impl Fn(f64) -> f64, mut a: f64, mut b: f64, mut fa: f64) -> f64 {
    if fa == 0.0 {
        return a;
    }
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        let fm = f(m);
        if fm == 0.0 {
            return m;
        }
        if fm.signum() == fa.signum() {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

/// Open-loop RK4 replay of a schedule with steps of at most `dt` fitted to
/// each arc; returns the terminal state.
pub fn replay_schedule(schedule: &OptimalSchedule, dt: f64) -> [f64; 2] {
    let w2 = schedule.omega * schedule.omega;
    let f = |s: [f64; 2], u: f64| [s[1], -w2 * s[0] + u];
    let mut s = schedule.x0;
    for (&u, &d) in schedule.controls.iter().zip(&schedule.durations) {
        let m = (d / dt).ceil().max(1.0) as usize;
        let h = d / m as f64;
        for _ in 0..m {
            let k1 = f(s, u);
            let k2 = f([s[0] + 0.5 * h * k1[0], s[1] + 0.5 * h * k1[1]], u);
            let k3 = f([s[0] + 0.5 * h * k2[0], s[1] + 0.5 * h * k2[1]], u);
            let k4 = f([s[0] + h * k3[0], s[1] + h * k3[1]], u);
            for i in 0..2 {
                s[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
        }
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompareConfig {
    pub omega: f64,
    /// Smoothing scale for the dry-friction run. The creep through the
    /// standstill zone takes time proportional to `n`.
    pub n: f64,
    pub initial_states: Vec<[f64; 2]>,
    /// `T_dry` is the first time with `rho <= stop_rho`.
    pub stop_rho: f64,
    pub max_time: f64,
    /// Step for the open-loop replay check.
    pub replay_dt: f64,
    pub search: SearchOptions,
}

impl Default for CompareConfig {
    fn default() -> Self {
        Self {
            omega: 1.0,
            n: 100.0,
            initial_states: vec![[0.0, 10.0], [0.0, 100.0]],
            stop_rho: 0.5,
            max_time: 5000.0,
            replay_dt: 1e-3,
            search: SearchOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareCase {
    pub x0: [f64; 2],
    pub t_star: f64,
    pub arcs: usize,
    pub terminal_error: f64,
    pub replay_error: f64,
    pub t_dry: Option<f64>,
    pub ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub cases: Vec<CompareCase>,
}

/// Time-optimal time against the regularized dry-friction time for each
/// initial state. `sim` supplies quadrature, solver and step settings; the
/// smoothing scale is `cfg.n`.
pub fn compare_optimal(cfg: &CompareConfig, sim: &SimConfig) -> Result<CompareReport> {
    if !(cfg.stop_rho > 0.0) || !(cfg.max_time > 0.0) || !(cfg.replay_dt > 0.0) || !(cfg.n > 0.0)
    {
        return Err(Error::Validation(
            "compare-optimal needs n, stop_rho, max_time and replay_dt positive".into(),
        ));
    }
    let sys = OscillatorSystem::new(vec![cfg.omega])?;
    let simulator = Simulator::new(&sys, &sim.with_n(cfg.n))?;
    let mut cases = Vec::with_capacity(cfg.initial_states.len());
    for &x0 in &cfg.initial_states {
        let opt = optimal_time_1osc(cfg.omega, x0, &cfg.search)?;
        let end = replay_schedule(&opt, cfg.replay_dt);
        let t_dry =
            simulator.first_passage(&PhaseState::new(x0.to_vec())?, cfg.stop_rho, cfg.max_time)?;
        cases.push(CompareCase {
            x0,
            t_star: opt.time,
            arcs: opt.controls.len(),
            terminal_error: opt.terminal_error,
            replay_error: end[0].hypot(end[1]),
            t_dry,
            ratio: t_dry.map(|t| if opt.time > 0.0 { t / opt.time } else { f64::INFINITY }),
        });
    }
    Ok(CompareReport { cases })
}
