//! Gauge `rho(x) = inf { t > 0 : x in t Omega }` and normal `p(x) = d rho/dx`.
//!
//! `rho` is the support function of the polar body `{H <= 1}`, so
//! `rho(x) = max { <x, p> : H(p) = 1 }` and the maximizer satisfies
//! `x / rho = dH/dp`. We solve it as the unconstrained convex problem
//!
//! ```text
//! minimize  Psi(q) = H(q)^2 / 2 - <x, q>
//! ```
//!
//! whose minimizer is `q = rho p` with `H(q) = rho`. Its gradient is
//! `H(q) dH(q) - x` and its Hessian `dH dH^T + H d^2H` is invariant under
//! scaling of `q`, which makes a Hessian from a nearby solve a good Newton
//! model for the next one.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::support::{
    chain_rule_guard, omega_support, omega_support_grad, omega_support_hess_fd, Quadrature,
};
use crate::system::{dot, norm, DualVector, OscillatorSystem, PhaseState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOptions {
    /// Stop when `|x - rho dH/dp| <= tol |x|`.
    pub tol: f64,
    pub max_iter: usize,
    /// Random restarts tried when the default start fails.
    pub multistart: usize,
    pub seed: u64,
    /// Relative step of the finite-difference Hessian of `H`.
    pub hess_step: f64,
    /// Extra Newton steps taken after the tolerance is met.
    pub polish_steps: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 500,
            multistart: 8,
            seed: 0x9a_u64,
            hess_step: 1e-4,
            polish_steps: 2,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) || self.max_iter == 0 || !(self.hess_step > 0.0) {
            return Err(Error::Validation(
                "solver options need tol > 0, max_iter > 0 and hess_step > 0".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GaugeStatus {
    Converged,
    /// `x = 0`: `rho = 0` and the normal is undefined.
    Zero,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaugeSolution {
    pub rho: f64,
    /// Normal with `H(p) = 1`; all zeros when `status` is `Zero`.
    pub p: DualVector,
    /// `|x - rho dH/dp| / |x|` at the returned point.
    pub residual: f64,
    pub iterations: usize,
    pub status: GaugeStatus,
}

impl GaugeSolution {
    pub fn is_zero(&self) -> bool {
        self.status == GaugeStatus::Zero
    }
}

/// Previous solution carried between nearby solves.
#[derive(Debug, Clone, Default)]
pub struct WarmStart {
    p: Option<Vec<f64>>,
    model: Option<DMatrix<f64>>,
}

impl WarmStart {
    pub fn from_normal(p: &[f64]) -> Self {
        Self {
            p: Some(p.to_vec()),
            model: None,
        }
    }

    pub fn clear(&mut self) {
        self.p = None;
        self.model = None;
    }

    pub fn normal(&self) -> Option<&[f64]> {
        self.p.as_deref()
    }
}

pub struct GaugeSolver<'a> {
    sys: &'a OscillatorSystem,
    quad: &'a Quadrature,
    opts: SolverOptions,
}

struct Iterate {
    q: Vec<f64>,
    h: f64,
    grad_h: Vec<f64>,
    /// Gradient of `Psi`.
    g: Vec<f64>,
    psi: f64,
}

impl<'a> GaugeSolver<'a> {
    pub fn new(sys: &'a OscillatorSystem, quad: &'a Quadrature, opts: SolverOptions) -> Self {
        assert_eq!(sys.len(), quad.dim(), "quadrature prepared for another N");
        Self { sys, quad, opts }
    }

    pub fn system(&self) -> &OscillatorSystem {
        self.sys
    }

    pub fn quadrature(&self) -> &Quadrature {
        self.quad
    }

    pub fn options(&self) -> &SolverOptions {
        &self.opts
    }

    /// Solve from the ellipsoidal start `xi_i = w_i^2 x_i`, `eta_i = y_i`,
    /// falling back to random restarts.
    pub fn solve(&self, x: &PhaseState) -> Result<GaugeSolution> {
        self.sys.check_len(x.as_slice(), "phase state")?;
        self.solve_slice(x.as_slice(), None)
    }

    /// Solve starting from `warm` if it holds a usable normal; updates it
    /// with the new solution.
    pub fn solve_warm(&self, x: &[f64], warm: &mut WarmStart) -> Result<GaugeSolution> {
        self.solve_slice(x, Some(warm))
    }

    /// Solve from an explicit starting normal (no restarts).
    pub fn solve_from(&self, x: &[f64], p0: &[f64]) -> Result<GaugeSolution> {
        let mut warm = WarmStart::from_normal(p0);
        match self.newton(x, p0, &mut warm)? {
            Ok(sol) => Ok(sol),
            Err(best) => Err(self.non_convergence(best)),
        }
    }

    fn non_convergence(&self, best: GaugeSolution) -> Error {
        Error::NonConvergence {
            iterations: best.iterations,
            residual: best.residual,
            best: Box::new(best),
        }
    }

    fn solve_slice(&self, x: &[f64], warm: Option<&mut WarmStart>) -> Result<GaugeSolution> {
        if x.iter().all(|&c| c == 0.0) {
            if let Some(w) = warm {
                w.clear();
            }
            return Ok(GaugeSolution {
                rho: 0.0,
                p: DualVector::from_vec_unchecked(vec![0.0; x.len()]),
                residual: 0.0,
                iterations: 0,
                status: GaugeStatus::Zero,
            });
        }
        let mut local = WarmStart::default();
        let warm = warm.unwrap_or(&mut local);

        if let Some(p) = warm.p.clone() {
            if dot(x, &p) > 0.0 {
                if let Ok(sol) = self.newton(x, &p, warm)? {
                    return Ok(sol);
                }
            }
        }
        warm.model = None;
        let p0 = self.default_start(x);
        let mut best = match self.newton(x, &p0, warm)? {
            Ok(sol) => return Ok(sol),
            Err(best) => best,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(self.opts.seed);
        for _ in 0..self.opts.multistart {
            let p0 = self.random_start(x, &mut rng);
            warm.model = None;
            match self.newton(x, &p0, warm)? {
                Ok(sol) => return Ok(sol),
                Err(b) if b.residual < best.residual => best = b,
                Err(_) => {}
            }
        }
        Err(self.non_convergence(best))
    }

    fn default_start(&self, x: &[f64]) -> Vec<f64> {
        let mut p = x.to_vec();
        for (i, &w) in self.sys.frequencies().iter().enumerate() {
            p[2 * i] *= w * w;
        }
        p
    }

    /// Random normal with `<x, p> > 0`.
    pub fn random_start(&self, x: &[f64], rng: &mut ChaCha8Rng) -> Vec<f64> {
        loop {
            let mut p: Vec<f64> = (0..x.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let s = dot(x, &p);
            if s.abs() > 1e-3 * norm(x) * norm(&p) {
                if s < 0.0 {
                    p.iter_mut().for_each(|v| *v = -*v);
                }
                return p;
            }
        }
    }

    /// Moves blocks with vanishing amplitude off the chain-rule singularity.
    fn regularize(&self, q: &mut [f64]) {
        let guard = chain_rule_guard(q);
        let bump = 1e-10 * norm(q).max(f64::MIN_POSITIVE);
        for (i, z) in self.sys.amplitudes(q).iter().enumerate() {
            if *z <= guard {
                let w = self.sys.frequencies()[i];
                let s = std::f64::consts::FRAC_1_SQRT_2;
                q[2 * i] += bump * s * w;
                q[2 * i + 1] += bump * s;
            }
        }
    }

    fn evaluate(&self, x: &[f64], mut q: Vec<f64>) -> Result<Iterate> {
        let mut grad_h = vec![0.0; q.len()];
        let h = match omega_support_grad(self.sys, &q, self.quad, &mut grad_h) {
            Ok(h) => h,
            Err(Error::NearSingular { .. }) => {
                self.regularize(&mut q);
                omega_support_grad(self.sys, &q, self.quad, &mut grad_h)?
            }
            Err(e) => return Err(e),
        };
        let g: Vec<f64> = grad_h.iter().zip(x).map(|(d, xi)| h * d - xi).collect();
        let psi = 0.5 * h * h - dot(x, &q);
        Ok(Iterate {
            q,
            h,
            grad_h,
            g,
            psi,
        })
    }

    /// Scale-free Newton model `dH dH^T + H d^2H` at `q`.
    fn model(&self, it: &Iterate) -> Result<DMatrix<f64>> {
        let p: Vec<f64> = it.q.iter().map(|v| v / it.h).collect();
        let hess = omega_support_hess_fd(self.sys, &p, self.quad, self.opts.hess_step * norm(&p))?;
        let gh = DVector::from_column_slice(&it.grad_h);
        Ok(&gh * gh.transpose() + hess)
    }

    fn finish(&self, x: &[f64], it: &Iterate, iterations: usize) -> GaugeSolution {
        let p: Vec<f64> = it.q.iter().map(|v| v / it.h).collect();
        GaugeSolution {
            rho: dot(x, &p),
            p: DualVector::from_vec_unchecked(p),
            residual: norm(&it.g) / norm(x),
            iterations,
            status: GaugeStatus::Converged,
        }
    }

    /// Damped Newton on `Psi` from `p0`. The inner `Err` carries the best
    /// iterate when the iteration budget runs out.
    fn newton(
        &self,
        x: &[f64],
        p0: &[f64],
        warm: &mut WarmStart,
    ) -> Result<std::result::Result<GaugeSolution, GaugeSolution>> {
        let xn = norm(x);
        let target = self.opts.tol * xn;
        // Optimal scaling along the ray of p0: q = (<x,p0> / H(p0)^2) p0.
        let h0 = omega_support(self.sys, p0, self.quad);
        if !(h0 > 0.0) {
            return Ok(Err(self.finish_failed(x, p0, 0)));
        }
        let t = (dot(x, p0) / (h0 * h0)).max(f64::MIN_POSITIVE);
        let mut it = self.evaluate(x, p0.iter().map(|v| v * t).collect())?;
        let mut model = warm.model.take();
        let mut fresh = false;
        let mut polished = 0;

        for iter in 0..self.opts.max_iter {
            let gnorm = norm(&it.g);
            if gnorm <= target {
                if polished >= self.opts.polish_steps {
                    return Ok(Ok(self.store(x, &it, model, warm, iter)));
                }
                polished += 1;
            }
            if model.is_none() {
                model = Some(self.model(&it)?);
                fresh = true;
            }
            let step = model
                .as_ref()
                .and_then(|m| m.clone().cholesky())
                .map(|c| c.solve(&-DVector::from_column_slice(&it.g)));
            let dir = match step {
                Some(d) => d.as_slice().to_vec(),
                None if !fresh => {
                    model = None;
                    continue;
                }
                None => self.ascent_direction(x, &it),
            };
            let slope = dot(&it.g, &dir);
            let mut alpha = 1.0;
            let mut accepted = None;
            for _ in 0..40 {
                let q: Vec<f64> = it.q.iter().zip(&dir).map(|(a, d)| a + alpha * d).collect();
                let trial = self.evaluate(x, q)?;
                // Once the predicted decrease of Psi drops below its rounding
                // noise, only the gradient norm is a reliable merit.
                let resolved = -alpha * slope > 64.0 * f64::EPSILON * (1.0 + it.psi.abs());
                let armijo = resolved && trial.psi <= it.psi + 1e-4 * alpha * slope;
                let tg = norm(&trial.g);
                if armijo || tg <= 0.5 * gnorm || (!resolved && tg <= (1.0 - 1e-4) * gnorm) {
                    accepted = Some(trial);
                    break;
                }
                alpha *= 0.5;
            }
            match accepted {
                Some(trial) => {
                    let ratio = norm(&trial.g) / gnorm.max(f64::MIN_POSITIVE);
                    if gnorm <= target && ratio >= 1.0 {
                        // Polishing no longer helps.
                        return Ok(Ok(self.store(x, &it, model, warm, iter + 1)));
                    }
                    it = trial;
                    // Refresh the model once the chord contraction degrades.
                    if alpha < 1.0 || (ratio > 0.1 && norm(&it.g) > target) {
                        model = None;
                    }
                    fresh = false;
                }
                None if gnorm <= target => {
                    return Ok(Ok(self.store(x, &it, model, warm, iter + 1)));
                }
                None if !fresh => model = None,
                None => break,
            }
        }
        let best = self.finish(x, &it, self.opts.max_iter);
        Ok(Err(best))
    }

    fn finish_failed(&self, x: &[f64], p: &[f64], iterations: usize) -> GaugeSolution {
        GaugeSolution {
            rho: dot(x, p),
            p: DualVector::from_vec_unchecked(p.to_vec()),
            residual: f64::INFINITY,
            iterations,
            status: GaugeStatus::Converged,
        }
    }

    fn store(
        &self,
        x: &[f64],
        it: &Iterate,
        model: Option<DMatrix<f64>>,
        warm: &mut WarmStart,
        iterations: usize,
    ) -> GaugeSolution {
        let sol = self.finish(x, it, iterations);
        warm.p = Some(sol.p.as_slice().to_vec());
        warm.model = model;
        sol
    }

    /// Riemannian ascent direction for `<x, p>` on `{H = 1}`, expressed in
    /// `q` coordinates: the tangential part of `x`.
    fn ascent_direction(&self, x: &[f64], it: &Iterate) -> Vec<f64> {
        let gh = &it.grad_h;
        let k = dot(x, gh) / dot(gh, gh);
        let tangent: Vec<f64> = x.iter().zip(gh).map(|(a, b)| a - k * b).collect();
        // Radial component from the ray-optimal scaling.
        let radial = -dot(&it.g, &it.q) / dot(&it.q, &it.q).max(f64::MIN_POSITIVE);
        let tn = norm(&tangent).max(f64::MIN_POSITIVE);
        let scale = 0.1 * norm(&it.q) / tn;
        tangent
            .iter()
            .zip(&it.q)
            .map(|(t, q)| scale * t + radial * q)
            .collect()
    }
}

/// `p(x) = d rho / dx`.
pub fn rho_grad(solver: &GaugeSolver, x: &PhaseState) -> Result<DualVector> {
    let sol = solver.solve(x)?;
    if sol.is_zero() {
        return Err(Error::Validation(
            "the gauge normal is undefined at x = 0".into(),
        ));
    }
    Ok(sol.p)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DualityOptions {
    /// Relative step for the finite-difference Hessian of `H`.
    pub h_step: f64,
    /// Relative step for the finite-difference Hessian of `rho`.
    pub rho_step: f64,
}

impl Default for DualityOptions {
    fn default() -> Self {
        Self {
            h_step: 1e-4,
            rho_step: 1e-4,
        }
    }
}

/// Max-norm deviation of `rho d^2H d^2rho + dH p^T` from the identity,
/// both Hessians by central differences.
pub fn duality_residual(
    solver: &GaugeSolver,
    x: &PhaseState,
    opts: &DualityOptions,
) -> Result<f64> {
    let xs = x.as_slice();
    let d = xs.len();
    let sol = solver.solve(x)?;
    if sol.is_zero() {
        return Err(Error::Validation("duality identity needs x != 0".into()));
    }
    let p = sol.p.as_slice();
    let sys = solver.system();
    let quad = solver.quadrature();
    let guard = chain_rule_guard(p);
    if let Some((index, &value)) = sys
        .amplitudes(p)
        .iter()
        .enumerate()
        .find(|(_, &z)| z <= guard)
    {
        return Err(Error::NearSingular {
            index,
            value,
            guard,
        });
    }
    let hess_h = omega_support_hess_fd(sys, p, quad, opts.h_step * norm(p))?;
    let mut grad_h = vec![0.0; d];
    omega_support_grad(sys, p, quad, &mut grad_h)?;

    let step = opts.rho_step * norm(xs);
    let mut hess_rho = DMatrix::zeros(d, d);
    let mut xp = xs.to_vec();
    for j in 0..d {
        xp[j] = xs[j] + step;
        let plus = solver.solve_from(&xp, p)?;
        xp[j] = xs[j] - step;
        let minus = solver.solve_from(&xp, p)?;
        xp[j] = xs[j];
        for i in 0..d {
            hess_rho[(i, j)] = (plus.p.as_slice()[i] - minus.p.as_slice()[i]) / (2.0 * step);
        }
    }
    let hess_rho = (&hess_rho + hess_rho.transpose()) * 0.5;
    let outer = DVector::from_column_slice(&grad_h) * DVector::from_column_slice(p).transpose();
    let m = hess_h * hess_rho * sol.rho + outer - DMatrix::<f64>::identity(d, d);
    Ok(m.amax())
}
