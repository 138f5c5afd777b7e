//! Support function of the limit body `Omega`:
//!
//! ```text
//! S(z) = E | sum_i z_i cos phi_i |,    H(p) = S(z(p)),
//! z_i(p) = (eta_i^2 + xi_i^2 / w_i^2)^(1/2),
//! ```
//!
//! with the expectation taken over independent uniform phases, i.e. the
//! torus integral against the normalized Haar measure `dphi / (2pi)^N`.
//! [`Measure::Lebesgue`] drops the normalization; it rescales `Omega` and the
//! gauge but not the direction of the control.

mod bessel;
mod nodes;

use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::system::{norm, DualVector, OscillatorSystem};

pub use bessel::{bessel_j0, bessel_j1, BesselRule};
use nodes::NodeSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Backend {
    /// Tensor-product midpoint rule on the torus. Authoritative.
    TorusGrid,
    /// Randomly shifted rank-1 lattice, with a standard error.
    Qmc,
    /// One-dimensional Bessel-transform integral. Cross-check only.
    Bessel,
}

impl Backend {
    pub fn name(self) -> &'static str {
        match self {
            Backend::TorusGrid => "torus-grid",
            Backend::Qmc => "qmc",
            Backend::Bessel => "bessel",
        }
    }
}

impl std::str::FromStr for Backend {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "torus-grid" => Ok(Backend::TorusGrid),
            "qmc" => Ok(Backend::Qmc),
            "bessel" => Ok(Backend::Bessel),
            other => Err(Error::Validation(format!(
                "unknown backend {other:?} (expected torus-grid, qmc or bessel)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Measure {
    /// `dphi / (2pi)^N`, the space average of the ergodic winding.
    Normalized,
    /// `dphi`, i.e. the normalized value times `(2pi)^N`.
    Lebesgue,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuadratureConfig {
    /// `None` picks torus-grid for `N <= 3` and qmc above.
    pub backend: Option<Backend>,
    /// Torus-grid points per sampled axis; `None` picks 4096/512/128 for
    /// `N = 1/2/3` and 32 above.
    pub points_per_dim: Option<usize>,
    /// Integrate the last amplitude's angle in closed form (grid and qmc).
    pub analytic_last_axis: bool,
    pub samples: usize,
    pub shifts: usize,
    pub seed: u64,
    pub upper_cutoff: f64,
    pub nodes: usize,
    /// Hard cap on the number of quadrature nodes.
    pub max_nodes: usize,
    pub measure: Measure,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self {
            backend: None,
            points_per_dim: None,
            analytic_last_axis: true,
            samples: 8191,
            shifts: 8,
            seed: 0x5eed,
            upper_cutoff: 5000.0,
            nodes: 200_000,
            max_nodes: 50_000_000,
            measure: Measure::Normalized,
        }
    }
}

impl QuadratureConfig {
    pub fn default_points(n: usize) -> usize {
        match n {
            1 => 4096,
            2 => 512,
            3 => 128,
            _ => 32,
        }
    }

    pub fn with_backend(mut self, backend: Backend) -> Self {
        self.backend = Some(backend);
        self
    }

    pub fn with_points(mut self, points: usize) -> Self {
        self.points_per_dim = Some(points);
        self
    }

    /// Copy with every `None` replaced by the default for `n` oscillators.
    pub fn resolved(&self, n: usize) -> Self {
        let mut out = self.clone();
        out.backend = Some(
            self.backend
                .unwrap_or(if n <= 3 { Backend::TorusGrid } else { Backend::Qmc }),
        );
        out.points_per_dim = Some(self.points_per_dim.unwrap_or(Self::default_points(n)));
        out
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(m) = self.points_per_dim {
            if m < 8 {
                return Err(Error::Validation(format!(
                    "points_per_dim must be at least 8, got {m}"
                )));
            }
        }
        if self.samples < 1000 {
            return Err(Error::Validation(format!(
                "samples must be at least 1000, got {}",
                self.samples
            )));
        }
        if self.shifts < 2 {
            return Err(Error::Validation("shifts must be at least 2".into()));
        }
        if !(self.upper_cutoff > 0.0) || !self.upper_cutoff.is_finite() {
            return Err(Error::Validation("upper_cutoff must be positive".into()));
        }
        if self.nodes < 8 {
            return Err(Error::Validation("nodes must be at least 8".into()));
        }
        Ok(())
    }
}

/// Nonnegative amplitudes `z`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct AmplitudeVector(Vec<f64>);

impl AmplitudeVector {
    pub fn new(z: Vec<f64>) -> Result<Self> {
        if z.is_empty() {
            return Err(Error::Validation("amplitude vector is empty".into()));
        }
        if let Some(i) = z.iter().position(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Validation(format!(
                "amplitude {i} must be finite and nonnegative, got {}",
                z[i]
            )));
        }
        Ok(Self(z))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&v| v == 0.0)
    }
}

impl TryFrom<Vec<f64>> for AmplitudeVector {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<AmplitudeVector> for Vec<f64> {
    fn from(v: AmplitudeVector) -> Self {
        v.0
    }
}

/// A support-function evaluation together with how it was obtained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportEstimate {
    pub value: f64,
    pub gradient: Option<Vec<f64>>,
    pub backend: Backend,
    pub measure: Measure,
    pub nodes: usize,
    pub error_estimate: f64,
}

#[derive(Debug, Clone)]
enum Rule {
    Nodes(NodeSet),
    Bessel(BesselRule),
}

/// Quadrature prepared for a fixed number of oscillators.
///
/// Evaluation is sequential in a fixed order, so results are bit-for-bit
/// reproducible for a given config.
#[derive(Debug, Clone)]
pub struct Quadrature {
    dim: usize,
    config: QuadratureConfig,
    rule: Rule,
    scale: f64,
}

impl Quadrature {
    pub fn new(config: &QuadratureConfig, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Validation("need at least one amplitude".into()));
        }
        config.validate()?;
        let config = config.resolved(n);
        let rule = Self::build_rule(&config, n, config.points_per_dim.unwrap())?;
        let scale = match config.measure {
            Measure::Normalized => 1.0,
            Measure::Lebesgue => (2.0 * PI).powi(n as i32),
        };
        Ok(Self {
            dim: n,
            config,
            rule,
            scale,
        })
    }

    fn build_rule(config: &QuadratureConfig, n: usize, points: usize) -> Result<Rule> {
        Ok(match config.backend.unwrap() {
            Backend::TorusGrid => Rule::Nodes(NodeSet::torus_grid(
                n,
                points,
                config.analytic_last_axis,
                config.max_nodes,
            )?),
            Backend::Qmc => Rule::Nodes(NodeSet::shifted_lattice(
                n,
                config.samples,
                config.shifts,
                config.seed,
                config.analytic_last_axis,
                config.max_nodes,
            )?),
            Backend::Bessel => {
                if config.nodes > config.max_nodes {
                    return Err(Error::Budget(format!(
                        "bessel rule with {} nodes exceeds {}",
                        config.nodes, config.max_nodes
                    )));
                }
                Rule::Bessel(BesselRule::new(config.upper_cutoff, config.nodes))
            }
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// The resolved configuration (no `None` fields).
    pub fn config(&self) -> &QuadratureConfig {
        &self.config
    }

    pub fn backend(&self) -> Backend {
        self.config.backend.unwrap()
    }

    pub fn node_count(&self) -> usize {
        match &self.rule {
            Rule::Nodes(s) => s.node_count(),
            Rule::Bessel(b) => b.node_count(),
        }
    }

    fn check_dim(&self, z: &[f64]) {
        assert_eq!(z.len(), self.dim, "amplitude vector has the wrong length");
    }

    /// `S(z)`. Even in every component and symmetric under relabeling.
    pub fn eval(&self, z: &[f64]) -> f64 {
        self.check_dim(z);
        self.eval_with(z, None, &mut Vec::new())
    }

    /// `S(z)` and its gradient. The gradient of the discrete rule is the
    /// exact derivative of the discrete value away from its kinks.
    pub fn eval_grad(&self, z: &[f64], grad: &mut [f64]) -> f64 {
        self.check_dim(z);
        assert_eq!(grad.len(), self.dim);
        self.eval_with(z, Some(grad), &mut Vec::new())
    }

    /// Scaled value and gradient; `blocks` receives the unscaled per-block
    /// values (one entry unless the rule has random shifts).
    fn eval_with(&self, z: &[f64], mut grad: Option<&mut [f64]>, blocks: &mut Vec<f64>) -> f64 {
        if z.iter().any(|v| v.is_sign_negative()) {
            let abs: Vec<f64> = z.iter().map(|v| v.abs()).collect();
            let value = self.eval_with(&abs, grad.as_deref_mut(), blocks);
            if let Some(g) = grad {
                for (g, v) in g.iter_mut().zip(z) {
                    if v.is_sign_negative() {
                        *g = -*g;
                    }
                }
            }
            return value;
        }
        let value = match &self.rule {
            Rule::Bessel(b) => {
                if let Some(g) = grad.as_deref_mut() {
                    b.grad(z, g);
                }
                blocks.clear();
                blocks.push(b.eval(z));
                blocks[0]
            }
            Rule::Nodes(s) if s.is_analytic() && self.dim > 1 => {
                blended(s, z, grad.as_deref_mut(), blocks)
            }
            Rule::Nodes(s) => plain(s, z, grad.as_deref_mut(), blocks),
        };
        if let Some(g) = grad {
            g.iter_mut().for_each(|g| *g *= self.scale);
        }
        value * self.scale
    }

    /// Value with an error estimate: the coarse/fine difference for the
    /// grid, the standard error over shifts for qmc, and the neglected tail
    /// bound for the Bessel rule.
    pub fn estimate(&self, z: &AmplitudeVector, with_gradient: bool) -> Result<SupportEstimate> {
        let z = z.as_slice();
        if z.len() != self.dim {
            return Err(Error::Validation(format!(
                "amplitude vector has length {}, quadrature prepared for {}",
                z.len(),
                self.dim
            )));
        }
        let gradient = if with_gradient {
            if z.iter().all(|&v| v == 0.0) {
                return Err(Error::GradientUndefined);
            }
            let mut g = vec![0.0; self.dim];
            self.eval_grad(z, &mut g);
            Some(g)
        } else {
            None
        };
        let mut blocks = Vec::new();
        let value = self.eval_with(z, None, &mut blocks);
        let error_estimate = match &self.rule {
            Rule::Nodes(s) if s.blocks() > 1 => {
                let nb = blocks.len() as f64;
                let mean = blocks.iter().sum::<f64>() / nb;
                let var = blocks.iter().map(|b| (b - mean).powi(2)).sum::<f64>() / (nb - 1.0);
                (var / nb).sqrt() * self.scale
            }
            Rule::Nodes(_) => {
                let m = self.config.points_per_dim.unwrap();
                if m / 2 >= 8 {
                    let coarse = Quadrature {
                        dim: self.dim,
                        config: self.config.clone(),
                        rule: Self::build_rule(&self.config, self.dim, m / 2)?,
                        scale: self.scale,
                    };
                    (value - coarse.eval(z)).abs()
                } else {
                    0.0
                }
            }
            Rule::Bessel(b) => b.tail_bound(z) * self.scale,
        };
        Ok(SupportEstimate {
            value,
            gradient,
            backend: self.backend(),
            measure: self.config.measure,
            nodes: self.node_count(),
            error_estimate,
        })
    }
}

/// Mean over blocks of a node rule, unscaled.
fn plain(s: &NodeSet, z: &[f64], grad: Option<&mut [f64]>, blocks: &mut Vec<f64>) -> f64 {
    let has_grad = grad.is_some();
    let mut grad = grad;
    s.eval_blocks(z, grad.as_deref_mut(), blocks);
    let nb = blocks.len() as f64;
    if has_grad {
        grad.unwrap().iter_mut().for_each(|g| *g /= nb);
    }
    blocks.iter().sum::<f64>() / nb
}

/// Half-width, in `ln(z_k / z_j)`, of the band where two orderings mix.
const BLEND_WIDTH: f64 = 0.05;

/// `C^2` step from 0 at `t <= -1` to 1 at `t >= 1`, and its derivative.
fn smooth_step(t: f64) -> (f64, f64) {
    if t <= -1.0 {
        return (0.0, 0.0);
    }
    if t >= 1.0 {
        return (1.0, 0.0);
    }
    let u = 0.5 * (t + 1.0);
    let v = u * u * u * (10.0 + u * (6.0 * u - 15.0));
    let dv = 30.0 * u * u * (1.0 - u) * (1.0 - u);
    (v, 0.5 * dv)
}

/// Pairwise factor `sigma(ln(z_k / z_j) / width)` and its partials in
/// `z_k` and `z_j`.
fn pair_factor(zk: f64, zj: f64) -> (f64, f64, f64) {
    if zk == zj {
        let (_, d) = smooth_step(0.0);
        return if zk == 0.0 {
            (0.5, 0.0, 0.0)
        } else {
            (0.5, d / (BLEND_WIDTH * zk), -d / (BLEND_WIDTH * zj))
        };
    }
    if zj == 0.0 {
        return (1.0, 0.0, 0.0);
    }
    if zk == 0.0 {
        return (0.0, 0.0, 0.0);
    }
    let (f, d) = smooth_step((zk / zj).ln() / BLEND_WIDTH);
    (f, d / (BLEND_WIDTH * zk), -d / (BLEND_WIDTH * zj))
}

/// Weighted mean of the rules that integrate axis `k` in closed form.
///
/// The closed-form axis must carry the largest amplitude: otherwise the
/// inner integrand has arcsin kinks at sampled nodes, which costs ~1e-5
/// relative in the value and ruins second derivatives. Hard-selecting the
/// largest axis would make the value nonsmooth wherever two amplitudes
/// cross, so rule `k` gets the weight `prod_j sigma(ln(z_k / z_j) / width)`,
/// which vanishes unless `z_k` is within the band of the maximum. The
/// weights are 0-homogeneous and symmetric, so 1-homogeneity, the Euler
/// identity and permutation symmetry are kept.
fn blended(s: &NodeSet, z: &[f64], mut grad: Option<&mut [f64]>, blocks: &mut Vec<f64>) -> f64 {
    let n = z.len();
    // raw[k] and d raw[k] / d z[m] in draw[k * n + m].
    let mut raw = vec![1.0; n];
    let mut draw = vec![0.0; n * n];
    for k in 0..n {
        let mut fs = Vec::with_capacity(n);
        for j in (0..n).filter(|&j| j != k) {
            let (f, dk, dj) = pair_factor(z[k], z[j]);
            raw[k] *= f;
            fs.push((j, f, dk, dj));
        }
        if raw[k] == 0.0 || grad.is_none() {
            continue;
        }
        for (i, &(j, _, dk, dj)) in fs.iter().enumerate() {
            let others: f64 = fs
                .iter()
                .enumerate()
                .filter(|&(l, _)| l != i)
                .map(|(_, e)| e.1)
                .product();
            draw[k * n + k] += dk * others;
            draw[k * n + j] += dj * others;
        }
    }
    let total: f64 = raw.iter().sum();
    if total == 0.0 || !total.is_finite() {
        return plain(s, z, grad, blocks);
    }
    if let Some(g) = grad.as_deref_mut() {
        g.iter_mut().for_each(|v| *v = 0.0);
    }
    let mut perm = z.to_vec();
    let mut gk = grad.as_ref().map(|_| vec![0.0; n]);
    let mut rules = vec![None; n];
    let mut part = Vec::new();
    let mut value = 0.0;
    blocks.clear();
    for k in 0..n {
        if raw[k] == 0.0 {
            continue;
        }
        let w = raw[k] / total;
        perm.swap(k, n - 1);
        let v = plain(s, &perm, gk.as_deref_mut(), &mut part);
        perm.swap(k, n - 1);
        if let (Some(g), Some(gk)) = (grad.as_deref_mut(), gk.as_mut()) {
            gk.swap(k, n - 1);
            for (a, b) in g.iter_mut().zip(gk.iter()) {
                *a += w * b;
            }
        }
        if blocks.is_empty() {
            blocks.resize(part.len(), 0.0);
        }
        for (a, b) in blocks.iter_mut().zip(&part) {
            *a += w * b;
        }
        rules[k] = Some(v);
        value += w * v;
    }
    if let Some(g) = grad {
        // Weight derivatives against the rules: sum_k (S_k - S) d raw_k / total.
        for k in 0..n {
            if let Some(r) = rules[k] {
                for m in 0..n {
                    g[m] += draw[k * n + m] / total * (r - value);
                }
            }
        }
    }
    value
}

/// One-shot `S(z)` with error estimate.
pub fn support_eval(z: &AmplitudeVector, cfg: &QuadratureConfig) -> Result<SupportEstimate> {
    Quadrature::new(cfg, z.len())?.estimate(z, false)
}

/// One-shot `dS/dz`; undefined at `z = 0`.
pub fn support_grad(z: &AmplitudeVector, cfg: &QuadratureConfig) -> Result<Vec<f64>> {
    if z.is_zero() {
        return Err(Error::GradientUndefined);
    }
    let q = Quadrature::new(cfg, z.len())?;
    let mut g = vec![0.0; z.len()];
    q.eval_grad(z.as_slice(), &mut g);
    Ok(g)
}

/// Smallest admissible amplitude for the chain rule through `z(p)`.
pub fn chain_rule_guard(p: &[f64]) -> f64 {
    1e-12 * norm(p).max(1.0)
}

/// `H(p) = S(z(p))`, the support function of `Omega`.
pub fn omega_support(sys: &OscillatorSystem, p: &[f64], quad: &Quadrature) -> f64 {
    quad.eval(&sys.amplitudes(p))
}

/// `H(p)` and `dH/dp` by the chain rule
/// `dH/dxi_i = S_i xi_i / (w_i^2 z_i)`, `dH/deta_i = S_i eta_i / z_i`.
pub fn omega_support_grad(
    sys: &OscillatorSystem,
    p: &[f64],
    quad: &Quadrature,
    grad: &mut [f64],
) -> Result<f64> {
    let z = sys.amplitudes(p);
    let guard = chain_rule_guard(p);
    if let Some((index, &value)) = z.iter().enumerate().find(|(_, &v)| v <= guard) {
        return Err(Error::NearSingular {
            index,
            value,
            guard,
        });
    }
    let mut gz = vec![0.0; z.len()];
    let value = quad.eval_grad(&z, &mut gz);
    for (i, &w) in sys.frequencies().iter().enumerate() {
        let k = gz[i] / z[i];
        grad[2 * i] = k * p[2 * i] / (w * w);
        grad[2 * i + 1] = k * p[2 * i + 1];
    }
    Ok(value)
}

/// Central finite-difference Hessian of `H`, built from `dH/dp` and
/// symmetrized.
pub fn omega_support_hess_fd(
    sys: &OscillatorSystem,
    p: &[f64],
    quad: &Quadrature,
    step: f64,
) -> Result<DMatrix<f64>> {
    let d = p.len();
    let mut hess = DMatrix::zeros(d, d);
    let mut q = p.to_vec();
    let mut gp = vec![0.0; d];
    let mut gm = vec![0.0; d];
    for j in 0..d {
        q[j] = p[j] + step;
        omega_support_grad(sys, &q, quad, &mut gp)?;
        q[j] = p[j] - step;
        omega_support_grad(sys, &q, quad, &mut gm)?;
        q[j] = p[j];
        for i in 0..d {
            hess[(i, j)] = (gp[i] - gm[i]) / (2.0 * step);
        }
    }
    Ok((&hess + hess.transpose()) * 0.5)
}

/// Checked wrapper around [`omega_support`] for a validated dual vector.
pub fn omega_support_eval(
    sys: &OscillatorSystem,
    p: &DualVector,
    quad: &Quadrature,
) -> Result<f64> {
    sys.check_len(p.as_slice(), "dual vector")?;
    Ok(omega_support(sys, p.as_slice(), quad))
}
