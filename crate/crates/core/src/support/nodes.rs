//! Equal-weight node sets on the torus (tensor midpoint grid, shifted rank-1
//! lattices) and the kernel that sums `|sum z_i cos phi_i|` over them.
//!
//! When `analytic` is set, the angle of the last amplitude is integrated in
//! closed form: for `c` the sum over the sampled angles and `r = z_last`,
//!
//! ```text
//! (1/2pi) int |c + r cos b| db = |c|                                if |c| >= r
//!                              = (2/pi)(sqrt(r^2 - c^2) + c asin(c/r)) otherwise
//! ```
//!
//! which is C^1 in `(c, r)`. The remaining integrand has no kink, so its
//! gradient is continuous in `z`.

use std::f64::consts::{FRAC_2_PI, PI};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub(crate) struct NodeSet {
    /// Number of sampled angles per node.
    dims: usize,
    /// Whether the last amplitude's angle is integrated in closed form.
    analytic: bool,
    /// Row-major `count x dims` table of cosines.
    cos: Vec<f64>,
    weight: f64,
    /// Nodes are grouped into independent equal-size blocks (lattice shifts).
    blocks: usize,
}

/// Closed-form inner average and its partials `(J, dJ/dc, dJ/dr)`.
#[inline]
fn inner(c: f64, r: f64) -> (f64, f64, f64) {
    let a = c.abs();
    if r == 0.0 {
        let jr = if c == 0.0 { FRAC_2_PI } else { 0.0 };
        return (a, sign(c), jr);
    }
    if a >= r {
        return (a, sign(c), 0.0);
    }
    let s = (r * r - c * c).sqrt();
    let asn = (c / r).asin();
    (FRAC_2_PI * (s + c * asn), FRAC_2_PI * asn, FRAC_2_PI * s / r)
}

#[inline]
fn sign(c: f64) -> f64 {
    if c > 0.0 {
        1.0
    } else if c < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Cosines and the common weight of one midpoint axis with `m` nodes.
///
/// Nodes `j` and `m-1-j` share a cosine, so only half are kept. If `quarter`
/// is set the global symmetry `phi -> phi + pi` (integrand even under
/// `c -> -c`) halves the first axis once more.
fn midpoint_axis(m: usize, quarter: bool) -> (Vec<f64>, f64) {
    let node = |j: usize| ((j as f64 + 0.5) * 2.0 * PI / m as f64).cos();
    if quarter && m % 4 == 0 {
        ((0..m / 4).map(node).collect(), 4.0 / m as f64)
    } else if m % 2 == 0 {
        ((0..m / 2).map(node).collect(), 2.0 / m as f64)
    } else {
        ((0..m).map(node).collect(), 1.0 / m as f64)
    }
}

impl NodeSet {
    /// Tensor-product midpoint rule with `m` points per sampled axis.
    pub fn torus_grid(n: usize, m: usize, analytic: bool, max_nodes: usize) -> Result<Self> {
        let dims = if analytic { n - 1 } else { n };
        let axes: Vec<(Vec<f64>, f64)> = (0..dims).map(|a| midpoint_axis(m, a == 0)).collect();
        let count = axes
            .iter()
            .try_fold(1usize, |acc, (c, _)| acc.checked_mul(c.len()))
            .filter(|&c| c <= max_nodes)
            .ok_or_else(|| {
                Error::Budget(format!(
                    "torus grid with {m} points on {dims} axes exceeds {max_nodes} nodes"
                ))
            })?;
        let weight: f64 = axes.iter().map(|(_, w)| w).product();
        let mut cos = Vec::with_capacity(count * dims);
        let mut idx = vec![0usize; dims];
        for _ in 0..count {
            for (a, &i) in idx.iter().enumerate() {
                cos.push(axes[a].0[i]);
            }
            for a in (0..dims).rev() {
                idx[a] += 1;
                if idx[a] < axes[a].0.len() {
                    break;
                }
                idx[a] = 0;
            }
        }
        Ok(Self {
            dims,
            analytic,
            cos,
            weight,
            blocks: 1,
        })
    }

    /// `shifts` independent random shifts of a Korobov rank-1 lattice with a
    /// prime number of points `>= samples`.
    pub fn shifted_lattice(
        n: usize,
        samples: usize,
        shifts: usize,
        seed: u64,
        analytic: bool,
        max_nodes: usize,
    ) -> Result<Self> {
        let dims = if analytic { n - 1 } else { n };
        let points = next_prime(samples);
        let count = points
            .checked_mul(shifts)
            .filter(|&c| c <= max_nodes)
            .ok_or_else(|| {
                Error::Budget(format!(
                    "lattice with {points} points x {shifts} shifts exceeds {max_nodes} nodes"
                ))
            })?;
        let gen = korobov_vector(points, dims);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut cos = Vec::with_capacity(count * dims);
        for _ in 0..shifts {
            let shift: Vec<f64> = (0..dims).map(|_| rng.gen::<f64>()).collect();
            for k in 0..points {
                for (g, s) in gen.iter().zip(&shift) {
                    let u = ((k as u64 * g) % points as u64) as f64 / points as f64 + s;
                    cos.push((2.0 * PI * u.fract()).cos());
                }
            }
        }
        Ok(Self {
            dims,
            analytic,
            cos,
            weight: 1.0 / points as f64,
            blocks: shifts,
        })
    }

    pub fn node_count(&self) -> usize {
        if self.dims == 0 {
            1
        } else {
            self.cos.len() / self.dims
        }
    }

    pub fn blocks(&self) -> usize {
        self.blocks
    }

    /// Per-block estimates of `E|sum z_i cos phi_i|`; accumulates the
    /// per-block gradients (summed, not averaged) into `grad` if given.
    pub fn is_analytic(&self) -> bool {
        self.analytic
    }

    pub fn eval_blocks(&self, z: &[f64], mut grad: Option<&mut [f64]>, out: &mut Vec<f64>) {
        out.clear();
        if let Some(g) = grad.as_deref_mut() {
            g.iter_mut().for_each(|v| *v = 0.0);
        }
        let d = self.dims;
        let r = if self.analytic { z[z.len() - 1] } else { 0.0 };
        if d == 0 {
            // Single oscillator, fully analytic.
            let (j, _, jr) = inner(0.0, r);
            if let Some(g) = grad {
                g[0] = jr;
            }
            out.push(j);
            return;
        }
        let per_block = self.node_count() / self.blocks;
        let zs = &z[..d];
        for b in 0..self.blocks {
            let rows = &self.cos[b * per_block * d..(b + 1) * per_block * d];
            let mut acc = 0.0;
            match grad.as_deref_mut() {
                None => {
                    for row in rows.chunks_exact(d) {
                        let c: f64 = row.iter().zip(zs).map(|(a, b)| a * b).sum();
                        acc += if self.analytic { inner(c, r).0 } else { c.abs() };
                    }
                }
                Some(g) => {
                    let mut gr = 0.0;
                    for row in rows.chunks_exact(d) {
                        let c: f64 = row.iter().zip(zs).map(|(a, b)| a * b).sum();
                        let (j, jc, jr) = if self.analytic {
                            inner(c, r)
                        } else {
                            (c.abs(), sign(c), 0.0)
                        };
                        acc += j;
                        gr += jr;
                        for (gi, ci) in g[..d].iter_mut().zip(row) {
                            *gi += jc * ci;
                        }
                    }
                    if self.analytic {
                        g[d] += gr;
                    }
                }
            }
            out.push(acc * self.weight);
        }
        if let Some(g) = grad {
            g.iter_mut().for_each(|v| *v *= self.weight);
        }
    }
}

fn is_prime(n: usize) -> bool {
    if n < 2 {
        return false;
    }
    let mut d = 2;
    while d * d <= n {
        if n % d == 0 {
            return false;
        }
        d += 1;
    }
    true
}

fn next_prime(n: usize) -> usize {
    let mut p = n.max(2);
    while !is_prime(p) {
        p += 1;
    }
    p
}

/// Korobov generating vector `(1, a, a^2, ...) mod n` minimizing the
/// `P_2` figure of merit over a deterministic candidate set.
fn korobov_vector(n: usize, dims: usize) -> Vec<u64> {
    let powers = |a: u64| {
        let mut v = Vec::with_capacity(dims);
        let mut g = 1u64;
        for _ in 0..dims {
            v.push(g);
            g = g * a % n as u64;
        }
        v
    };
    if dims <= 1 {
        return powers(1);
    }
    let bernoulli2 = |x: f64| x * x - x + 1.0 / 6.0;
    let candidates = 128.min(n / 2 - 1).max(1);
    let stride = ((n / 2 - 1) / candidates).max(1);
    let mut best = (f64::INFINITY, powers(1));
    for c in 0..candidates {
        let a = (2 + c * stride) as u64;
        let gen = powers(a);
        let mut p2 = 0.0;
        for k in 0..n as u64 {
            let mut prod = 1.0;
            for &g in &gen {
                let x = ((k * g) % n as u64) as f64 / n as f64;
                prod *= 1.0 + 2.0 * PI * PI * bernoulli2(x);
            }
            p2 += prod;
        }
        let p2 = p2 / n as f64 - 1.0;
        if p2 < best.0 {
            best = (p2, gen);
        }
    }
    best.1
}
