//! Bessel functions `J0`, `J1` and the one-dimensional cross-check rule
//!
//! `E|sum z_i cos phi_i| = (2/pi) int_0^inf (1 - prod_i J0(z_i t)) t^-2 dt`
//!
//! which follows from the characteristic function `prod_i J0(z_i t)` of the
//! sum with independent uniform phases. The partials are
//! `(2/pi) int_0^inf J1(z_k t) prod_{i != k} J0(z_i t) t^-1 dt`.

use std::f64::consts::{FRAC_2_PI, PI};

/// Below this argument the power series is used, above it the Hankel
/// asymptotic expansion.
const SERIES_LIMIT: f64 = 12.0;

pub fn bessel_j0(x: f64) -> f64 {
    let x = x.abs();
    if x < SERIES_LIMIT {
        // sum (-1)^k (x^2/4)^k / (k!)^2
        let q = 0.25 * x * x;
        let mut term = 1.0;
        let mut sum = 1.0;
        for k in 1..80 {
            let kf = k as f64;
            term *= -q / (kf * kf);
            sum += term;
            if term.abs() < 1e-17 * sum.abs().max(1e-300) {
                break;
            }
        }
        sum
    } else {
        hankel(0.0, x)
    }
}

pub fn bessel_j1(x: f64) -> f64 {
    let sign = x.signum();
    let x = x.abs();
    let v = if x < SERIES_LIMIT {
        // (x/2) sum (-1)^k (x^2/4)^k / (k! (k+1)!)
        let q = 0.25 * x * x;
        let mut term = 1.0;
        let mut sum = 1.0;
        for k in 1..80 {
            let kf = k as f64;
            term *= -q / (kf * (kf + 1.0));
            sum += term;
            if term.abs() < 1e-17 * sum.abs().max(1e-300) {
                break;
            }
        }
        0.5 * x * sum
    } else {
        hankel(1.0, x)
    };
    if x == 0.0 {
        0.0
    } else {
        sign * v
    }
}

/// `1 - J0(x)` without cancellation for small `x`.
fn one_minus_j0(x: f64) -> f64 {
    if x.abs() < 0.5 {
        // x^2/4 - x^4/64 + ...
        let q = 0.25 * x * x;
        let mut term = -1.0;
        let mut sum = 0.0;
        for k in 1..30 {
            let kf = k as f64;
            term *= -q / (kf * kf);
            sum += term;
            if term.abs() < 1e-18 * sum.abs() {
                break;
            }
        }
        sum
    } else {
        1.0 - bessel_j0(x)
    }
}

/// Hankel expansion `J_nu(x) = sqrt(2/(pi x)) (P cos chi - Q sin chi)` with
/// `chi = x - (nu/2 + 1/4) pi`, truncated at the smallest term.
fn hankel(nu: f64, x: f64) -> f64 {
    let mu = 4.0 * nu * nu;
    let mut p = 1.0;
    let mut q = 0.0;
    let mut a = 1.0; // a_k / x^k
    let mut last = f64::INFINITY;
    for k in 1..60 {
        let kf = k as f64;
        let odd = 2.0 * kf - 1.0;
        a *= (mu - odd * odd) / (kf * 8.0 * x);
        if a.abs() >= last {
            break;
        }
        last = a.abs();
        // Terms alternate between Q (odd k) and P (even k) with signs
        // (-1)^{floor(k/2)}.
        let sign = if (k / 2) % 2 == 0 { 1.0 } else { -1.0 };
        if k % 2 == 1 {
            q += sign * a;
        } else {
            p += sign * a;
        }
        if a.abs() < 1e-17 {
            break;
        }
    }
    let chi = x - (0.5 * nu + 0.25) * PI;
    (FRAC_2_PI / x).sqrt() * (p * chi.cos() - q * chi.sin())
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`, by Newton iteration on
/// the Legendre recurrence.
pub(crate) fn gauss_legendre(order: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; order];
    let mut weights = vec![0.0; order];
    let n = order as f64;
    for i in 0..order.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (n + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=order {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            dp = n * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[order - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[order - 1 - i] = w;
    }
    (nodes, weights)
}

const PANEL_ORDER: usize = 8;

/// Composite Gauss-Legendre rule on `[0, cutoff]` for the Bessel integrals.
#[derive(Debug, Clone)]
pub struct BesselRule {
    cutoff: f64,
    t: Vec<f64>,
    w: Vec<f64>,
}

impl BesselRule {
    pub fn new(cutoff: f64, nodes: usize) -> Self {
        let panels = (nodes / PANEL_ORDER).max(1);
        let (gx, gw) = gauss_legendre(PANEL_ORDER);
        let width = cutoff / panels as f64;
        let mut t = Vec::with_capacity(panels * PANEL_ORDER);
        let mut w = Vec::with_capacity(panels * PANEL_ORDER);
        for k in 0..panels {
            let mid = (k as f64 + 0.5) * width;
            for (x, wt) in gx.iter().zip(&gw) {
                t.push(mid + 0.5 * width * x);
                w.push(0.5 * width * wt);
            }
        }
        Self { cutoff, t, w }
    }

    pub fn node_count(&self) -> usize {
        self.t.len()
    }

    /// Value, with the non-oscillatory tail `int_C^inf t^-2 = 1/C` added in
    /// closed form.
    pub fn eval(&self, z: &[f64]) -> f64 {
        let mut sum = 0.0;
        for (&t, &w) in self.t.iter().zip(&self.w) {
            // 1 - prod(1 - a_i), accumulated without cancellation.
            let mut d = 0.0;
            for &zi in z {
                let a = one_minus_j0(zi * t);
                d = d + a - d * a;
            }
            sum += w * d / (t * t);
        }
        FRAC_2_PI * (sum + 1.0 / self.cutoff)
    }

    pub fn grad(&self, z: &[f64], out: &mut [f64]) {
        let n = z.len();
        let mut j0 = vec![0.0; n];
        let mut j1 = vec![0.0; n];
        out.iter_mut().for_each(|g| *g = 0.0);
        for (&t, &w) in self.t.iter().zip(&self.w) {
            for i in 0..n {
                j0[i] = bessel_j0(z[i] * t);
                j1[i] = bessel_j1(z[i] * t);
            }
            for k in 0..n {
                let mut prod = j1[k];
                for (i, &v) in j0.iter().enumerate() {
                    if i != k {
                        prod *= v;
                    }
                }
                out[k] += w * prod / t;
            }
        }
        out.iter_mut().for_each(|g| *g *= FRAC_2_PI);
    }

    /// Bound on the neglected oscillatory tail `(2/pi) int_C^inf |prod J0| t^-2`,
    /// using `|J0(u)| <= sqrt(2/(pi u))` for large `u`.
    pub fn tail_bound(&self, z: &[f64]) -> f64 {
        let c = self.cutoff;
        let active: Vec<f64> = z.iter().copied().filter(|&v| v > 0.0).collect();
        if active.is_empty() {
            return 0.0;
        }
        let k = active.len() as f64;
        let amp: f64 = active.iter().map(|&v| (FRAC_2_PI / v).sqrt()).product();
        // int_C^inf t^{-2 - k/2} dt
        FRAC_2_PI * amp * c.powf(-1.0 - 0.5 * k) / (1.0 + 0.5 * k)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// `J_n(x) = (1/pi) int_0^pi cos(n s - x sin s) ds`, trapezoid rule on a
    /// periodic analytic integrand (spectrally accurate).
    fn bessel_integral(n: f64, x: f64) -> f64 {
        let m = 4000 + 2 * x.abs() as usize;
        let h = PI / m as f64;
        let mut s = 0.0;
        for k in 0..=m {
            let th = k as f64 * h;
            let f = (n * th - x * th.sin()).cos();
            s += if k == 0 || k == m { 0.5 * f } else { f };
        }
        s * h / PI
    }

    #[test]
    fn reference_values() {
        assert!((bessel_j0(0.0) - 1.0).abs() < 1e-16);
        assert!((bessel_j0(1.0) - 0.765_197_686_557_966_6).abs() < 1e-15);
        assert!((bessel_j1(1.0) - 0.440_050_585_744_933_5).abs() < 1e-15);
        assert!((bessel_j0(10.0) + 0.245_935_764_451_348_3).abs() < 1e-13);
        assert!((bessel_j1(10.0) - 0.043_472_746_168_861_44).abs() < 1e-13);
        assert!(bessel_j0(2.404_825_557_695_773).abs() < 1e-14);
        assert_eq!(bessel_j1(0.0), 0.0);
        assert!((bessel_j1(-1.0) + bessel_j1(1.0)).abs() < 1e-16);
    }

    #[test]
    fn matches_integral_representation() {
        let mut x = 0.05;
        while x < 400.0 {
            let (a0, b0) = (bessel_j0(x), bessel_integral(0.0, x));
            let (a1, b1) = (bessel_j1(x), bessel_integral(1.0, x));
            assert!((a0 - b0).abs() < 1e-11, "J0({x}): {a0} vs {b0}");
            assert!((a1 - b1).abs() < 1e-11, "J1({x}): {a1} vs {b1}");
            x *= 1.173;
        }
    }

    #[test]
    fn one_minus_j0_is_continuous() {
        let a = one_minus_j0(0.499_999_999);
        let b = one_minus_j0(0.500_000_001);
        assert!((a - b).abs() < 1e-9);
        assert!((one_minus_j0(1e-5) - (0.25e-10 - 1e-20 / 64.0)).abs() < 1e-26);
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(8);
        let s: f64 = w.iter().sum();
        assert!((s - 2.0).abs() < 1e-14);
        // x^14 is exact for an 8-point rule.
        let i: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(14)).sum();
        assert!((i - 2.0 / 15.0).abs() < 1e-14);
    }

    #[test]
    fn single_amplitude_value_and_gradient() {
        let rule = BesselRule::new(5000.0, 200_000);
        let v = rule.eval(&[1.0]);
        assert!((v - FRAC_2_PI).abs() < 1e-7, "{v}");
        let mut g = [0.0];
        rule.grad(&[1.0], &mut g);
        assert!((g[0] - FRAC_2_PI).abs() < 1e-5, "{}", g[0]);
        assert!(rule.tail_bound(&[1.0]) < 1e-6);
    }
}
