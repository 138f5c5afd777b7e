//! The oscillator plant `x' = Ax + Bu`, `|u| <= 1`, with `A = diag(A_i)`,
//! `A_i = [[0, 1], [-w_i^2, 0]]` and `B_i = (0, 1)`.
//!
//! Phase vectors are laid out as `(x_1, y_1, ..., x_N, y_N)` and dual vectors
//! as `(xi_1, eta_1, ..., xi_N, eta_N)`. `A` and `B` are only ever applied
//! blockwise.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Validated set of pairwise distinct positive eigenfrequencies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct OscillatorSystem {
    frequencies: Vec<f64>,
}

impl OscillatorSystem {
    pub fn new(frequencies: Vec<f64>) -> Result<Self> {
        if frequencies.is_empty() {
            return Err(Error::Validation("frequency list is empty".into()));
        }
        for (i, &w) in frequencies.iter().enumerate() {
            if !w.is_finite() || w <= 0.0 {
                return Err(Error::Validation(format!(
                    "frequency {i} must be positive and finite, got {w}"
                )));
            }
        }
        for i in 0..frequencies.len() {
            for j in (i + 1)..frequencies.len() {
                if frequencies[i] == frequencies[j] {
                    return Err(Error::Controllability {
                        i,
                        j,
                        first: frequencies[i],
                        second: frequencies[j],
                    });
                }
            }
        }
        Ok(Self { frequencies })
    }

    /// Number of oscillators `N`.
    pub fn len(&self) -> usize {
        self.frequencies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frequencies.is_empty()
    }

    /// Phase-space dimension `2N`.
    pub fn phase_dim(&self) -> usize {
        2 * self.frequencies.len()
    }

    pub fn frequencies(&self) -> &[f64] {
        &self.frequencies
    }

    /// `out = A x`, i.e. `(y_i, -w_i^2 x_i)` per block.
    pub fn apply_a(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.phase_dim());
        for (i, &w) in self.frequencies.iter().enumerate() {
            let (xi, yi) = (x[2 * i], x[2 * i + 1]);
            out[2 * i] = yi;
            out[2 * i + 1] = -w * w * xi;
        }
    }

    /// `out = A^* p`, i.e. `(-w_i^2 eta_i, xi_i)` per block.
    pub fn apply_a_adjoint(&self, p: &[f64], out: &mut [f64]) {
        debug_assert_eq!(p.len(), self.phase_dim());
        for (i, &w) in self.frequencies.iter().enumerate() {
            let (xi, eta) = (p[2 * i], p[2 * i + 1]);
            out[2 * i] = -w * w * eta;
            out[2 * i + 1] = xi;
        }
    }

    /// `<B, p>`: the sum of the velocity-dual components.
    pub fn b_dot(&self, p: &[f64]) -> f64 {
        p.iter().skip(1).step_by(2).sum()
    }

    /// Amplitudes `z_i = (eta_i^2 + xi_i^2 / w_i^2)^(1/2)` of a dual vector.
    pub fn amplitudes(&self, p: &[f64]) -> Vec<f64> {
        self.frequencies
            .iter()
            .enumerate()
            .map(|(i, &w)| {
                let (xi, eta) = (p[2 * i], p[2 * i + 1]);
                (xi / w).hypot(eta)
            })
            .collect()
    }

    /// Adjoint energies `I_i = (eta_i^2 + xi_i^2 / w_i^2) / 2`.
    pub fn adjoint_energies(&self, p: &[f64]) -> Vec<f64> {
        self.amplitudes(p).iter().map(|z| 0.5 * z * z).collect()
    }

    /// PMP Hamiltonian `h(x, p) = <Ax, p> + |<B, p>| - 1`.
    pub fn hamiltonian(&self, x: &PhaseState, p: &DualVector) -> f64 {
        let mut ax = vec![0.0; self.phase_dim()];
        self.apply_a(x.as_slice(), &mut ax);
        let drift: f64 = ax.iter().zip(p.as_slice()).map(|(a, b)| a * b).sum();
        drift + self.b_dot(p.as_slice()).abs() - 1.0
    }

    /// Closed-form solution of `p' = -A^* p` at time `t`: each block rotates
    /// with frequency `w_i`, preserving `I_i`.
    pub fn adjoint_evolve(&self, p0: &DualVector, t: f64) -> DualVector {
        let p = p0.as_slice();
        let mut out = vec![0.0; p.len()];
        for (i, &w) in self.frequencies.iter().enumerate() {
            let (xi, eta) = (p[2 * i], p[2 * i + 1]);
            let (s, c) = (w * t).sin_cos();
            out[2 * i] = xi * c + w * eta * s;
            out[2 * i + 1] = eta * c - xi / w * s;
        }
        DualVector(out)
    }

    pub(crate) fn check_len(&self, v: &[f64], what: &str) -> Result<()> {
        if v.len() != self.phase_dim() {
            return Err(Error::Validation(format!(
                "{what} has length {}, expected 2N = {}",
                v.len(),
                self.phase_dim()
            )));
        }
        Ok(())
    }
}

impl TryFrom<Vec<f64>> for OscillatorSystem {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<OscillatorSystem> for Vec<f64> {
    fn from(s: OscillatorSystem) -> Self {
        s.frequencies
    }
}

fn check_finite(v: &[f64], what: &str) -> Result<()> {
    if v.is_empty() || v.len() % 2 != 0 {
        return Err(Error::Validation(format!(
            "{what} must have a positive even length, got {}",
            v.len()
        )));
    }
    if let Some(i) = v.iter().position(|c| !c.is_finite()) {
        return Err(Error::Validation(format!("{what} entry {i} is not finite")));
    }
    Ok(())
}

/// A point `(x_1, y_1, ..., x_N, y_N)` of phase space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct PhaseState(Vec<f64>);

impl PhaseState {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        check_finite(&coords, "phase state")?;
        Ok(Self(coords))
    }

    pub fn zeros(phase_dim: usize) -> Self {
        Self(vec![0.0; phase_dim])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        norm(&self.0)
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&c| c == 0.0)
    }
}

impl TryFrom<Vec<f64>> for PhaseState {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<PhaseState> for Vec<f64> {
    fn from(s: PhaseState) -> Self {
        s.0
    }
}

/// A momentum `(xi_1, eta_1, ..., xi_N, eta_N)` dual to [`PhaseState`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct DualVector(Vec<f64>);

impl DualVector {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        check_finite(&coords, "dual vector")?;
        Ok(Self(coords))
    }

    pub(crate) fn from_vec_unchecked(coords: Vec<f64>) -> Self {
        Self(coords)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        norm(&self.0)
    }
}

impl TryFrom<Vec<f64>> for DualVector {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<DualVector> for Vec<f64> {
    fn from(s: DualVector) -> Self {
        s.0
    }
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|c| c * c).sum::<f64>().sqrt()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Integer relations `sum m_i w_i ~ 0` found by bounded enumeration.
///
/// The report is only meaningful relative to `(max_coeff, tol)`: floating
/// point frequencies cannot certify irrationality.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResonanceReport {
    pub max_coeff: u32,
    pub tol: f64,
    /// Canonical representatives: the first nonzero entry is positive.
    pub relations: Vec<Vec<i64>>,
    pub residuals: Vec<f64>,
}

impl ResonanceReport {
    pub fn is_resonant(&self) -> bool {
        !self.relations.is_empty()
    }

    /// True if `m` or `-m` is among the reported relations.
    pub fn contains(&self, m: &[i64]) -> bool {
        let canon = canonical_sign(m);
        self.relations.iter().any(|r| *r == canon)
    }
}

pub const DEFAULT_RESONANCE_MAX_COEFF: u32 = 5;
pub const DEFAULT_RESONANCE_TOL: f64 = 1e-9;
pub const DEFAULT_RESONANCE_BUDGET: u64 = 20_000_000;

/// Flips `m` so that its first nonzero entry is positive.
pub fn canonical_sign(m: &[i64]) -> Vec<i64> {
    match m.iter().find(|&&c| c != 0) {
        Some(&c) if c < 0 => m.iter().map(|v| -v).collect(),
        _ => m.to_vec(),
    }
}

/// Exhaustive search of the box `|m_i| <= max_coeff` for nonzero `m` with
/// `|sum m_i w_i| <= tol`.
pub fn resonance_check(
    sys: &OscillatorSystem,
    max_coeff: u32,
    tol: f64,
    budget: u64,
) -> Result<ResonanceReport> {
    if max_coeff < 1 {
        return Err(Error::Validation("max_coeff must be at least 1".into()));
    }
    if !(tol >= 0.0) {
        return Err(Error::Validation("tol must be nonnegative".into()));
    }
    let n = sys.len();
    let side = 2 * max_coeff as u64 + 1;
    let total = (n as u32)
        .try_into()
        .ok()
        .and_then(|e: u32| side.checked_pow(e))
        .filter(|&t| t <= budget)
        .ok_or_else(|| {
            Error::Budget(format!(
                "resonance enumeration of (2*{max_coeff}+1)^{n} vectors exceeds budget {budget}"
            ))
        })?;

    let k = max_coeff as i64;
    let w = sys.frequencies();
    let mut relations = Vec::new();
    let mut residuals = Vec::new();
    let mut m = vec![-k; n];
    for _ in 0..total {
        // Only canonical representatives: first nonzero entry positive.
        if let Some(&first) = m.iter().find(|&&c| c != 0) {
            if first > 0 {
                let s: f64 = m.iter().zip(w).map(|(&mi, &wi)| mi as f64 * wi).sum();
                if s.abs() <= tol {
                    relations.push(m.clone());
                    residuals.push(s);
                }
            }
        }
        for c in m.iter_mut().rev() {
            if *c < k {
                *c += 1;
                break;
            }
            *c = -k;
        }
    }
    Ok(ResonanceReport {
        max_coeff,
        tol,
        relations,
        residuals,
    })
}
