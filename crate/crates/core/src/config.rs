//! Run configuration shared by the CLI commands and the check suite.

use serde::{Deserialize, Serialize};

use crate::control::SmoothingConfig;
use crate::dynamics::{CompareConfig, SimConfig};
use crate::error::{Error, Result};
use crate::gauge::{DualityOptions, SolverOptions};
use crate::support::QuadratureConfig;
use crate::system::{
    OscillatorSystem, DEFAULT_RESONANCE_BUDGET, DEFAULT_RESONANCE_MAX_COEFF,
    DEFAULT_RESONANCE_TOL,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ResonanceSettings {
    pub max_coeff: u32,
    pub tol: f64,
    /// Maximum number of integer vectors enumerated.
    pub budget: u64,
}

impl Default for ResonanceSettings {
    fn default() -> Self {
        Self {
            max_coeff: DEFAULT_RESONANCE_MAX_COEFF,
            tol: DEFAULT_RESONANCE_TOL,
            budget: DEFAULT_RESONANCE_BUDGET,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StepSettings {
    pub dt_base: f64,
    pub horizon: f64,
}

impl Default for StepSettings {
    fn default() -> Self {
        let s = SimConfig::default();
        Self {
            dt_base: s.dt_base,
            horizon: s.horizon,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConvergeSettings {
    pub n_values: Vec<f64>,
    /// Perturbation size for the Lipschitz probe.
    pub perturbation: f64,
}

impl Default for ConvergeSettings {
    fn default() -> Self {
        Self {
            n_values: vec![125.0, 250.0, 500.0, 1000.0],
            perturbation: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub frequencies: Vec<f64>,
    pub quadrature: QuadratureConfig,
    pub smoothing: SmoothingConfig,
    pub sim: StepSettings,
    pub solver: SolverOptions,
    pub duality: DualityOptions,
    pub resonance: ResonanceSettings,
    pub converge: ConvergeSettings,
    pub compare: CompareConfig,
    /// Start state for `simulate` and `converge`.
    pub initial_state: Option<Vec<f64>>,
    /// Output file; stdout when absent.
    pub output: Option<String>,
    /// Seed for every randomized sample drawn by the commands.
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            frequencies: vec![1.0],
            quadrature: QuadratureConfig::default(),
            smoothing: SmoothingConfig::default(),
            sim: StepSettings::default(),
            solver: SolverOptions::default(),
            duality: DualityOptions::default(),
            resonance: ResonanceSettings::default(),
            converge: ConvergeSettings::default(),
            compare: CompareConfig::default(),
            initial_state: None,
            output: None,
            seed: 20_240_601,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Validation(format!("config: {e}")))
    }

    pub fn system(&self) -> Result<OscillatorSystem> {
        OscillatorSystem::new(self.frequencies.clone())
    }

    /// Validates every section and fills quadrature defaults for `N`.
    pub fn resolved(&self) -> Result<Self> {
        let sys = self.system()?;
        let mut out = self.clone();
        out.quadrature = self.quadrature.resolved(sys.len());
        out.sim_config().validate()?;
        if out.resonance.max_coeff < 1 || !(out.resonance.tol >= 0.0) {
            return Err(Error::Validation(
                "resonance needs max_coeff >= 1 and tol >= 0".into(),
            ));
        }
        if !(out.duality.h_step > 0.0 && out.duality.rho_step > 0.0) {
            return Err(Error::Validation("duality steps must be positive".into()));
        }
        if out.converge.n_values.iter().any(|&n| !(n > 0.0)) {
            return Err(Error::Validation("converge n_values must be positive".into()));
        }
        if let Some(x0) = &out.initial_state {
            if x0.len() != sys.phase_dim() || x0.iter().any(|v| !v.is_finite()) {
                return Err(Error::Validation(format!(
                    "initial_state needs {} finite entries, got {:?}",
                    sys.phase_dim(),
                    x0
                )));
            }
        }
        Ok(out)
    }

    pub fn sim_config(&self) -> SimConfig {
        SimConfig {
            dt_base: self.sim.dt_base,
            horizon: self.sim.horizon,
            smoothing: self.smoothing,
            quadrature: self.quadrature.clone(),
            solver: self.solver.clone(),
        }
    }

    pub fn to_json_value(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_defaults() {
        let cfg = RunConfig::from_json(r#"{"frequencies": [1.0, 2.0], "seed": 7}"#).unwrap();
        assert_eq!(cfg.smoothing.n, 1e3);
        let r = cfg.resolved().unwrap();
        assert_eq!(r.quadrature.points_per_dim, Some(512));
        let text = serde_json::to_string(&r).unwrap();
        assert_eq!(RunConfig::from_json(&text).unwrap(), r);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(RunConfig::from_json(r#"{"frequncies": [1.0]}"#).is_err());
        let cfg = RunConfig::from_json(r#"{"frequencies": [1.0, 1.0]}"#).unwrap();
        assert!(matches!(cfg.resolved(), Err(Error::Controllability { .. })));
        let cfg = RunConfig::from_json(r#"{"smoothing": {"n": -1}}"#).unwrap();
        assert!(cfg.resolved().is_err());
    }
}
