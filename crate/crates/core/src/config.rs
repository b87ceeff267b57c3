//! Run-wide numeric defaults and the per-module configuration views built
//! from them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sphere::DEFAULT_ESCAPE_RADIUS;

/// Flat configuration object accepted by `--config`. Missing keys take their
/// defaults; unknown keys are rejected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub escape_radius: f64,
    pub pole_tol: f64,
    pub cycle_tol: f64,
    pub max_iter: usize,
    pub max_period: usize,
    pub diam_threshold: f64,
    pub stability_margin: f64,
    pub collision_tol: f64,
    pub max_step: f64,
    pub shrink_factor: f64,
    pub n_samples: usize,
    pub branch_bound: i64,
    /// Worker threads for grid scans; 0 uses the available parallelism.
    pub threads: usize,
    pub rng_seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            escape_radius: DEFAULT_ESCAPE_RADIUS,
            pole_tol: 1e-12,
            cycle_tol: 1e-8,
            max_iter: 1000,
            max_period: 64,
            diam_threshold: 0.5,
            stability_margin: 1e-6,
            collision_tol: 1e-6,
            max_step: 1e-2,
            shrink_factor: 2.0,
            n_samples: 25,
            branch_bound: 3,
            threads: 0,
            rng_seed: 0,
        }
    }
}

impl RunConfig {
    pub fn from_json(s: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("pole_tol", self.pole_tol),
            ("cycle_tol", self.cycle_tol),
            ("diam_threshold", self.diam_threshold),
            ("stability_margin", self.stability_margin),
            ("collision_tol", self.collision_tol),
            ("max_step", self.max_step),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidConfig(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.escape_radius > 1.0 && self.escape_radius.is_finite()) {
            return Err(Error::InvalidConfig("escape_radius must exceed 1".into()));
        }
        if !(self.shrink_factor > 1.0) {
            return Err(Error::InvalidConfig("shrink_factor must exceed 1".into()));
        }
        if self.max_iter == 0 || self.max_period == 0 {
            return Err(Error::InvalidConfig("max_iter and max_period must be >= 1".into()));
        }
        if self.n_samples < 9 {
            return Err(Error::InvalidConfig("n_samples must be >= 9".into()));
        }
        if self.branch_bound < 0 {
            return Err(Error::InvalidConfig("branch_bound must be >= 0".into()));
        }
        Ok(())
    }

    pub fn orbit(&self) -> OrbitConfig {
        OrbitConfig {
            max_iter: self.max_iter,
            escape_radius: self.escape_radius,
            pole_tol: self.pole_tol,
            cycle_tol: self.cycle_tol,
            max_period: self.max_period,
            stability_margin: self.stability_margin,
        }
    }

    pub fn classify(&self) -> ClassifyConfig {
        ClassifyConfig {
            n_samples: self.n_samples,
            diam_threshold: self.diam_threshold,
            orbit: self.orbit(),
        }
    }

    pub fn step_control(&self) -> StepControl {
        StepControl {
            max_step: self.max_step,
            shrink_factor: self.shrink_factor,
            collision_tol: self.collision_tol,
            stability_margin: self.stability_margin,
            ..StepControl::default()
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OrbitConfig {
    pub max_iter: usize,
    pub escape_radius: f64,
    pub pole_tol: f64,
    pub cycle_tol: f64,
    pub max_period: usize,
    pub stability_margin: f64,
}

impl Default for OrbitConfig {
    fn default() -> Self {
        RunConfig::default().orbit()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifyConfig {
    pub n_samples: usize,
    pub diam_threshold: f64,
    pub orbit: OrbitConfig,
}

impl Default for ClassifyConfig {
    fn default() -> Self {
        RunConfig::default().classify()
    }
}

/// Step control for parameter continuation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StepControl {
    pub max_step: f64,
    pub shrink_factor: f64,
    pub max_halvings: u32,
    pub collision_tol: f64,
    pub stability_margin: f64,
    /// Also abort when a cycle point meets the first iterates of a singular orbit.
    pub check_singular_orbits: bool,
    pub singular_orbit_len: usize,
}

impl Default for StepControl {
    fn default() -> Self {
        StepControl {
            max_step: 1e-2,
            shrink_factor: 2.0,
            max_halvings: 20,
            collision_tol: 1e-6,
            stability_margin: 1e-6,
            check_singular_orbits: false,
            singular_orbit_len: 200,
        }
    }
}
