use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{config_err, Result};
use crate::model::{case_study_system, CaseStudyParams, InputSpec, LureSystem, NoiseBounds, NoiseDistribution};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Policy {
    Static,
    Dynamic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    /// Declared bound on the input amplitude (Euclidean).
    #[serde(default = "default_delta_u")]
    pub delta_u: f64,
    /// Process noise bound, added to the input channel.
    #[serde(default)]
    pub delta_v: f64,
    /// Measurement noise bound.
    #[serde(default)]
    pub delta_w: f64,
    #[serde(default)]
    pub distribution: NoiseDistribution,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig { delta_u: default_delta_u(), delta_v: 0.0, delta_w: 0.0, distribution: NoiseDistribution::default() }
    }
}

impl NoiseConfig {
    pub fn bounds(&self) -> NoiseBounds {
        NoiseBounds { delta_u: self.delta_u, delta_v: self.delta_v, delta_w: self.delta_w }
    }
}

/// One simulation scenario. All times are in steps; the sampling time only
/// converts steps to seconds in the trace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub policy: Policy,
    /// Observer count; must be a perfect `n_p`-th power (grid per axis).
    #[serde(rename = "N")]
    pub observers: usize,
    /// Forgetting factor of the monitoring signals, in `[0, 1)`.
    pub lambda: f64,
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    /// Steps between zooms (dynamic policy).
    #[serde(rename = "M_d", default, skip_serializing_if = "Option::is_none")]
    pub zoom_interval: Option<usize>,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub noise_inflation: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub noise: NoiseConfig,
    #[serde(default)]
    pub input: InputSpec,
    pub x0: Vec<f64>,
    /// Initial state of every observer; zero when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observer_x0: Option<Vec<f64>>,
    pub true_parameter: Vec<f64>,
    #[serde(default)]
    pub plant: CaseStudyParams,
    /// Abort when the Euclidean norm of the plant state exceeds this.
    #[serde(default = "default_guard")]
    pub state_guard: f64,
    /// Parameter-error margin for the entry-time metric; `Delta_0 / N^(1/n_p)` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub margin: Option<f64>,
    /// Share of the horizon used for the trailing-window metrics.
    #[serde(default = "default_trailing")]
    pub trailing_fraction: f64,
}

fn default_delta_u() -> f64 {
    1.0
}
fn default_horizon() -> usize {
    6000
}
fn default_alpha() -> f64 {
    0.8
}
fn default_guard() -> f64 {
    1e6
}
fn default_trailing() -> f64 {
    0.1
}

impl ScenarioConfig {
    /// Ten observers on `[1, 50]`, `lambda = 0.995`, noiseless, true parameter 21.
    pub fn case_study() -> Self {
        ScenarioConfig {
            policy: Policy::Static,
            observers: 10,
            lambda: 0.995,
            horizon: default_horizon(),
            zoom_interval: Some(1000),
            alpha: default_alpha(),
            noise_inflation: 0.0,
            seed: 0,
            noise: NoiseConfig::default(),
            input: InputSpec::default(),
            x0: vec![1.0, 0.0],
            observer_x0: None,
            true_parameter: vec![21.0],
            plant: CaseStudyParams::default(),
            state_guard: default_guard(),
            margin: None,
            trailing_fraction: default_trailing(),
        }
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let c: ScenarioConfig = serde_json::from_str(s)?;
        c.validate()?;
        Ok(c)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn system(&self) -> Result<LureSystem> {
        case_study_system(&self.plant)
    }

    /// Grid points per parameter axis.
    pub fn per_axis(&self, n_p: usize) -> Result<usize> {
        let n = self.observers;
        let root = (n as f64).powf(1.0 / n_p as f64).round() as usize;
        for r in root.saturating_sub(1)..=root + 1 {
            if r.checked_pow(n_p as u32) == Some(n) {
                return Ok(r);
            }
        }
        Err(config_err(format!("N = {n} is not a perfect power of the parameter dimension {n_p}")))
    }

    pub fn validate(&self) -> Result<()> {
        if self.observers == 0 {
            return Err(config_err("N must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.lambda) {
            return Err(config_err(format!("lambda must lie in [0, 1), got {}", self.lambda)));
        }
        if self.policy == Policy::Dynamic {
            match self.zoom_interval {
                Some(m) if m >= 1 => {}
                _ => return Err(config_err("dynamic policy needs M_d >= 1")),
            }
            if !(self.alpha > 0.0 && self.alpha < 1.0) {
                return Err(config_err(format!("alpha must lie in (0, 1), got {}", self.alpha)));
            }
        }
        if !(self.noise_inflation.is_finite() && self.noise_inflation >= 0.0) {
            return Err(config_err(format!("noise_inflation must be finite and >= 0, got {}", self.noise_inflation)));
        }
        self.noise.bounds().validate()?;
        self.input.validate(self.noise.delta_u)?;
        if self.state_guard.is_nan() || self.state_guard <= 0.0 {
            return Err(config_err(format!("state_guard must be > 0, got {}", self.state_guard)));
        }
        if !(self.trailing_fraction > 0.0 && self.trailing_fraction <= 1.0) {
            return Err(config_err(format!("trailing_fraction must lie in (0, 1], got {}", self.trailing_fraction)));
        }
        if let Some(m) = self.margin {
            if m.is_nan() || m < 0.0 {
                return Err(config_err(format!("margin must be >= 0, got {m}")));
            }
        }
        let sys = self.system()?;
        if self.x0.len() != sys.n_x() {
            return Err(config_err(format!("x0 has {} entries, plant has {} states", self.x0.len(), sys.n_x())));
        }
        if let Some(x) = &self.observer_x0 {
            if x.len() != sys.n_x() {
                return Err(config_err(format!("observer_x0 has {} entries, plant has {} states", x.len(), sys.n_x())));
            }
        }
        if self.x0.iter().chain(self.observer_x0.iter().flatten()).any(|v| !v.is_finite()) {
            return Err(config_err("initial states must be finite"));
        }
        if self.true_parameter.len() != sys.n_p() {
            return Err(config_err(format!(
                "true_parameter has {} entries, plant has {} parameters",
                self.true_parameter.len(),
                sys.n_p()
            )));
        }
        if !sys.parameter_box.contains(&self.true_parameter) {
            return Err(config_err(format!("true_parameter {:?} lies outside the parameter set", self.true_parameter)));
        }
        if self.input.channels != sys.n_u() {
            return Err(config_err(format!("input has {} channels, plant has {}", self.input.channels, sys.n_u())));
        }
        self.per_axis(sys.n_p())?;
        Ok(())
    }
}
