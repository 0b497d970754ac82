//! Run configuration: a TOML document validated before any compute.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::fe::{AxialRestraint, SectionMaterial};
use crate::ident::IdentMethod;
use crate::modal::CompanionKind;
use crate::newmark::NewmarkSettings;
use crate::prom::{ErrorMetric, KernelKind, StructurePolicy};
use crate::sampling::ParamBounds;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub parameters: ParameterConfig,
    pub sampling: SamplingConfig,
    pub fe: FeConfig,
    pub basis: BasisConfig,
    pub identification: IdentConfig,
    pub interpolation: InterpolationConfig,
    pub damping: DampingConfig,
    pub load: LoadConfig,
    pub integration: IntegrationConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

/// Physical parameter box. The first entry is the arch rise in thickness
/// multiples, the second the skew factor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParameterConfig {
    pub names: Vec<String>,
    pub min: Vec<f64>,
    pub max: Vec<f64>,
    #[serde(default)]
    pub units: Vec<String>,
}

impl ParameterConfig {
    pub fn bounds(&self) -> ParamBounds {
        ParamBounds { min: self.min.clone(), max: self.max.clone(), units: self.units.clone() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingConfig {
    pub n_train: usize,
    pub n_validation: usize,
    pub n_test: usize,
    pub seed_train: u64,
    pub seed_validation: u64,
    pub seed_test: u64,
    /// Fraction of each normalized axis excluded on both sides when drawing
    /// test points, keeping them inside the training cloud.
    #[serde(default)]
    pub test_margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeConfig {
    pub n_elements: usize,
    #[serde(default)]
    pub restraint: AxialRestraint,
    #[serde(default)]
    pub material: SectionMaterial,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasisConfig {
    /// Modes computed per sample before selection.
    pub n_modes: usize,
    /// Frequency cutoff (Hz).
    pub f_max: f64,
    pub mpf_tol: f64,
    pub companion: CompanionKind,
    pub k_pairs: usize,
    /// Largest nodal displacement of the modal-derivative perturbation (m).
    pub smd_step: f64,
    /// Dual-mode load amplitude, in thickness multiples.
    pub dual_mode_target: f64,
    #[serde(default)]
    pub dual_mode_pairs: bool,
    pub e_phi: f64,
    pub e_theta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdentConfig {
    pub method: IdentMethod,
    /// Probe amplitude, in thickness multiples of transverse displacement.
    pub probe_target: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InterpolationConfig {
    pub kernel: KernelKind,
    pub eps_min: f64,
    pub eps_max: f64,
    pub eps_count: usize,
    #[serde(default)]
    pub metric: ErrorMetric,
    #[serde(default)]
    pub structure_policy: StructurePolicy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DampingConfig {
    /// Modal damping ratio imposed at the two lowest frequencies.
    pub zeta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoadConfig {
    /// Peak pressure (Pa); the force pattern integrates it over the beam width.
    pub amplitude: f64,
    /// Pulse duration (s).
    pub duration: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegrationConfig {
    /// Simulated time in periods of the lowest full-order mode.
    pub periods: f64,
    pub hfm_steps_per_period: usize,
    pub rom_steps_per_period: usize,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default = "default_tol")]
    pub tol_rel: f64,
    #[serde(default = "default_iterations")]
    pub max_iterations: usize,
}

fn default_gamma() -> f64 {
    0.5
}
fn default_beta() -> f64 {
    0.25
}
fn default_tol() -> f64 {
    1e-8
}
fn default_iterations() -> usize {
    20
}

impl IntegrationConfig {
    pub fn newmark(&self) -> NewmarkSettings {
        NewmarkSettings { gamma: self.gamma, beta: self.beta, tol_rel: self.tol_rel, max_iterations: self.max_iterations }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    /// Free-DOF indices recorded in histories; empty means midspan transverse.
    #[serde(default)]
    pub monitored_dofs: Vec<usize>,
}

fn invalid(msg: impl Into<String>) -> PipelineError {
    PipelineError::Config(msg.into())
}

fn unit_interval(name: &str, x: f64) -> Result<(), PipelineError> {
    if x > 0.0 && x <= 1.0 {
        Ok(())
    } else {
        Err(invalid(format!("{name} must lie in (0, 1], got {x}")))
    }
}

fn positive(name: &str, x: f64) -> Result<(), PipelineError> {
    if x.is_finite() && x > 0.0 {
        Ok(())
    } else {
        Err(invalid(format!("{name} must be positive, got {x}")))
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, PipelineError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| invalid(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(|e| PipelineError::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let p = &self.parameters;
        self.parameters.bounds().validate().map_err(|e| invalid(e.to_string()))?;
        if p.names.len() != p.min.len() {
            return Err(invalid(format!("{} parameter names for {} bounds", p.names.len(), p.min.len())));
        }
        if !p.units.is_empty() && p.units.len() != p.min.len() {
            return Err(invalid("parameter units must match the bounds"));
        }
        if p.min.len() > 2 {
            return Err(invalid("the arch model takes at most two parameters (rise, skew)"));
        }
        let s = &self.sampling;
        for (name, n) in [("n_train", s.n_train), ("n_validation", s.n_validation), ("n_test", s.n_test)] {
            if n == 0 {
                return Err(invalid(format!("sampling.{name} must be at least 1")));
            }
        }
        if !(0.0..0.5).contains(&s.test_margin) {
            return Err(invalid(format!("sampling.test_margin must lie in [0, 0.5), got {}", s.test_margin)));
        }
        if self.fe.n_elements < 2 {
            return Err(invalid("fe.n_elements must be at least 2"));
        }
        let b = &self.basis;
        if b.n_modes == 0 || b.k_pairs == 0 {
            return Err(invalid("basis.n_modes and basis.k_pairs must be at least 1"));
        }
        positive("basis.f_max", b.f_max)?;
        positive("basis.smd_step", b.smd_step)?;
        positive("basis.dual_mode_target", b.dual_mode_target)?;
        if !(b.mpf_tol >= 0.0 && b.mpf_tol < 1.0) {
            return Err(invalid(format!("basis.mpf_tol must lie in [0, 1), got {}", b.mpf_tol)));
        }
        unit_interval("basis.e_phi", b.e_phi)?;
        unit_interval("basis.e_theta", b.e_theta)?;
        positive("identification.probe_target", self.identification.probe_target)?;
        let i = &self.interpolation;
        positive("interpolation.eps_min", i.eps_min)?;
        positive("interpolation.eps_max", i.eps_max)?;
        if i.eps_count == 0 || i.eps_max < i.eps_min {
            return Err(invalid("interpolation grid must be non-empty with eps_min <= eps_max"));
        }
        if !(self.damping.zeta.is_finite() && self.damping.zeta >= 0.0) {
            return Err(invalid(format!("damping.zeta must be non-negative, got {}", self.damping.zeta)));
        }
        positive("load.duration", self.load.duration)?;
        if !self.load.amplitude.is_finite() {
            return Err(invalid("load.amplitude must be finite"));
        }
        let t = &self.integration;
        positive("integration.periods", t.periods)?;
        if t.hfm_steps_per_period == 0 || t.rom_steps_per_period == 0 {
            return Err(invalid("steps per period must be at least 1"));
        }
        if t.hfm_steps_per_period % t.rom_steps_per_period != 0 {
            return Err(invalid("hfm_steps_per_period must be a multiple of rom_steps_per_period"));
        }
        if t.max_iterations == 0 {
            return Err(invalid("integration.max_iterations must be at least 1"));
        }
        positive("integration.tol_rel", t.tol_rel)?;
        Ok(())
    }

    /// Applies `key=value` overrides of scalar settings (dotted keys, TOML
    /// value syntax; bare words are read as strings).
    pub fn with_overrides(&self, overrides: &[String]) -> Result<Self, PipelineError> {
        if overrides.is_empty() {
            return Ok(self.clone());
        }
        let mut doc = toml::Value::try_from(self).map_err(|e| invalid(e.to_string()))?;
        for item in overrides {
            let (key, raw) = item.split_once('=').ok_or_else(|| invalid(format!("override `{item}` is not key=value")))?;
            let value = parse_scalar(raw.trim());
            let mut slot = &mut doc;
            for part in key.trim().split('.') {
                slot = slot
                    .as_table_mut()
                    .and_then(|t| t.get_mut(part))
                    .ok_or_else(|| invalid(format!("unknown setting `{key}`")))?;
            }
            if slot.is_table() || slot.is_array() {
                return Err(invalid(format!("`{key}` is not a scalar setting")));
            }
            *slot = coerce(slot, value);
        }
        let cfg: RunConfig = doc.try_into().map_err(|e: toml::de::Error| invalid(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn parse_scalar(raw: &str) -> toml::Value {
    let wrapped = format!("v = {raw}");
    match wrapped.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.to_string())),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

/// Integers written where a float is stored are widened.
fn coerce(slot: &toml::Value, value: toml::Value) -> toml::Value {
    match (slot, &value) {
        (toml::Value::Float(_), toml::Value::Integer(i)) => toml::Value::Float(*i as f64),
        _ => value,
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn sample() -> RunConfig {
        RunConfig::from_toml_str(include_str!("../../../../configs/desk.toml")).unwrap()
    }

    #[test]
    fn shipped_config_round_trips() {
        let cfg = sample();
        let again = RunConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
        assert_eq!(cfg, again);
    }

    #[test]
    fn overrides_change_scalars_only() {
        let cfg = sample();
        let o = cfg
            .with_overrides(&["sampling.n_train=4".into(), "damping.zeta=0.05".into(), "basis.companion=\"dual_mode\"".into()])
            .unwrap();
        assert_eq!(o.sampling.n_train, 4);
        assert_eq!(o.damping.zeta, 0.05);
        assert_eq!(o.basis.companion, CompanionKind::DualMode);
        let widened = cfg.with_overrides(&["damping.zeta=1".into()]).unwrap();
        assert_eq!(widened.damping.zeta, 1.0);
        assert!(cfg.with_overrides(&["parameters.min=[0.0, 1.0]".into()]).is_err());
        assert!(cfg.with_overrides(&["sampling.bogus=3".into()]).is_err());
        assert!(cfg.with_overrides(&["sampling.n_train=0".into()]).is_err());
        assert!(cfg.with_overrides(&["no_equals".into()]).is_err());
    }

    #[test]
    fn validation_rejects_bad_thresholds() {
        let mut cfg = sample();
        cfg.basis.e_phi = 1.5;
        assert!(cfg.validate().is_err());
        let mut cfg = sample();
        cfg.integration.hfm_steps_per_period = 150;
        assert!(cfg.validate().is_err());
        assert!(RunConfig::from_toml_str("[parameters]\nnames = []").is_err());
    }
}
