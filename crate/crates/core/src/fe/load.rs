use nalgebra::DVector;

use super::FeError;

/// Half-sine pulse `pattern · a · sin(πt/T) · H(T − t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadDescriptor {
    pattern: DVector<f64>,
    amplitude: f64,
    duration: f64,
}

impl LoadDescriptor {
    pub fn new(pattern: DVector<f64>, amplitude: f64, duration: f64) -> Result<Self, FeError> {
        if !(duration.is_finite() && duration > 0.0) {
            return Err(FeError::InvalidLoad(format!("pulse duration must be positive, got {duration}")));
        }
        if pattern.iter().all(|&x| x == 0.0) {
            return Err(FeError::InvalidLoad("spatial pattern is identically zero".into()));
        }
        if !amplitude.is_finite() {
            return Err(FeError::InvalidLoad("amplitude is not finite".into()));
        }
        Ok(Self { pattern, amplitude, duration })
    }

    pub fn pattern(&self) -> &DVector<f64> {
        &self.pattern
    }

    pub fn amplitude(&self) -> f64 {
        self.amplitude
    }

    pub fn duration(&self) -> f64 {
        self.duration
    }

    /// Time factor of the pulse; exactly zero for `t >= T`.
    pub fn time_factor(&self, t: f64) -> f64 {
        if t >= self.duration || t < 0.0 {
            0.0
        } else {
            self.amplitude * (std::f64::consts::PI * t / self.duration).sin()
        }
    }

    pub fn external_load(&self, t: f64) -> DVector<f64> {
        &self.pattern * self.time_factor(t)
    }

    /// Same pulse acting on a projected pattern (e.g. `Vᵀ·pattern`).
    pub fn with_pattern(&self, pattern: DVector<f64>) -> Self {
        Self { pattern, amplitude: self.amplitude, duration: self.duration }
    }
}
