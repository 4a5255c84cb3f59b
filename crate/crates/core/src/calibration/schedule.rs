use serde::{Deserialize, Serialize};

use crate::error::{require, Result};

/// Per-step sampling temperature ramping linearly from `t_initial` to
/// `t_final` over `ramp` generated tokens, then held at `t_final`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TemperatureSchedule {
    pub t_initial: f64,
    pub t_final: f64,
    pub ramp: usize,
}

impl Default for TemperatureSchedule {
    fn default() -> Self {
        Self::constant(1.0)
    }
}

impl TemperatureSchedule {
    pub fn new(t_initial: f64, t_final: f64, ramp: usize) -> Result<Self> {
        let s = Self {
            t_initial,
            t_final,
            ramp,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn constant(t: f64) -> Self {
        Self {
            t_initial: t,
            t_final: t,
            ramp: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        require(
            self.t_initial.is_finite() && self.t_final.is_finite(),
            || "temperatures must be finite".into(),
        )?;
        require(self.t_initial >= 0.0 && self.t_final >= 0.0, || {
            "temperatures must be >= 0".into()
        })?;
        require(self.ramp >= 1, || "ramp length must be >= 1".into())
    }

    /// Temperature for generation step `i` (the first sampled token is `i = 1`).
    pub fn temperature(&self, i: usize) -> f64 {
        debug_assert!(i >= 1);
        if i <= self.ramp {
            self.t_initial + (i as f64 / self.ramp as f64) * (self.t_final - self.t_initial)
        } else {
            self.t_final
        }
    }
}

/// Free-function form of [`TemperatureSchedule::temperature`].
pub fn schedule_temperature(i: usize, s: &TemperatureSchedule) -> f64 {
    s.temperature(i)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn formula_cases() {
        let s = TemperatureSchedule::new(0.5, 2.0, 10).unwrap();
        assert_eq!(s.temperature(5), 1.25);
        assert_eq!(s.temperature(15), 2.0);
        assert_eq!(s.temperature(10), 2.0);
        let c = TemperatureSchedule::constant(1.0);
        assert!((1..100).all(|i| c.temperature(i) == 1.0));
    }

    #[test]
    fn ramp_steps_are_constant() {
        let s = TemperatureSchedule::new(2.0, 0.0, 7).unwrap();
        let step = (s.t_final - s.t_initial) / 7.0;
        for i in 1..7 {
            assert!((s.temperature(i + 1) - s.temperature(i) - step).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_invalid() {
        assert!(TemperatureSchedule::new(-1.0, 1.0, 3).is_err());
        assert!(TemperatureSchedule::new(1.0, f64::NAN, 3).is_err());
        assert!(TemperatureSchedule::new(1.0, 1.0, 0).is_err());
    }
}
