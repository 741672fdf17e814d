use serde::{Deserialize, Serialize};

use super::DiffusionError;

pub const DEFAULT_STEPS: usize = 1000;
pub const DEFAULT_BETA_START: f64 = 1e-4;
pub const DEFAULT_BETA_END: f64 = 2e-2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    #[default]
    Linear,
}

/// Cumulative signal fractions `ᾱ_0..=ᾱ_T` with `ᾱ_0 = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    alpha_bar: Vec<f64>,
}

impl NoiseSchedule {
    /// Accepts any strictly decreasing sequence in (0, 1] starting at 1.
    pub fn from_alpha_bar(alpha_bar: Vec<f64>) -> Result<Self, DiffusionError> {
        if alpha_bar.len() < 2 {
            return Err(DiffusionError::Schedule("need at least one step".into()));
        }
        if alpha_bar[0] != 1.0 {
            return Err(DiffusionError::Schedule("alpha_bar[0] must be 1".into()));
        }
        if alpha_bar.iter().any(|a| !(a.is_finite() && *a > 0.0 && *a <= 1.0)) {
            return Err(DiffusionError::Schedule("values must lie in (0, 1]".into()));
        }
        if alpha_bar.windows(2).any(|w| w[1] >= w[0]) {
            return Err(DiffusionError::Schedule("alpha_bar must be strictly decreasing".into()));
        }
        Ok(Self { alpha_bar })
    }

    pub fn steps(&self) -> usize {
        self.alpha_bar.len() - 1
    }

    pub fn alpha_bar(&self) -> &[f64] {
        &self.alpha_bar
    }

    /// `(√ᾱ_t, √(1−ᾱ_t))`.
    pub fn coefficients(&self, t: usize) -> Result<(f64, f64), DiffusionError> {
        let ab = *self.alpha_bar.get(t).ok_or(DiffusionError::Timestep { t, steps: self.steps() })?;
        Ok((ab.sqrt(), (1.0 - ab).sqrt()))
    }
}

impl Default for NoiseSchedule {
    fn default() -> Self {
        make_schedule(DEFAULT_STEPS, DEFAULT_BETA_START, DEFAULT_BETA_END, ScheduleKind::Linear)
            .expect("default schedule is valid")
    }
}

/// `ᾱ_t = Π_{s≤t} (1 − β_s)` with β linearly spaced from `beta_start` to `beta_end`.
pub fn make_schedule(steps: usize, beta_start: f64, beta_end: f64, kind: ScheduleKind) -> Result<NoiseSchedule, DiffusionError> {
    if steps == 0 {
        return Err(DiffusionError::Schedule("T must be at least 1".into()));
    }
    if !(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0) {
        return Err(DiffusionError::Schedule(format!(
            "need 0 < beta_start <= beta_end < 1, got {beta_start}, {beta_end}"
        )));
    }
    let ScheduleKind::Linear = kind;
    let mut alpha_bar = Vec::with_capacity(steps + 1);
    alpha_bar.push(1.0);
    let mut acc = 1.0;
    for s in 0..steps {
        let beta = if steps == 1 {
            beta_start
        } else {
            beta_start + (beta_end - beta_start) * s as f64 / (steps - 1) as f64
        };
        acc *= 1.0 - beta;
        alpha_bar.push(acc);
    }
    NoiseSchedule::from_alpha_bar(alpha_bar)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn hand_products() {
        let s = make_schedule(1, 0.5, 0.5, ScheduleKind::Linear).unwrap();
        assert_eq!(s.alpha_bar(), &[1.0, 0.5]);
        let s = make_schedule(2, 0.1, 0.2, ScheduleKind::Linear).unwrap();
        assert_eq!(s.alpha_bar()[1], 0.9);
        assert!((s.alpha_bar()[2] - 0.72).abs() < 1e-15);
        assert!(make_schedule(0, 0.1, 0.2, ScheduleKind::Linear).is_err());
        assert!(make_schedule(5, 0.3, 0.2, ScheduleKind::Linear).is_err());
        assert!(make_schedule(5, 0.0, 0.2, ScheduleKind::Linear).is_err());
        assert!(make_schedule(5, 0.1, 1.0, ScheduleKind::Linear).is_err());
    }

    proptest! {
        #[test]
        fn strictly_decreasing(steps in 1usize..2000, b0 in 1e-6f64..0.1, span in 0.0f64..0.1) {
            let s = make_schedule(steps, b0, b0 + span, ScheduleKind::Linear).unwrap();
            prop_assert!(s.alpha_bar().windows(2).all(|w| w[1] < w[0]));
            prop_assert!(s.alpha_bar().iter().all(|a| *a > 0.0 && *a <= 1.0));
        }
    }
}
