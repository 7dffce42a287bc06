//! Validation-driven learning-rate control.
//!
//! After every validation the rate is halved unless the error beats
//! `tolerance × best`; training stops once the rate falls below the floor.

use crate::error::{invalid, Result};
use serde::{Deserialize, Serialize};

pub const LR_FLOOR: f64 = 1e-5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub lr: f64,
    pub tolerance: f64,
    pub best: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Verdict {
    /// The error is a new best; the caller keeps this checkpoint.
    pub improved: bool,
    pub stop: bool,
}

impl LrSchedule {
    pub fn new(lr: f64, tolerance: f64) -> Result<Self> {
        if !(tolerance > 0.0 && tolerance < 1.0) {
            return invalid(format!("improvement tolerance must lie in (0,1), got {tolerance}"));
        }
        if !(lr > 0.0) || !lr.is_finite() {
            return invalid(format!("learning rate must be positive, got {lr}"));
        }
        Ok(LrSchedule { lr, tolerance, best: f64::INFINITY })
    }

    pub fn observe(&mut self, val: f64) -> Verdict {
        let val = if val.is_nan() { f64::INFINITY } else { val };
        if self.best.is_finite() && val > self.tolerance * self.best {
            self.lr *= 0.5;
        }
        let improved = val < self.best;
        if improved {
            self.best = val;
        }
        Verdict { improved, stop: self.lr < LR_FLOOR }
    }
}

/// Replays a validation history from rate `lr`; returns the final rate and
/// whether training should stop.
pub fn lr_schedule(history: &[f64], tolerance: f64, lr: f64) -> Result<(f64, bool)> {
    let mut s = LrSchedule::new(lr, tolerance)?;
    let mut stop = s.lr < LR_FLOOR;
    for &v in history {
        stop = s.observe(v).stop;
    }
    Ok((s.lr, stop))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn improving_history_keeps_rate() {
        let h: Vec<f64> = (0..10).map(|k| 0.5f64.powi(k)).collect();
        assert_eq!(lr_schedule(&h, 0.96, 1e-3).unwrap(), (1e-3, false));
    }

    #[test]
    fn stagnant_history_halves_twice() {
        assert_eq!(lr_schedule(&[0.2, 0.2, 0.2], 0.97, 1e-3).unwrap(), (2.5e-4, false));
    }

    #[test]
    fn floor_stops() {
        let mut s = LrSchedule::new(1.8e-5, 0.9).unwrap();
        assert!(!s.observe(1.0).stop);
        let v = s.observe(1.0);
        assert!((s.lr - 0.9e-5).abs() < 1e-20);
        assert!(v.stop && !v.improved);
    }

    #[test]
    fn nan_counts_as_failure() {
        let mut s = LrSchedule::new(1e-3, 0.9).unwrap();
        s.observe(1.0);
        let v = s.observe(f64::NAN);
        assert!(!v.improved);
        assert_eq!(s.lr, 5e-4);
        assert_eq!(s.best, 1.0);
    }

    #[test]
    fn bad_tolerance() {
        assert!(LrSchedule::new(1e-3, 1.0).is_err());
        assert!(LrSchedule::new(1e-3, 0.0).is_err());
    }
}
