//! Terminal-side prediction error tracking and predictability state.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Predictability {
    Predictable,
    NonPredictable,
}

impl Predictability {
    pub fn is_predictable(self) -> bool {
        self == Predictability::Predictable
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrackerConfig {
    /// Smoothed NMSE above which a predictable user is demoted.
    pub theta_high: f64,
    /// Smoothed NMSE below which a non-predictable user is promoted.
    pub theta_low: f64,
    /// Weight of the newest sample in the smoothed NMSE.
    pub gamma: f64,
    /// Starting value of the smoothed NMSE.
    pub initial_error: f64,
    pub initial_state: Predictability,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            theta_high: 0.2,
            theta_low: 0.1,
            gamma: 0.05,
            initial_error: 1.0,
            initial_state: Predictability::NonPredictable,
        }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.theta_high > self.theta_low
            && self.theta_low > 0.0
            && self.gamma > 0.0
            && self.gamma <= 1.0
            && self.initial_error >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid tracker thresholds {self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictabilityState {
    pub cfg: TrackerConfig,
    /// Smoothed NMSE.
    pub error: f64,
    pub flag: Predictability,
}

/// `‖predicted − actual‖² / ‖actual‖²`, or `None` for a zero channel.
pub fn nmse(predicted: &[Complex64], actual: &[Complex64]) -> Option<f64> {
    let den: f64 = actual.iter().map(|z| z.norm_sqr()).sum();
    if den == 0.0 {
        return None;
    }
    let num: f64 = predicted.iter().zip(actual).map(|(p, a)| (p - a).norm_sqr()).sum();
    Some(num / den)
}

impl PredictabilityState {
    pub fn new(cfg: TrackerConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self { cfg, error: cfg.initial_error, flag: cfg.initial_state })
    }

    /// Folds one prediction into the smoothed error and returns the
    /// instantaneous NMSE, skipping zero channels.
    pub fn record_error(&mut self, predicted: &[Complex64], actual: &[Complex64]) -> Option<f64> {
        let e = nmse(predicted, actual)?;
        self.record_nmse(e);
        Some(e)
    }

    /// Folds an already computed NMSE sample into the smoothed error.
    pub fn record_nmse(&mut self, e: f64) {
        self.error = (1.0 - self.cfg.gamma) * self.error + self.cfg.gamma * e;
    }

    /// Re-evaluates the flag; call only at block boundaries.
    pub fn classify(&mut self) -> Predictability {
        self.flag = match self.flag {
            Predictability::Predictable if self.error > self.cfg.theta_high => Predictability::NonPredictable,
            Predictability::NonPredictable if self.error < self.cfg.theta_low => Predictability::Predictable,
            unchanged => unchanged,
        };
        self.flag
    }

    pub fn feedback_payload(&self, trajectory: Vec<Vec<Complex64>>, norm_estimate: f64) -> FeedbackPayload {
        match self.flag {
            Predictability::Predictable => FeedbackPayload::Trajectory(trajectory),
            Predictability::NonPredictable => FeedbackPayload::Norm(norm_estimate),
        }
    }
}

/// What a terminal sends back for one prediction block.
#[derive(Debug, Clone, PartialEq)]
pub enum FeedbackPayload {
    /// Predicted channel vector for each fed-back slot of the block.
    Trajectory(Vec<Vec<Complex64>>),
    /// Smoothed channel norm estimate `‖h‖²`.
    Norm(f64),
}

impl FeedbackPayload {
    /// Real numbers carried: `2M` per slot for a trajectory, one for a norm.
    pub fn reals(&self) -> usize {
        match self {
            FeedbackPayload::Trajectory(slots) => slots.iter().map(|h| 2 * h.len()).sum(),
            FeedbackPayload::Norm(_) => 1,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn nmse_examples() {
        let h = vec![c(1.0), Complex64::new(0.0, 2.0)];
        assert_eq!(nmse(&h, &h), Some(0.0));
        assert_eq!(nmse(&[c(0.0), c(0.0)], &h), Some(1.0));
        let twice: Vec<Complex64> = h.iter().map(|z| z * 2.0).collect();
        assert_eq!(nmse(&twice, &h), Some(1.0));
        assert_eq!(nmse(&h, &[c(0.0), c(0.0)]), None);
    }

    #[test]
    fn perfect_prediction_decays_error() {
        let mut s = PredictabilityState::new(TrackerConfig::default()).unwrap();
        let h = vec![c(1.0)];
        s.record_error(&h, &h);
        assert!((s.error - 0.95).abs() < 1e-15);
        let before = s.error;
        assert_eq!(s.record_error(&h, &[c(0.0)]), None);
        assert_eq!(s.error, before);
    }

    #[test]
    fn thresholds_and_hysteresis() {
        let cfg = TrackerConfig { initial_state: Predictability::Predictable, initial_error: 0.0, ..TrackerConfig::default() };
        let mut s = PredictabilityState::new(cfg).unwrap();
        assert_eq!(s.classify(), Predictability::Predictable);
        s.error = 1.0;
        assert_eq!(s.classify(), Predictability::NonPredictable);
        s.error = 0.15;
        assert_eq!(s.classify(), Predictability::NonPredictable);
        s.error = 0.05;
        assert_eq!(s.classify(), Predictability::Predictable);
        s.error = 0.15;
        assert_eq!(s.classify(), Predictability::Predictable);
        assert!(TrackerConfig { theta_low: 0.3, ..TrackerConfig::default() }.validate().is_err());
    }

    #[test]
    fn payload_sizes() {
        let mut s = PredictabilityState::new(TrackerConfig::default()).unwrap();
        let traj = vec![vec![c(1.0); 4]; 20];
        let p = s.feedback_payload(traj.clone(), 3.0);
        assert_eq!(p, FeedbackPayload::Norm(3.0));
        assert_eq!(p.reals(), 1);
        s.flag = Predictability::Predictable;
        let p = s.feedback_payload(traj, 3.0);
        assert_eq!(p.reals(), 20 * 8);
    }

    proptest! {
        #[test]
        fn error_bounded_by_history(samples in prop::collection::vec(0.0f64..5.0, 1..200)) {
            let mut s = PredictabilityState::new(TrackerConfig::default()).unwrap();
            let mut max_seen: f64 = 1.0;
            for e in samples {
                s.record_nmse(e);
                max_seen = max_seen.max(e);
                prop_assert!(s.error >= 0.0 && s.error <= max_seen + 1e-12);
            }
        }

        #[test]
        fn perfect_prediction_promotes_within_bound(e0 in 0.11f64..10.0, gamma in 0.01f64..0.5) {
            let cfg = TrackerConfig { initial_error: e0, gamma, ..TrackerConfig::default() };
            let mut s = PredictabilityState::new(cfg).unwrap();
            let bound = ((cfg.theta_low / e0).ln() / (1.0 - gamma).ln()).ceil() as usize;
            let mut blocks = 0;
            while s.classify() != Predictability::Predictable {
                s.record_nmse(0.0);
                blocks += 1;
                prop_assert!(blocks <= bound);
            }
        }

        #[test]
        fn no_oscillation_inside_band(errors in prop::collection::vec(0.1001f64..0.1999, 1..100), start in any::<bool>()) {
            let initial_state = if start { Predictability::Predictable } else { Predictability::NonPredictable };
            let cfg = TrackerConfig { initial_state, initial_error: 0.15, ..TrackerConfig::default() };
            let mut s = PredictabilityState::new(cfg).unwrap();
            for e in errors {
                s.record_nmse(e);
                prop_assert_eq!(s.classify(), initial_state);
            }
        }
    }
}
