//! Learning-rate schedules and the square-root batch-size scaling helper.
//!
//! Four schedule shapes: constant, linear warmup into cosine decay, linear
//! warmup into polynomial decay, and multiplicative step decay. Evaluation
//! is a pure function of the step index.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    Constant,
    LinearWarmupCosine,
    LinearWarmupPoly,
    StepDecay,
}

/// Multiplicative decay applied from `step` onward (step-decay schedules).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecayPoint {
    pub step: u64,
    pub factor: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    pub kind: ScheduleKind,
    pub base_lr: f64,
    pub warmup_steps: u64,
    pub total_steps: u64,
    /// Exponent for the polynomial decay phase.
    pub poly_power: f64,
    pub decay_points: Vec<DecayPoint>,
}

impl Schedule {
    pub fn constant(base_lr: f64, total_steps: u64) -> Self {
        Schedule {
            kind: ScheduleKind::Constant,
            base_lr,
            warmup_steps: 0,
            total_steps,
            poly_power: 2.0,
            decay_points: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.base_lr.is_finite() || self.base_lr <= 0.0 {
            return Err(Error::config(format!(
                "base_lr must be finite and positive, got {}",
                self.base_lr
            )));
        }
        if self.warmup_steps > self.total_steps {
            return Err(Error::config(format!(
                "warmup_steps {} exceeds total_steps {}",
                self.warmup_steps, self.total_steps
            )));
        }
        if !self.poly_power.is_finite() || self.poly_power <= 0.0 {
            return Err(Error::config(format!(
                "poly_power must be finite and positive, got {}",
                self.poly_power
            )));
        }
        for dp in &self.decay_points {
            if !dp.factor.is_finite() || dp.factor <= 0.0 || dp.factor > 1.0 {
                return Err(Error::config(format!(
                    "decay factor at step {} must lie in (0, 1], got {}",
                    dp.step, dp.factor
                )));
            }
        }
        Ok(())
    }
}

/// Learning rate at `step`. Steps past `total_steps` are a range error.
///
/// Warmup (warmup kinds only) ramps linearly as `base_lr * (step+1) /
/// warmup_steps`, reaching `base_lr` on the last warmup step. Afterwards
/// `progress` runs linearly from 0 to 1 at `total_steps`; cosine decays to
/// exactly 0 there, polynomial decays as `(1 - progress)^poly_power`.
pub fn lr_at(schedule: &Schedule, step: u64) -> Result<f64> {
    if step > schedule.total_steps {
        return Err(Error::range(format!(
            "step {} past schedule horizon {}",
            step, schedule.total_steps
        )));
    }
    let base = schedule.base_lr;
    let lr = match schedule.kind {
        ScheduleKind::Constant => base,
        ScheduleKind::StepDecay => {
            let mut lr = base;
            for dp in &schedule.decay_points {
                if step >= dp.step {
                    lr *= dp.factor;
                }
            }
            lr
        }
        ScheduleKind::LinearWarmupCosine | ScheduleKind::LinearWarmupPoly => {
            if step < schedule.warmup_steps {
                base * (step + 1) as f64 / schedule.warmup_steps as f64
            } else {
                let span = schedule.total_steps - schedule.warmup_steps;
                let progress = if span == 0 {
                    1.0
                } else {
                    (step - schedule.warmup_steps) as f64 / span as f64
                };
                match schedule.kind {
                    ScheduleKind::LinearWarmupCosine => {
                        base * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos())
                    }
                    ScheduleKind::LinearWarmupPoly => {
                        base * (1.0 - progress).powf(schedule.poly_power)
                    }
                    _ => unreachable!(),
                }
            }
        }
    };
    Ok(lr)
}

/// Square-root batch-size scaling: the base rate tuned at `reference_batch`
/// scaled for `batch`.
pub fn scaled_lr(base_lr: f64, batch: usize, reference_batch: usize) -> f64 {
    base_lr * (batch as f64 / reference_batch as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn warmup_cosine(base: f64, warmup: u64, total: u64) -> Schedule {
        Schedule {
            kind: ScheduleKind::LinearWarmupCosine,
            base_lr: base,
            warmup_steps: warmup,
            total_steps: total,
            poly_power: 2.0,
            decay_points: Vec::new(),
        }
    }

    #[test]
    fn warmup_reaches_base_lr_on_last_warmup_step() {
        let s = warmup_cosine(0.4, 10, 100);
        assert_eq!(lr_at(&s, 9).unwrap(), 0.4);
        assert_eq!(lr_at(&s, 0).unwrap(), 0.04);
    }

    #[test]
    fn cosine_decays_to_zero_at_horizon() {
        let s = warmup_cosine(0.4, 10, 100);
        let end = lr_at(&s, 100).unwrap();
        assert!(
            end.abs() < 1e-16,
            "cosine endpoint should be 0, got {end}"
        );
    }

    #[test]
    fn poly_decay_follows_power_law() {
        let s = Schedule {
            kind: ScheduleKind::LinearWarmupPoly,
            base_lr: 1.0,
            warmup_steps: 0,
            total_steps: 100,
            poly_power: 2.0,
            decay_points: Vec::new(),
        };
        // progress 0.5 -> (1 - 0.5)^2 = 0.25
        assert!((lr_at(&s, 50).unwrap() - 0.25).abs() < 1e-15);
        assert_eq!(lr_at(&s, 100).unwrap(), 0.0);
    }

    #[test]
    fn step_decay_multiplies_passed_factors() {
        let s = Schedule {
            kind: ScheduleKind::StepDecay,
            base_lr: 1.0,
            warmup_steps: 0,
            total_steps: 200,
            poly_power: 2.0,
            decay_points: vec![
                DecayPoint {
                    step: 30,
                    factor: 0.1,
                },
                DecayPoint {
                    step: 60,
                    factor: 0.1,
                },
            ],
        };
        assert_eq!(lr_at(&s, 29).unwrap(), 1.0);
        assert!((lr_at(&s, 30).unwrap() - 0.1).abs() < 1e-15);
        assert!((lr_at(&s, 75).unwrap() - 0.01).abs() < 1e-15);
    }

    #[test]
    fn step_past_horizon_is_range_error() {
        let s = Schedule::constant(0.1, 50);
        assert!(matches!(lr_at(&s, 51), Err(Error::Range(_))));
    }

    #[test]
    fn post_warmup_rates_never_increase() {
        for kind in [
            ScheduleKind::LinearWarmupCosine,
            ScheduleKind::LinearWarmupPoly,
            ScheduleKind::StepDecay,
            ScheduleKind::Constant,
        ] {
            let s = Schedule {
                kind,
                base_lr: 0.7,
                warmup_steps: 13,
                total_steps: 311,
                poly_power: 1.5,
                decay_points: vec![DecayPoint {
                    step: 100,
                    factor: 0.5,
                }],
            };
            s.validate().unwrap();
            let start = match kind {
                ScheduleKind::LinearWarmupCosine | ScheduleKind::LinearWarmupPoly => 13,
                _ => 0,
            };
            let mut prev = f64::INFINITY;
            for step in start..=311 {
                let lr = lr_at(&s, step).unwrap();
                assert!(
                    lr <= prev + 1e-15,
                    "{kind:?}: lr rose from {prev} to {lr} at step {step}"
                );
                prev = lr;
            }
        }
    }

    #[test]
    fn validate_rejects_bad_parameters() {
        let mut s = Schedule::constant(0.0, 10);
        assert!(s.validate().is_err());
        s.base_lr = 0.1;
        s.warmup_steps = 11;
        assert!(s.validate().is_err());
        s.warmup_steps = 0;
        s.decay_points = vec![DecayPoint {
            step: 5,
            factor: 1.5,
        }];
        assert!(s.validate().is_err());
    }

    #[test]
    fn sqrt_scaling_matches_closed_form() {
        let scaled = scaled_lr(0.1, 1024, 256);
        assert!((scaled - 0.2).abs() < 1e-15);
        assert_eq!(scaled_lr(0.1, 256, 256), 0.1);
    }
}
