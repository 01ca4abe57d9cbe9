//! Stepsize schedules.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Non-increase is spot-checked numerically for `t` up to this value.
pub const SPOT_CHECK_STEPS: usize = 10_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum StepsizeSchedule {
    /// `a / (t + 1)`
    Harmonic { a: f64 },
    /// `a / (t + 1)^p`
    Polynomial { a: f64, p: f64 },
    /// `1 / sqrt(T)` for `t < T`.
    FixedHorizon { horizon: usize },
    /// `value` at every step. `value = 0` turns the optimizer into plain push-sum.
    Constant { value: f64 },
}

impl StepsizeSchedule {
    pub fn stepsize(&self, t: usize) -> Result<f64> {
        stepsize(self, t)
    }

    /// Number of steps the schedule prescribes, if it has a horizon.
    pub fn horizon(&self) -> Option<usize> {
        match self {
            StepsizeSchedule::FixedHorizon { horizon } => Some(*horizon),
            _ => None,
        }
    }

    pub fn is_fixed_horizon(&self) -> bool {
        matches!(self, StepsizeSchedule::FixedHorizon { .. })
    }

    pub fn label(&self) -> String {
        match self {
            StepsizeSchedule::Harmonic { a } => format!("harmonic(a={a})"),
            StepsizeSchedule::Polynomial { a, p } => format!("polynomial(a={a},p={p})"),
            StepsizeSchedule::FixedHorizon { horizon } => format!("fixed-horizon(T={horizon})"),
            StepsizeSchedule::Constant { value } => format!("constant({value})"),
        }
    }
}

/// `alpha(t)` for the given schedule.
pub fn stepsize(schedule: &StepsizeSchedule, t: usize) -> Result<f64> {
    let steps = (t + 1) as f64;
    let alpha = match *schedule {
        StepsizeSchedule::Harmonic { a } => a / steps,
        StepsizeSchedule::Polynomial { a, p } => a / steps.powf(p),
        StepsizeSchedule::FixedHorizon { horizon } => {
            if t >= horizon {
                return Err(Error::PastHorizon { t, horizon });
            }
            1.0 / (horizon as f64).sqrt()
        }
        StepsizeSchedule::Constant { value } => value,
    };
    if !alpha.is_finite() || alpha < 0.0 {
        return Err(Error::InvalidStepsize(alpha));
    }
    Ok(alpha)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", content = "reason", rename_all = "kebab-case")]
pub enum ScheduleVerdict {
    Satisfied,
    Violated(String),
    /// Fixed `1/sqrt(T)` regime, where the square-summability condition does not apply.
    FixedRegime,
}

/// Classification of a schedule against the standard diminishing-stepsize
/// conditions, plus a numerical non-increase check.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScheduleReport {
    pub positive: bool,
    pub non_increasing: bool,
    /// `sum alpha(t) = inf`; `None` when not applicable.
    pub sum_diverges: Option<bool>,
    /// `sum alpha(t)^2 < inf`; `None` when not applicable.
    pub square_summable: Option<bool>,
    pub verdict: ScheduleVerdict,
}

impl ScheduleReport {
    /// True for a diminishing schedule meeting every condition, and for the
    /// fixed-horizon regime.
    pub fn is_clean(&self) -> bool {
        self.positive
            && self.non_increasing
            && !matches!(self.verdict, ScheduleVerdict::Violated(_))
    }
}

pub fn validate_schedule(schedule: &StepsizeSchedule) -> ScheduleReport {
    let checked = schedule
        .horizon()
        .map_or(SPOT_CHECK_STEPS, |h| h.min(SPOT_CHECK_STEPS));
    let values: Vec<f64> = (0..checked)
        .map_while(|t| stepsize(schedule, t).ok())
        .collect();
    let positive = values.len() == checked && values.iter().all(|&a| a > 0.0);
    let non_increasing = values.len() == checked && values.windows(2).all(|w| w[1] <= w[0]);

    let (sum_diverges, square_summable) = match *schedule {
        StepsizeSchedule::Harmonic { .. } => (Some(true), Some(true)),
        // p-series: sum diverges iff p <= 1, squares converge iff 2p > 1.
        StepsizeSchedule::Polynomial { p, .. } => (Some(p <= 1.0), Some(2.0 * p > 1.0)),
        StepsizeSchedule::FixedHorizon { .. } => (None, None),
        StepsizeSchedule::Constant { value } => (Some(value > 0.0), Some(value == 0.0)),
    };

    let verdict = if schedule.is_fixed_horizon() {
        ScheduleVerdict::FixedRegime
    } else if !positive {
        ScheduleVerdict::Violated("stepsize is not positive".into())
    } else if !non_increasing {
        ScheduleVerdict::Violated("stepsize increases".into())
    } else if sum_diverges == Some(false) {
        ScheduleVerdict::Violated("sum of stepsizes converges".into())
    } else if square_summable == Some(false) {
        ScheduleVerdict::Violated("sum of squared stepsizes diverges".into())
    } else {
        ScheduleVerdict::Satisfied
    };
    ScheduleReport {
        positive,
        non_increasing,
        sum_diverges,
        square_summable,
        verdict,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stepsize_examples() {
        let h = StepsizeSchedule::Harmonic { a: 1.0 };
        assert_eq!(stepsize(&h, 0).unwrap(), 1.0);
        assert_eq!(stepsize(&h, 3).unwrap(), 0.25);
        let f = StepsizeSchedule::FixedHorizon { horizon: 100 };
        for t in [0, 50, 99] {
            assert_eq!(stepsize(&f, t).unwrap(), 0.1);
        }
        assert!(matches!(stepsize(&f, 100), Err(Error::PastHorizon { t: 100, horizon: 100 })));
        let p = StepsizeSchedule::Polynomial { a: 2.0, p: 0.5 };
        assert_eq!(stepsize(&p, 3).unwrap(), 1.0);
    }

    #[test]
    fn classification() {
        assert_eq!(
            validate_schedule(&StepsizeSchedule::Harmonic { a: 1.0 }).verdict,
            ScheduleVerdict::Satisfied
        );
        assert_eq!(
            validate_schedule(&StepsizeSchedule::Polynomial { a: 1.0, p: 0.75 }).verdict,
            ScheduleVerdict::Satisfied
        );
        let r = validate_schedule(&StepsizeSchedule::Polynomial { a: 1.0, p: 0.4 });
        assert_eq!(r.square_summable, Some(false));
        assert!(matches!(r.verdict, ScheduleVerdict::Violated(_)));
        let r = validate_schedule(&StepsizeSchedule::Polynomial { a: 1.0, p: 1.5 });
        assert_eq!(r.sum_diverges, Some(false));
        let r = validate_schedule(&StepsizeSchedule::FixedHorizon { horizon: 100 });
        assert_eq!(r.verdict, ScheduleVerdict::FixedRegime);
        assert!(r.is_clean());
        let r = validate_schedule(&StepsizeSchedule::Constant { value: 0.0 });
        assert!(!r.positive && !r.is_clean());
        let r = validate_schedule(&StepsizeSchedule::Polynomial { a: 1.0, p: -0.5 });
        assert!(!r.non_increasing);
        let r = validate_schedule(&StepsizeSchedule::Harmonic { a: -1.0 });
        assert!(!r.positive);
    }
}
