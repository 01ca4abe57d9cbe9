//! Distributed subgradient optimization on top of push-sum.

pub mod objective;
pub mod optimizer;
pub mod schedule;

pub use objective::{grid_minimize, BoxRegion, LocalObjective, Objective, Optimum, OptimumSource};
pub use optimizer::{
    optimality_gap, pushsub_step, pushsub_step_ratio_form, run_pushsub, weighted_running_average,
    PushSubStep, RunMetadata, RunTrace, StepRecord,
};
pub use schedule::{stepsize, validate_schedule, ScheduleVerdict, ScheduleReport, StepsizeSchedule};
