//! Fixed-horizon sweeps and the empirical rate of the gap in `T`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::experiment::run_experiment;
use crate::bounds::{fit_rate, RateFit};
use crate::error::{Error, Result};
use crate::subgradient::StepsizeSchedule;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub horizon: usize,
    /// Gap of the network running average after `T` steps.
    pub final_gap: f64,
    /// Whether the run at this horizon passed its own checks.
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub label: String,
    pub rows: Vec<SweepRow>,
    pub fit: RateFit,
}

impl SweepReport {
    pub fn passed(&self) -> bool {
        self.rows.iter().all(|r| r.passed)
    }
}

/// The config used at horizon `t`: `steps = T` and stepsize `1/sqrt(T)`.
pub fn config_for_horizon(base: &ExperimentConfig, horizon: usize) -> ExperimentConfig {
    let mut c = base.clone();
    c.steps = horizon;
    c.schedule = StepsizeSchedule::FixedHorizon { horizon };
    c
}

/// Runs one fixed-horizon experiment per `T` in parallel and fits
/// `log(gap) ~ a + b log(T)`.
pub fn sweep(base: &ExperimentConfig, horizons: &[usize]) -> Result<SweepReport> {
    if horizons.len() < 3 {
        return Err(Error::TooFewPoints {
            needed: 3,
            got: horizons.len(),
        });
    }
    let rows = horizons
        .par_iter()
        .map(|&horizon| {
            let out = run_experiment(&config_for_horizon(base, horizon))?;
            let final_gap = out.report.final_gap.ok_or(Error::UnknownOptimum)?;
            Ok(SweepRow {
                horizon,
                final_gap,
                passed: out.report.passed,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let points: Vec<(f64, f64)> = rows.iter().map(|r| (r.horizon as f64, r.final_gap)).collect();
    Ok(SweepReport {
        label: base.label(),
        fit: fit_rate(&points)?,
        rows,
    })
}
