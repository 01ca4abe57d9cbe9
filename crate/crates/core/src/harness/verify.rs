//! Numerical self-checks over a short horizon.

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::experiment::{Experiment, G_SLACK, LYAPUNOV_CHECK, MASS_CHECK};
use crate::error::Result;
use crate::graph::certify_connectivity;
use crate::pushsum::{build_s_matrix, product_identity_sweep, theory_constants, AbsProbSeq, SMatrix};
use crate::subgradient::{pushsub_step_ratio_form, StepsizeSchedule};

/// Longest horizon `verify` simulates.
pub const VERIFY_HORIZON: usize = 100;
pub const PRODUCT_GAP: usize = 50;
pub const PRODUCT_TOL: f64 = 1e-9;
pub const RECURSION_TOL: f64 = 1e-10;
pub const STOCHASTIC_TOL: f64 = 1e-12;
pub const RATIO_FORM_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckStatus {
    Pass,
    Fail,
    Skipped,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedCheck {
    pub name: String,
    pub status: CheckStatus,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub label: String,
    pub horizon: usize,
    pub checks: Vec<NamedCheck>,
    pub passed: bool,
}

struct Checks(Vec<NamedCheck>);

impl Checks {
    fn record(&mut self, name: &str, ok: bool, detail: String) {
        let status = if ok { CheckStatus::Pass } else { CheckStatus::Fail };
        self.0.push(NamedCheck {
            name: name.into(),
            status,
            detail,
        });
    }

    fn skip(&mut self, name: &str, why: &str) {
        self.0.push(NamedCheck {
            name: name.into(),
            status: CheckStatus::Skipped,
            detail: why.into(),
        });
    }
}

const DOWNSTREAM: [&str; 9] = [
    "mass-conservation",
    "weight-floor",
    "product-identity",
    "abs-prob-recursion",
    "abs-prob-stochastic",
    "s-row-stochastic",
    "lyapunov-recursion",
    "ratio-form",
    "subgradient-bound",
];

/// Runs the config for `min(steps, 100)` steps and checks the algebraic
/// identities the analysis relies on. Weight violations skip everything
/// that needs a run.
pub fn verify(config: &ExperimentConfig) -> Result<VerifyReport> {
    let horizon = config.steps.min(VERIFY_HORIZON);
    let mut short = config.clone();
    short.steps = horizon;
    if short.schedule.is_fixed_horizon() {
        short.schedule = StepsizeSchedule::FixedHorizon { horizon };
    }
    let exp = Experiment::prepare(&short)?;
    let n = exp.n();
    let mut checks = Checks(Vec::new());

    checks.record("weights", exp.weights_check.passed, exp.weights_check.detail.clone());
    let certificate = certify_connectivity(&exp.graphs);
    checks.record(
        "connectivity",
        certificate.window.is_some(),
        match certificate.window {
            Some(l) => format!("every window of length {l} is strongly connected"),
            None => format!("no connectivity window within {horizon} steps"),
        },
    );
    if !exp.weights_check.passed {
        for name in DOWNSTREAM {
            checks.skip(name, "weights failed validation");
        }
        return Ok(finish(config, horizon, checks));
    }

    let trace = exp.run()?;
    let ys = trace.weights_history();
    let mass = ys.iter().map(|y| (y.sum() - n as f64).abs()).fold(0.0, f64::max);
    checks.record("mass-conservation", mass <= MASS_CHECK, format!("max |sum y - n| = {mass:e}"));

    let min_y = trace.min_weight();
    match certificate.window {
        Some(l) => {
            let floor = theory_constants(n, l).eta_lb;
            checks.record("weight-floor", min_y >= floor, format!("min y = {min_y:e}, floor = {floor:e}"));
        }
        None => checks.skip("weight-floor", "no connectivity window"),
    }

    let ss: Vec<SMatrix> = exp
        .weights
        .iter()
        .zip(&ys)
        .map(|(w, y)| build_s_matrix(w, y))
        .collect::<Result<_>>()?;
    let identity = product_identity_sweep(&exp.weights, &ss, &ys, PRODUCT_GAP)?;
    checks.record(
        "product-identity",
        identity <= PRODUCT_TOL,
        format!("max residual {identity:e} over gaps up to {PRODUCT_GAP}"),
    );

    let mut pis = AbsProbSeq::new();
    for y in &ys {
        pis.push_weights(y)?;
    }
    let recursion = pis.recursion_residual(&ss);
    checks.record(
        "abs-prob-recursion",
        recursion <= RECURSION_TOL,
        format!("max residual {recursion:e}"),
    );
    let (sum_err, negative) = pis.stochasticity_residual();
    checks.record(
        "abs-prob-stochastic",
        sum_err <= STOCHASTIC_TOL && !negative,
        format!("max |sum pi - 1| = {sum_err:e}, negative entries: {negative}"),
    );

    let row_err = ss
        .iter()
        .flat_map(|s| {
            let m = s.clone().into_matrix();
            let negative = m.iter().any(|&v| v < 0.0);
            m.row_iter()
                .map(move |r| if negative { f64::INFINITY } else { (r.sum() - 1.0).abs() })
                .collect::<Vec<_>>()
        })
        .fold(0.0, f64::max);
    checks.record(
        "s-row-stochastic",
        row_err <= STOCHASTIC_TOL,
        format!("max |row sum - 1| = {row_err:e}"),
    );

    let lyap = trace.records.iter().map(|r| r.lyapunov_residual).fold(0.0, f64::max);
    checks.record(
        "lyapunov-recursion",
        lyap <= LYAPUNOV_CHECK,
        format!("max residual {lyap:e}"),
    );

    let mut ratio = 0.0f64;
    for (t, r) in trace.records.iter().enumerate() {
        let (z_next, _) = pushsub_step_ratio_form(&r.z, &r.y, &exp.weights[t], r.alpha, &exp.objective)?;
        let reference = match trace.records.get(t + 1) {
            Some(next) => next.z.clone(),
            None => trace.final_state.ratios()?,
        };
        let scale = 1.0 + reference.amax();
        ratio = ratio.max((z_next - reference).amax() / scale);
    }
    checks.record(
        "ratio-form",
        ratio <= RATIO_FORM_TOL,
        format!("max relative difference {ratio:e}"),
    );

    let g = exp.objective.g_bound();
    let max_g = trace
        .records
        .iter()
        .flat_map(|r| r.subgradients.row_iter().map(|row| row.norm()).collect::<Vec<_>>())
        .fold(0.0, f64::max);
    checks.record(
        "subgradient-bound",
        max_g <= g * (1.0 + G_SLACK),
        format!("max ||g|| = {max_g}, G = {g}"),
    );

    Ok(finish(config, horizon, checks))
}

fn finish(config: &ExperimentConfig, horizon: usize, checks: Checks) -> VerifyReport {
    let passed = checks.0.iter().all(|c| c.status != CheckStatus::Fail);
    VerifyReport {
        label: config.label(),
        horizon,
        checks: checks.0,
        passed,
    }
}
