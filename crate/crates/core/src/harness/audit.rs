//! Recomputes a saved report from its trace and config.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::experiment::{BoundFamily, ConstantsKind, SummaryReport, CONFIG_FILE, REPORT_FILE, TRACE_FILE};
use super::trace_io::{import_trace, TraceTable};
use crate::error::{Error, Result};
use crate::pushsum::consensus_error;
use crate::subgradient::{BoxRegion, Objective};

/// Largest difference accepted between a stored and a recomputed value.
pub const AUDIT_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditItem {
    pub name: String,
    pub stored: f64,
    pub recomputed: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub items: Vec<AuditItem>,
    pub passed: bool,
}

fn same(a: f64, b: f64) -> bool {
    (a.is_nan() && b.is_nan()) || a == b || (a - b).abs() <= AUDIT_TOL
}

/// Loads `trace.csv`, `report.json` and `config.toml` from `dir` and checks
/// the report against values recomputed from the trace.
pub fn audit_dir(dir: &Path) -> Result<AuditReport> {
    let table = import_trace(&dir.join(TRACE_FILE))?;
    let text = std::fs::read_to_string(dir.join(REPORT_FILE))?;
    let report: SummaryReport =
        serde_json::from_str(&text).map_err(|e| Error::Parse { line: e.line(), msg: e.to_string() })?;
    let config = ExperimentConfig::from_toml(&std::fs::read_to_string(dir.join(CONFIG_FILE))?)?;
    audit(&table, &report, &config)
}

pub fn audit(table: &TraceTable, report: &SummaryReport, config: &ExperimentConfig) -> Result<AuditReport> {
    if table.is_empty() {
        return Err(Error::EmptyRange("trace has no rows".into()));
    }
    let last = table.len() - 1;
    let mut items = Vec::new();
    let mut push = |name: String, stored: f64, recomputed: f64| {
        items.push(AuditItem {
            passed: same(stored, recomputed),
            name,
            stored,
            recomputed,
        })
    };
    push("steps".into(), report.steps as f64, table.len() as f64);
    push(
        "final_consensus_error".into(),
        report.final_consensus_error,
        consensus_error(&table.z[last]),
    );
    if let Some(gap) = report.final_gap {
        push("final_gap".into(), gap, table.gap[last]);
    }
    if let Some(stored) = &report.final_agent_gaps {
        let recomputed = agent_gaps(table, config)?;
        for (k, (&a, &b)) in stored.iter().zip(&recomputed).enumerate() {
            push(format!("final_agent_gap[{}]", k + 1), a, b);
        }
    }
    if let Some(cols) = &table.bounds {
        for s in report
            .bounds
            .iter()
            .filter(|s| s.family == BoundFamily::Network && s.evaluated > 0)
        {
            let rhs = match s.constants {
                ConstantsKind::Empirical => &cols.rhs_empirical,
                ConstantsKind::Theory => &cols.rhs_theory,
            };
            let margin = rhs
                .iter()
                .zip(&cols.lhs)
                .map(|(r, l)| r - l)
                .fold(f64::INFINITY, f64::min);
            push(format!("network_margin[{:?}]", s.constants), s.min_margin, margin);
        }
    }
    let passed = items.iter().all(|i| i.passed);
    Ok(AuditReport { items, passed })
}

/// Final per-agent gaps of the stepsize-weighted running averages.
fn agent_gaps(table: &TraceTable, config: &ExperimentConfig) -> Result<Vec<f64>> {
    let [lo, hi] = config.objective.region;
    let objective = Objective::new(
        config.dimension,
        config.objective.terms.clone(),
        BoxRegion { lo, hi },
        config.objective.g_bound,
        config.objective.optimum.clone(),
    )?;
    let f_star = objective.optimum().ok_or(Error::UnknownOptimum)?.value;
    let mut weighted = DMatrix::zeros(table.n, table.d);
    let mut plain = DMatrix::zeros(table.n, table.d);
    let mut alpha_sum = 0.0;
    for (z, &alpha) in table.z.iter().zip(&table.alpha) {
        weighted += z * alpha;
        plain += z;
        alpha_sum += alpha;
    }
    let avg = if alpha_sum > 0.0 {
        weighted / alpha_sum
    } else {
        plain / table.len() as f64
    };
    Ok(avg
        .row_iter()
        .map(|row| {
            let gap = objective.value(&row.transpose()) - f_star;
            if (-crate::subgradient::optimizer::GAP_NOISE..0.0).contains(&gap) {
                0.0
            } else {
                gap
            }
        })
        .collect())
}
