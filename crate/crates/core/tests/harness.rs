use std::path::Path;

use pushsum_core::bounds::RateFit;
use pushsum_core::harness::audit::audit_dir;
use pushsum_core::harness::config::{GraphSpec, InitialSpec, WeightSpec};
use pushsum_core::harness::experiment::{REPORT_FILE, TRACE_FILE};
use pushsum_core::harness::plot::{render_plots, PLOT_FILES};
use pushsum_core::harness::trace_io::{import_trace, trace_header};
use pushsum_core::harness::{run_experiment, sweep, verify, write_outputs, CheckStatus, ExperimentConfig};
use pushsum_core::subgradient::{LocalObjective, StepsizeSchedule};
use pushsum_core::Error;
use sha2::{Digest, Sha256};

const THREE_AGENTS: &str = r#"
seed = 5
steps = 200
dimension = 1

[graph]
kind = "random-walkable"
n = 3

[objective]
box = [-10.0, 10.0]
terms = [
  { kind = "l1", center = [-1.0] },
  { kind = "quadratic", center = [0.5] },
  { kind = "l1", center = [2.0] },
]

[schedule]
kind = "harmonic"
a = 0.5

[initial]
kind = "uniform"
lo = -3.0
hi = 3.0
"#;

fn config() -> ExperimentConfig {
    ExperimentConfig::from_toml(THREE_AGENTS).unwrap()
}

fn single_agent(steps: usize, schedule: StepsizeSchedule) -> ExperimentConfig {
    let mut c = config();
    c.steps = steps;
    c.schedule = schedule;
    c.graph = GraphSpec::StaticCycle { n: 1 };
    c.objective.terms = vec![LocalObjective::Quadratic { center: vec![1.0] }];
    c
}

fn sha(path: &Path) -> Vec<u8> {
    Sha256::digest(std::fs::read(path).unwrap()).to_vec()
}

#[test]
fn trace_round_trip_is_bitwise() {
    let out = run_experiment(&config()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_outputs(&out, dir.path()).unwrap();
    let table = import_trace(&dir.path().join(TRACE_FILE)).unwrap();
    assert_eq!(table.len(), out.trace.len());
    for (t, r) in out.trace.records.iter().enumerate() {
        assert_eq!(table.alpha[t].to_bits(), r.alpha.to_bits());
        assert_eq!(table.z[t], r.z);
        assert_eq!(table.zbar[t], r.zbar);
        assert_eq!(table.lyapunov[t], r.lyapunov);
        assert_eq!(table.consensus_err[t].to_bits(), r.consensus_error.to_bits());
        assert_eq!(table.gap[t].to_bits(), r.gap_running_avg.unwrap().to_bits());
    }
    let cols = out.evaluation.columns.as_ref().unwrap();
    let back = table.bounds.as_ref().unwrap();
    assert_eq!(back.rhs_empirical.len(), cols.rhs_empirical.len());
    for t in 0..table.len() {
        assert_eq!(back.rhs_empirical[t].to_bits(), cols.rhs_empirical[t].to_bits());
        assert_eq!(back.terms[t].map(f64::to_bits), cols.terms[t].map(f64::to_bits));
    }
}

#[test]
fn column_count_follows_schema() {
    for (n, d, bounds) in [(1, 1, false), (3, 2, false), (4, 3, true)] {
        let extra = if bounds { 7 } else { 0 };
        assert_eq!(trace_header(n, d, bounds).len(), 2 + d * (n + 2) + 2 + extra);
    }
    let dir = tempfile::tempdir().unwrap();
    let out = run_experiment(&config()).unwrap();
    write_outputs(&out, dir.path()).unwrap();
    let text = std::fs::read_to_string(dir.path().join(TRACE_FILE)).unwrap();
    let header = text.lines().next().unwrap();
    assert_eq!(header.split(',').count(), 2 + (3 + 2) + 2 + 7);
}

#[test]
fn three_step_single_agent_trace_has_four_lines() {
    let mut c = single_agent(3, StepsizeSchedule::Harmonic { a: 0.1 });
    c.bounds.enabled = false;
    let out = run_experiment(&c).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_outputs(&out, dir.path()).unwrap();
    let text = std::fs::read_to_string(dir.path().join(TRACE_FILE)).unwrap();
    assert_eq!(text.lines().count(), 4);
}

#[test]
fn identical_configs_give_identical_files() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    write_outputs(&run_experiment(&config()).unwrap(), a.path()).unwrap();
    write_outputs(&run_experiment(&config()).unwrap(), b.path()).unwrap();
    for name in [TRACE_FILE, REPORT_FILE] {
        assert_eq!(sha(&a.path().join(name)), sha(&b.path().join(name)), "{name}");
    }
    let mut other = config();
    other.seed += 1;
    let c = tempfile::tempdir().unwrap();
    write_outputs(&run_experiment(&other).unwrap(), c.path()).unwrap();
    assert_ne!(sha(&a.path().join(TRACE_FILE)), sha(&c.path().join(TRACE_FILE)));
}

#[test]
fn report_is_recomputable_from_trace() {
    let out = run_experiment(&config()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_outputs(&out, dir.path()).unwrap();
    let audit = audit_dir(dir.path()).unwrap();
    assert!(audit.passed, "{audit:?}");
    assert!(audit.items.iter().any(|i| i.name.starts_with("network_margin")));
    assert!(audit.items.iter().any(|i| i.name.starts_with("final_agent_gap")));

    let path = dir.path().join(REPORT_FILE);
    let mut json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    json["final_gap"] = serde_json::json!(out.report.final_gap.unwrap() * 1.5 + 1e-6);
    std::fs::write(&path, json.to_string()).unwrap();
    assert!(!audit_dir(dir.path()).unwrap().passed);
}

#[test]
fn three_plots_are_written() {
    let out = run_experiment(&config()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let files = render_plots(&out.trace, &out.evaluation, dir.path()).unwrap();
    let names: Vec<_> = files.iter().map(|p| p.file_name().unwrap().to_str().unwrap()).collect();
    assert_eq!(names, PLOT_FILES);
    for f in &files {
        let svg = std::fs::read_to_string(f).unwrap();
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert!(svg.contains("<polyline"));
    }
    let mut empty = out.trace.clone();
    empty.records.clear();
    assert!(render_plots(&empty, &out.evaluation, dir.path()).is_err());
}

#[test]
fn single_agent_fixed_horizon_meets_classic_bound() {
    let c = single_agent(100, StepsizeSchedule::FixedHorizon { horizon: 100 });
    let out = run_experiment(&c).unwrap();
    let z0 = out.trace.records[0].z[(0, 0)];
    let g = out.report.g_bound;
    let bound = ((z0 - 1.0).powi(2) + g * g) / (2.0 * 10.0);
    assert!(out.report.final_gap.unwrap() <= bound);
    assert!(out.report.passed, "{:?}", out.report.failures);
}

#[test]
fn zero_stepsize_is_averaging() {
    let mut c = config();
    c.schedule = StepsizeSchedule::Constant { value: 0.0 };
    c.steps = 300;
    let x = vec![vec![3.0], vec![-1.0], vec![4.0]];
    c.initial = InitialSpec::Explicit { x };
    let out = run_experiment(&c).unwrap();
    let z = &out.trace.final_state.ratios().unwrap();
    for i in 0..3 {
        assert!((z[(i, 0)] - 2.0).abs() < 1e-9, "{}", z[(i, 0)]);
    }
    assert!(out.evaluation.skipped.iter().any(|s| s.contains("time-varying")));
}

#[test]
fn l1_median_run_satisfies_fixed_horizon_bounds() {
    let mut c = ExperimentConfig::load(Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/l1_median.toml"))).unwrap();
    c.steps = 400;
    c.schedule = StepsizeSchedule::FixedHorizon { horizon: 400 };
    let out = run_experiment(&c).unwrap();
    assert!(out.report.hypotheses_certified);
    let fixed: Vec<_> = out
        .report
        .bounds
        .iter()
        .filter(|b| b.constants == pushsum_core::harness::ConstantsKind::Empirical)
        .collect();
    assert!(fixed.len() >= 4);
    assert!(fixed.iter().all(|b| b.holds()), "{fixed:?}");
}

#[test]
fn verify_default_passes() {
    let report = verify(&config()).unwrap();
    assert!(report.passed, "{report:?}");
    assert_eq!(report.horizon, 100);
    assert!(report.checks.iter().all(|c| c.status == CheckStatus::Pass), "{report:?}");
}

#[test]
fn verify_single_agent_passes() {
    let report = verify(&single_agent(20, StepsizeSchedule::Harmonic { a: 0.1 })).unwrap();
    assert!(report.passed, "{report:?}");
    assert_eq!(report.horizon, 20);
}

#[test]
fn corrupted_weights_fail_and_skip_downstream() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("w.txt"), "0.5 0.5 0\n0.5 0.5 0.5\n0 0 0.5\n").unwrap();
    let mut c = config();
    c.graph = GraphSpec::StaticCycle { n: 3 };
    c.weights = WeightSpec::Custom { path: "w.txt".into() };
    c.base_dir = Some(dir.path().to_path_buf());
    let report = verify(&c).unwrap();
    assert!(!report.passed);
    assert_eq!(report.checks[0].status, CheckStatus::Fail);
    let skipped = report.checks.iter().filter(|c| c.status == CheckStatus::Skipped).count();
    assert_eq!(skipped, report.checks.len() - 2);
    assert!(matches!(run_experiment(&c), Err(Error::Assumption(_))));
}

#[test]
fn graph_and_weight_files_resolve_relative_to_config() {
    let dir = tempfile::tempdir().unwrap();
    let generated = run_experiment(&config()).unwrap();
    std::fs::write(dir.path().join("graphs.txt"), generated.experiment.graphs.to_text()).unwrap();
    let mut c = config();
    c.graph = GraphSpec::File { path: "graphs.txt".into() };
    let text = c.to_toml().unwrap();
    let path = dir.path().join("exp.toml");
    std::fs::write(&path, text).unwrap();
    let loaded = ExperimentConfig::load(&path).unwrap();
    let out = run_experiment(&loaded).unwrap();
    assert_eq!(out.trace.records.last().unwrap().z, generated.trace.records.last().unwrap().z);
}

#[test]
fn sweep_needs_three_horizons() {
    assert!(matches!(
        sweep(&config(), &[100, 200]),
        Err(Error::TooFewPoints { needed: 3, got: 2 })
    ));
}

#[test]
fn zero_objective_sweep_is_exact() {
    let mut c = config();
    c.objective.terms = vec![LocalObjective::Zero; 3];
    let report = sweep(&c, &[50, 100, 200]).unwrap();
    assert!(matches!(report.fit, RateFit::ExactConvergence { .. }), "{:?}", report.fit);
    assert!(report.rows.iter().all(|r| r.final_gap == 0.0));
}

#[test]
fn single_agent_quadratic_sweep_decays_fast() {
    let c = single_agent(100, StepsizeSchedule::FixedHorizon { horizon: 100 });
    let report = sweep(&c, &[100, 400, 1600, 6400]).unwrap();
    let slope = report.fit.slope().unwrap();
    assert!(slope <= -0.4, "slope {slope}");
}
