//! Building, running and summarizing a single experiment.

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, GraphSpec, InitialSpec, WeightSpec};
use crate::bounds::{
    bound_fixed, bound_fixed_agent, consensus_bound_series, fit_geometric, timevarying_series, BoundConstants,
    BoundInputs, GeometricFit,
};
use crate::error::{Error, Result};
use crate::graph::{certify_connectivity, generate_sequence, ConnectivityCertificate, GraphSequence};
use crate::pushsum::{theory_constants, Contraction, TheoryConstants};
use crate::subgradient::{
    run_pushsub, validate_schedule, BoxRegion, Objective, Optimum, RunMetadata, RunTrace, ScheduleReport,
};
use crate::weights::{build_weights, parse_weight_blocks, validate_with_tolerance, WeightMatrix, WeightRule, USER_TOLERANCE};

/// RNG stream for seeded initial states; graphs use stream 0.
pub const INITIAL_STREAM: u64 = 1;
/// Relative slack when checking `||g_i(t)|| <= G`.
pub const G_SLACK: f64 = 1e-12;
/// Tolerance on `|sum_i y_i(t) - n|` along a run.
pub const MASS_CHECK: f64 = 1e-9;
/// Tolerance on the Lyapunov recursion along a run.
pub const LYAPUNOV_CHECK: f64 = 1e-9;
/// Negative margins down to this size are rounding noise, not violations.
/// Matters once an envelope decays below the `f64` resolution of the state.
pub const MARGIN_NOISE: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub passed: bool,
    pub detail: String,
}

/// Everything a run needs, resolved from a config.
#[derive(Clone, Debug)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub graphs: GraphSequence,
    /// `W(t)` as given; custom matrices are kept even when they fail validation.
    pub weights: Vec<WeightMatrix>,
    /// Column stochasticity and graph compliance of every `W(t)`.
    pub weights_check: CheckOutcome,
    pub objective: Objective,
    pub x0: DMatrix<f64>,
}

impl Experiment {
    pub fn prepare(config: &ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let graphs = load_graphs(config)?;
        let n = graphs.n();
        if config.objective.terms.len() != n {
            return Err(Error::Config(format!(
                "objective has {} terms for {n} agents",
                config.objective.terms.len()
            )));
        }
        let (weights, weights_check) = load_weights(config, &graphs)?;
        let [lo, hi] = config.objective.region;
        let objective = Objective::new(
            config.dimension,
            config.objective.terms.clone(),
            BoxRegion { lo, hi },
            config.objective.g_bound,
            config.objective.optimum.clone(),
        )?;
        let x0 = initial_state(config, n)?;
        Ok(Self {
            config: config.clone(),
            graphs,
            weights,
            weights_check,
            objective,
            x0,
        })
    }

    pub fn n(&self) -> usize {
        self.graphs.n()
    }

    pub fn metadata(&self) -> RunMetadata {
        RunMetadata {
            seed: self.config.seed,
            graph: self.config.label(),
            schedule: self.config.schedule.clone(),
            n: self.n(),
            d: self.config.dimension,
            optimum: self.objective.optimum().cloned(),
        }
    }

    /// Runs the optimizer. Refuses weights that fail column stochasticity.
    pub fn run(&self) -> Result<RunTrace> {
        if !self.weights_check.passed {
            return Err(Error::Assumption(format!(
                "weights are not column stochastic on the graph: {}",
                self.weights_check.detail
            )));
        }
        run_pushsub(
            &self.weights,
            self.x0.clone(),
            &self.config.schedule,
            &self.objective,
            self.config.steps,
            self.metadata(),
        )
    }
}

fn load_graphs(config: &ExperimentConfig) -> Result<GraphSequence> {
    match (&config.graph, config.graph.generator()) {
        (_, Some((kind, n))) => generate_sequence(&kind, n, config.steps, config.seed),
        (GraphSpec::File { path }, None) => {
            let seq = GraphSequence::from_text(&std::fs::read_to_string(config.resolve(path))?)?;
            if seq.horizon() < config.steps {
                return Err(Error::Config(format!(
                    "graph file has {} steps, config asks for {}",
                    seq.horizon(),
                    config.steps
                )));
            }
            Ok(seq.truncated(config.steps))
        }
        _ => unreachable!("only file sources lack a generator"),
    }
}

fn load_weights(config: &ExperimentConfig, graphs: &GraphSequence) -> Result<(Vec<WeightMatrix>, CheckOutcome)> {
    match &config.weights {
        WeightSpec::UniformOutDegree => {
            let ws = graphs
                .graphs()
                .iter()
                .map(|g| build_weights(g, &WeightRule::UniformOutDegree))
                .collect::<Result<Vec<_>>>()?;
            let outcome = CheckOutcome {
                passed: true,
                detail: "uniform out-degree weights".into(),
            };
            Ok((ws, outcome))
        }
        WeightSpec::Custom { path } => {
            let blocks = parse_weight_blocks(&std::fs::read_to_string(config.resolve(path))?)?;
            if blocks.len() != 1 && blocks.len() < graphs.horizon() {
                return Err(Error::Config(format!(
                    "weights file has {} matrices; need 1 or {}",
                    blocks.len(),
                    graphs.horizon()
                )));
            }
            if blocks[0].nrows() != graphs.n() {
                return Err(Error::Config(format!(
                    "weights are {0}x{0}, graph has {1} vertices",
                    blocks[0].nrows(),
                    graphs.n()
                )));
            }
            let mut problems = Vec::new();
            let mut ws = Vec::with_capacity(graphs.horizon());
            for (t, g) in graphs.graphs().iter().enumerate() {
                let m = &blocks[if blocks.len() == 1 { 0 } else { t }];
                let report = validate_with_tolerance(m, g, f64::MIN_POSITIVE, USER_TOLERANCE);
                if !report.is_clean() && problems.len() < 3 {
                    problems.push(format!("t = {t}: {report}"));
                }
                ws.push(WeightMatrix::from_matrix_unchecked(m.clone()));
            }
            let outcome = CheckOutcome {
                passed: problems.is_empty(),
                detail: if problems.is_empty() {
                    format!("custom weights from {}", path.display())
                } else {
                    problems.join("; ")
                },
            };
            Ok((ws, outcome))
        }
    }
}

/// Seeded draws are taken row by row (agent-major).
pub fn initial_state(config: &ExperimentConfig, n: usize) -> Result<DMatrix<f64>> {
    let d = config.dimension;
    match &config.initial {
        InitialSpec::Uniform { lo, hi } => {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(INITIAL_STREAM);
            let mut x = DMatrix::zeros(n, d);
            for i in 0..n {
                for k in 0..d {
                    x[(i, k)] = rng.random_range(*lo..=*hi);
                }
            }
            Ok(x)
        }
        InitialSpec::Explicit { x } => {
            if x.len() != n || x.iter().any(|r| r.len() != d) {
                return Err(Error::Config(format!("initial x must be {n}x{d}")));
            }
            Ok(DMatrix::from_fn(n, d, |i, k| x[i][k]))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundFamily {
    /// Network running average, diminishing stepsize.
    Network,
    /// Each agent's running average, diminishing stepsize.
    Agent,
    /// Network running average after `T` fixed steps.
    NetworkFixed,
    /// Each agent's running average after `T` fixed steps.
    AgentFixed,
    /// Consensus envelope, general form.
    ConsensusGeneral,
    /// Consensus envelope, form for non-increasing stepsizes.
    ConsensusRefined,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConstantsKind {
    Theory,
    Empirical,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundSummary {
    pub family: BoundFamily,
    pub constants: ConstantsKind,
    pub evaluated: usize,
    #[serde(with = "crate::serde_float")]
    pub min_margin: f64,
    pub at_t: usize,
    pub agent: Option<usize>,
    /// Some right-hand side overflowed.
    pub vacuous: bool,
}

impl BoundSummary {
    fn collect(
        family: BoundFamily,
        constants: ConstantsKind,
        points: impl IntoIterator<Item = (usize, Option<usize>, f64, f64)>,
    ) -> Self {
        let mut s = Self {
            family,
            constants,
            evaluated: 0,
            min_margin: f64::INFINITY,
            at_t: 0,
            agent: None,
            vacuous: false,
        };
        for (t, agent, lhs, rhs) in points {
            s.evaluated += 1;
            s.vacuous |= !rhs.is_finite();
            let margin = rhs - lhs;
            if margin < s.min_margin || s.evaluated == 1 {
                s.min_margin = margin;
                s.at_t = t;
                s.agent = agent;
            }
        }
        s
    }

    pub fn holds(&self) -> bool {
        self.min_margin >= -MARGIN_NOISE
    }
}

/// Per-step bound columns written to the trace; NaN where not evaluated.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundColumns {
    pub lhs: Vec<f64>,
    pub rhs_theory: Vec<f64>,
    pub rhs_empirical: Vec<f64>,
    /// Empirical-constant terms in role order.
    pub terms: Vec<[f64; 4]>,
}

impl BoundColumns {
    fn blank(len: usize) -> Self {
        Self {
            lhs: vec![f64::NAN; len],
            rhs_theory: vec![f64::NAN; len],
            rhs_empirical: vec![f64::NAN; len],
            terms: vec![[f64::NAN; 4]; len],
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BoundEvaluation {
    pub empirical: BoundConstants,
    pub theory: Option<BoundConstants>,
    pub summaries: Vec<BoundSummary>,
    /// Bounds not evaluated, with the reason.
    pub skipped: Vec<String>,
    /// Present when bounds are enabled.
    pub columns: Option<BoundColumns>,
    /// Empirical consensus envelope per step (tightest available form).
    pub envelope: Vec<f64>,
}

/// `f(sum_{s<=t} alpha(s) z_k(s) / sum alpha(s)) - f*` for every `t` and agent `k`.
pub fn agent_gap_history(trace: &RunTrace, objective: &Objective) -> Option<Vec<Vec<f64>>> {
    let opt = objective.optimum()?;
    let (n, d) = (trace.meta.n, trace.meta.d);
    let mut weighted = DMatrix::zeros(n, d);
    let mut plain = DMatrix::zeros(n, d);
    let mut alpha_sum = 0.0;
    let mut out = Vec::with_capacity(trace.len());
    for (t, r) in trace.records.iter().enumerate() {
        weighted += &r.z * r.alpha;
        plain += &r.z;
        alpha_sum += r.alpha;
        let avg = if alpha_sum > 0.0 {
            &weighted / alpha_sum
        } else {
            &plain / (t + 1) as f64
        };
        out.push(
            avg.row_iter()
                .map(|row| clip(objective.value(&row.transpose()) - opt.value))
                .collect(),
        );
    }
    Some(out)
}

fn clip(gap: f64) -> f64 {
    if (-crate::subgradient::optimizer::GAP_NOISE..0.0).contains(&gap) {
        0.0
    } else {
        gap
    }
}

fn base_inputs(exp: &Experiment, trace: &RunTrace, constants: BoundConstants) -> Result<BoundInputs> {
    let first = trace
        .records
        .first()
        .ok_or_else(|| Error::InvalidBoundInputs("empty trace".into()))?;
    let z_star = exp
        .objective
        .optimum()
        .map(|o| DVector::from_column_slice(&o.point))
        .unwrap_or_else(|| first.zbar.clone());
    Ok(BoundInputs {
        n: trace.meta.n,
        d: trace.meta.d,
        g: exp.objective.g_bound(),
        constants,
        zbar0: first.zbar.clone(),
        z0: first.z.clone(),
        z_star,
        x0: first.x.clone(),
        g0: first.subgradients.clone(),
        schedule: trace.meta.schedule.clone(),
        mass_term: exp.config.bounds.mass_term,
    })
}

/// Evaluates every applicable bound with theory and empirical constants.
pub fn evaluate_bounds(
    exp: &Experiment,
    trace: &RunTrace,
    certificate: &ConnectivityCertificate,
    agent_gaps: Option<&[Vec<f64>]>,
) -> Result<BoundEvaluation> {
    let steps = trace.len();
    let empirical = BoundConstants::empirical(trace, &exp.weights);
    let theory = certificate
        .window
        .map(|l| BoundConstants::theory(&theory_constants(trace.meta.n, l)));
    let mut eval = BoundEvaluation {
        empirical,
        theory,
        summaries: Vec::new(),
        skipped: Vec::new(),
        columns: None,
        envelope: vec![f64::NAN; steps],
    };
    if !exp.config.bounds.enabled {
        eval.skipped.push("bounds disabled in config".into());
        return Ok(eval);
    }
    let mut columns = BoundColumns::blank(steps);
    for (t, r) in trace.records.iter().enumerate() {
        columns.lhs[t] = r.gap_running_avg.unwrap_or(f64::NAN);
    }
    let schedule_clean = validate_schedule(&trace.meta.schedule).is_clean();
    let has_optimum = exp.objective.optimum().is_some();
    if !schedule_clean {
        eval.skipped
            .push("stepsize is not positive and non-increasing: time-varying bounds skipped".into());
    }
    if !has_optimum {
        eval.skipped.push("optimum unknown: optimality bounds skipped".into());
    }

    let mut sets = vec![(ConstantsKind::Empirical, empirical)];
    match theory {
        Some(c) => sets.push((ConstantsKind::Theory, c)),
        None => eval
            .skipped
            .push("no connectivity window within the horizon: theory constants unavailable".into()),
    }
    for (kind, constants) in sets {
        let inp = base_inputs(exp, trace, constants)?;
        let mut notes = Vec::new();
        let mut note = |e: Error| notes.push(format!("{kind:?} constants: {e}"));

        match consensus_bound_series(&inp, steps) {
            Ok(env) => {
                let actual = trace.records.iter().map(|r| r.consensus_deviation);
                eval.summaries.push(BoundSummary::collect(
                    BoundFamily::ConsensusGeneral,
                    kind,
                    actual.clone().zip(&env).enumerate().map(|(t, (a, b))| (t, None, a, b.general)),
                ));
                if schedule_clean {
                    eval.summaries.push(BoundSummary::collect(
                        BoundFamily::ConsensusRefined,
                        kind,
                        actual.zip(&env).enumerate().map(|(t, (a, b))| (t, None, a, b.refined)),
                    ));
                }
                if kind == ConstantsKind::Empirical {
                    eval.envelope = env
                        .iter()
                        .map(|b| if schedule_clean { b.general.min(b.refined) } else { b.general })
                        .collect();
                }
            }
            Err(e) => note(e),
        }

        if has_optimum {
            evaluate_optimality(&inp, kind, schedule_clean, steps, agent_gaps, &mut columns, &mut eval.summaries, &mut note);
        }
        eval.skipped.extend(notes);
    }
    eval.columns = Some(columns);
    Ok(eval)
}

#[allow(clippy::too_many_arguments)]
fn evaluate_optimality(
    inp: &BoundInputs,
    kind: ConstantsKind,
    schedule_clean: bool,
    steps: usize,
    agent_gaps: Option<&[Vec<f64>]>,
    columns: &mut BoundColumns,
    summaries: &mut Vec<BoundSummary>,
    note: &mut impl FnMut(Error),
) {
    if schedule_clean {
        match timevarying_series(inp, steps, None) {
            Ok(series) => {
                for (t, b) in series.iter().enumerate() {
                    match kind {
                        ConstantsKind::Empirical => {
                            columns.rhs_empirical[t] = b.rhs();
                            columns.terms[t] = b.0;
                        }
                        ConstantsKind::Theory => columns.rhs_theory[t] = b.rhs(),
                    }
                }
                summaries.push(BoundSummary::collect(
                    BoundFamily::Network,
                    kind,
                    series.iter().enumerate().map(|(t, b)| (t, None, columns.lhs[t], b.rhs())),
                ));
            }
            Err(e) => note(e),
        }
        if let Some(gaps) = agent_gaps {
            let points: Result<Vec<Vec<_>>> = (0..inp.n)
                .map(|k| {
                    timevarying_series(inp, steps, Some(k)).map(|series| {
                        series
                            .iter()
                            .enumerate()
                            .map(|(t, b)| (t, Some(k), gaps[t][k], b.rhs()))
                            .collect()
                    })
                })
                .collect();
            match points {
                Ok(p) => summaries.push(BoundSummary::collect(BoundFamily::Agent, kind, p.into_iter().flatten())),
                Err(e) => note(e),
            }
        }
    }
    if let Some(horizon) = inp.schedule.horizon() {
        let last = steps - 1;
        match bound_fixed(inp, horizon) {
            Ok(b) => summaries.push(BoundSummary::collect(
                BoundFamily::NetworkFixed,
                kind,
                [(last, None, columns.lhs[last], b.rhs())],
            )),
            Err(e) => note(e),
        }
        if let Some(gaps) = agent_gaps {
            let points: Result<Vec<_>> = (0..inp.n)
                .map(|k| bound_fixed_agent(inp, horizon, k).map(|b| (last, Some(k), gaps[last][k], b.rhs())))
                .collect();
            match points {
                Ok(p) => summaries.push(BoundSummary::collect(BoundFamily::AgentFixed, kind, p)),
                Err(e) => note(e),
            }
        }
    }
}

/// Per-run summary; every number can be recomputed from the persisted trace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryReport {
    pub label: String,
    pub seed: u64,
    pub n: usize,
    pub d: usize,
    pub steps: usize,
    pub connectivity: ConnectivityCertificate,
    pub weights_check: CheckOutcome,
    pub schedule_check: ScheduleReport,
    pub g_bound: f64,
    pub max_subgradient_norm: f64,
    pub optimum: Option<Optimum>,
    pub final_gap: Option<f64>,
    pub final_agent_gaps: Option<Vec<f64>>,
    pub final_consensus_error: f64,
    /// Log-linear fit of the consensus error over the second half of the run.
    pub consensus_rate_fit: Option<GeometricFit>,
    pub mass_residual: f64,
    pub min_weight: f64,
    pub lyapunov_residual: f64,
    pub eta_empirical: f64,
    pub mu_empirical: Contraction,
    pub theory: Option<TheoryConstants>,
    pub bounds: Vec<BoundSummary>,
    pub skipped_bounds: Vec<String>,
    /// Connectivity window found, weights valid, `G` honest and `f*` known.
    pub hypotheses_certified: bool,
    pub failures: Vec<String>,
    pub passed: bool,
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub experiment: Experiment,
    pub certificate: ConnectivityCertificate,
    pub trace: RunTrace,
    pub evaluation: BoundEvaluation,
    pub report: SummaryReport,
}

/// Prepares, runs and evaluates one configuration. Nothing is written to disk.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunOutput> {
    let experiment = Experiment::prepare(config)?;
    let trace = experiment.run()?;
    let certificate = certify_connectivity(&experiment.graphs);
    let agent_gaps = agent_gap_history(&trace, &experiment.objective);
    let evaluation = evaluate_bounds(&experiment, &trace, &certificate, agent_gaps.as_deref())?;
    let report = summarize(&experiment, &trace, &certificate, &evaluation, agent_gaps.as_deref());
    Ok(RunOutput {
        experiment,
        certificate,
        trace,
        evaluation,
        report,
    })
}

fn summarize(
    exp: &Experiment,
    trace: &RunTrace,
    certificate: &ConnectivityCertificate,
    eval: &BoundEvaluation,
    agent_gaps: Option<&[Vec<f64>]>,
) -> SummaryReport {
    let n = trace.meta.n;
    let g_bound = exp.objective.g_bound();
    let max_subgradient_norm = trace
        .records
        .iter()
        .flat_map(|r| r.subgradients.row_iter().map(|g| g.norm()).collect::<Vec<_>>())
        .fold(0.0, f64::max);
    let g_honest = max_subgradient_norm <= g_bound * (1.0 + G_SLACK);
    let mass_residual = trace
        .weights_history()
        .iter()
        .map(|y| (y.sum() - n as f64).abs())
        .fold(0.0, f64::max);
    let lyapunov_residual = trace.records.iter().map(|r| r.lyapunov_residual).fold(0.0, f64::max);
    let theory = certificate.window.map(|l| theory_constants(n, l));
    let errors: Vec<f64> = trace.records.iter().map(|r| r.consensus_error).collect();
    let consensus_rate_fit = fit_geometric(&errors, errors.len() / 2..errors.len()).ok();
    let min_weight = trace.min_weight();

    let hypotheses_certified =
        certificate.window.is_some() && exp.weights_check.passed && g_honest && exp.objective.optimum().is_some();
    let mut failures = Vec::new();
    if !g_honest {
        failures.push(format!("subgradient norm {max_subgradient_norm} exceeds G = {g_bound}"));
    }
    if mass_residual > MASS_CHECK {
        failures.push(format!("sum of weights drifted from n by {mass_residual:e}"));
    }
    if lyapunov_residual > LYAPUNOV_CHECK {
        failures.push(format!("Lyapunov recursion residual {lyapunov_residual:e}"));
    }
    if let Some(tc) = theory {
        if min_weight < tc.eta_lb {
            failures.push(format!("min weight {min_weight:e} below the floor {:e}", tc.eta_lb));
        }
    }
    if hypotheses_certified {
        for s in eval.summaries.iter().filter(|s| !s.holds()) {
            failures.push(format!(
                "{:?} bound with {:?} constants: margin {:e} at t = {}{}",
                s.family,
                s.constants,
                s.min_margin,
                s.at_t,
                s.agent.map(|k| format!(", agent {}", k + 1)).unwrap_or_default()
            ));
        }
    }
    SummaryReport {
        label: exp.config.label(),
        seed: exp.config.seed,
        n,
        d: trace.meta.d,
        steps: trace.len(),
        connectivity: *certificate,
        weights_check: exp.weights_check.clone(),
        schedule_check: validate_schedule(&trace.meta.schedule),
        g_bound,
        max_subgradient_norm,
        optimum: exp.objective.optimum().cloned(),
        final_gap: trace.records.last().and_then(|r| r.gap_running_avg),
        final_agent_gaps: agent_gaps.and_then(|g| g.last().cloned()),
        final_consensus_error: errors.last().copied().unwrap_or(0.0),
        consensus_rate_fit,
        mass_residual,
        min_weight,
        lyapunov_residual,
        eta_empirical: eval.empirical.eta,
        mu_empirical: eval.empirical.mu,
        theory,
        bounds: eval.summaries.clone(),
        skipped_bounds: eval.skipped.clone(),
        hypotheses_certified,
        passed: failures.is_empty(),
        failures,
    }
}

pub const TRACE_FILE: &str = "trace.csv";
pub const REPORT_FILE: &str = "report.json";
pub const CONFIG_FILE: &str = "config.toml";

/// Writes the trace, report, resolved config and plots into `dir`.
pub fn write_outputs(out: &RunOutput, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let trace_path = dir.join(TRACE_FILE);
    super::trace_io::export_trace(&out.trace, out.evaluation.columns.as_ref(), &trace_path)?;
    written.push(trace_path);
    let report_path = dir.join(REPORT_FILE);
    let json = serde_json::to_string_pretty(&out.report).map_err(|e| Error::Config(e.to_string()))?;
    std::fs::write(&report_path, json + "\n")?;
    written.push(report_path);
    let config_path = dir.join(CONFIG_FILE);
    std::fs::write(&config_path, out.experiment.config.to_toml()?)?;
    written.push(config_path);
    written.extend(super::plot::render_plots(&out.trace, &out.evaluation, dir)?);
    Ok(written)
}
