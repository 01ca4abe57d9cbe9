//! The push-subgradient iteration and its run trace.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::objective::{Objective, Optimum};
use super::schedule::StepsizeSchedule;
use crate::error::{Error, Result};
use crate::pushsum::{
    absolute_probability, build_s_matrix, check_positive_weights, check_square, consensus_error,
    ratio_state, NetworkState, StochasticFactor,
};
use crate::weights::WeightMatrix;

/// Gaps within this much below zero are reported as 0.
pub const GAP_NOISE: f64 = 1e-12;

/// The next state together with the subgradients used to reach it.
#[derive(Clone, Debug, PartialEq)]
pub struct PushSubStep {
    pub next: NetworkState,
    /// Row `j` is `g_j(t)`, taken at `z_j(t) = x_j(t) / y_j(t)`.
    pub subgradients: DMatrix<f64>,
}

fn subgradients_at(objective: &Objective, z: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if objective.n() != z.nrows() || objective.d() != z.ncols() {
        return Err(Error::Dimension(format!(
            "objective is for {} agents in R^{}, state is {}x{}",
            objective.n(),
            objective.d(),
            z.nrows(),
            z.ncols()
        )));
    }
    let mut g = DMatrix::zeros(z.nrows(), z.ncols());
    for i in 0..z.nrows() {
        let zi = z.row(i).transpose();
        g.set_row(i, &objective.subgradient(i, &zi).transpose());
    }
    Ok(g)
}

/// `x' = W (x - alpha g)`, `y' = W y`: subtract the scaled subgradient first,
/// then mix. With `alpha = 0` this is exactly a push-sum step.
pub fn pushsub_step(
    state: &NetworkState,
    w: &WeightMatrix,
    alpha: f64,
    objective: &Objective,
) -> Result<PushSubStep> {
    if !alpha.is_finite() || alpha < 0.0 {
        return Err(Error::InvalidStepsize(alpha));
    }
    check_square(w.matrix(), state.n(), "weight matrix")?;
    let z = ratio_state(state)?;
    let subgradients = subgradients_at(objective, &z)?;
    let pushed = if alpha == 0.0 {
        w.matrix() * &state.x
    } else {
        w.matrix() * (&state.x - &subgradients * alpha)
    };
    Ok(PushSubStep {
        next: NetworkState {
            t: state.t + 1,
            x: pushed,
            y: w.matrix() * &state.y,
        },
        subgradients,
    })
}

/// Same iteration written on the ratios: `z' = S(t) [z - alpha g / y]`.
/// Returns `(z(t+1), y(t+1))`. Used to cross-check [`pushsub_step`].
pub fn pushsub_step_ratio_form(
    z: &DMatrix<f64>,
    y: &DVector<f64>,
    w: &WeightMatrix,
    alpha: f64,
    objective: &Objective,
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    check_positive_weights(y)?;
    let s = build_s_matrix(w, y)?;
    let mut g = subgradients_at(objective, z)?;
    for (i, mut row) in g.row_iter_mut().enumerate() {
        row *= alpha / y[i];
    }
    Ok((s.matrix() * (z - g), w.matrix() * y))
}

/// Everything recorded at time `t`.
#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord {
    pub t: usize,
    pub alpha: f64,
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub z: DMatrix<f64>,
    pub subgradients: DMatrix<f64>,
    pub zbar: DVector<f64>,
    /// `pi(t)^T z(t)` with `pi(t) = y(t) / n`.
    pub lyapunov: DVector<f64>,
    pub consensus_error: f64,
    /// `sum_{s<=t} alpha(s) zbar(s) / sum_{s<=t} alpha(s)`.
    pub running_avg: DVector<f64>,
    /// `f(running_avg) - f*`, when `f*` is known.
    pub gap_running_avg: Option<f64>,
    /// `max_i ||z_i(t+1) - (1/n) sum_j (x_j(t) - alpha(t) g_j(t))||_2`.
    pub consensus_deviation: f64,
    /// `max_k |<z(t+1)>_k - <z(t)>_k + (alpha(t)/n) sum_i g_ik(t)|`.
    pub lyapunov_residual: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub seed: u64,
    pub graph: String,
    pub schedule: StepsizeSchedule,
    pub n: usize,
    pub d: usize,
    pub optimum: Option<Optimum>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunTrace {
    pub meta: RunMetadata,
    pub records: Vec<StepRecord>,
    /// State after the last recorded step.
    pub final_state: NetworkState,
}

impl RunTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// `min_{i,t} y_i(t)` over every recorded state and the final one.
    pub fn min_weight(&self) -> f64 {
        self.records
            .iter()
            .map(|r| r.y.min())
            .chain(std::iter::once(self.final_state.y.min()))
            .fold(f64::INFINITY, f64::min)
    }

    /// All `y(t)` including the final state.
    pub fn weights_history(&self) -> Vec<DVector<f64>> {
        self.records
            .iter()
            .map(|r| r.y.clone())
            .chain(std::iter::once(self.final_state.y.clone()))
            .collect()
    }
}

fn lyapunov_average(z: &DMatrix<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
    let pi = absolute_probability(y)?;
    Ok(z.tr_mul(&pi))
}

/// Runs `steps` iterations from `x0` (with `y(0) = 1`) using `weights[t]` at step `t`.
///
/// Every ratio `z_i(t)` must stay inside the objective's box, since that is
/// where `G` is certified; the run aborts otherwise.
pub fn run_pushsub(
    weights: &[WeightMatrix],
    x0: DMatrix<f64>,
    schedule: &StepsizeSchedule,
    objective: &Objective,
    steps: usize,
    meta: RunMetadata,
) -> Result<RunTrace> {
    if weights.len() < steps {
        return Err(Error::Dimension(format!(
            "{steps} steps requested but only {} weight matrices",
            weights.len()
        )));
    }
    let n = x0.nrows();
    let region = objective.region();
    let optimum = objective.optimum().cloned();
    let check_box = |z: &DMatrix<f64>, t: usize| -> Result<()> {
        for (agent, row) in z.row_iter().enumerate() {
            if !region.contains(&row.transpose()) {
                return Err(Error::LeftBox {
                    agent,
                    t,
                    detail: format!("z = {:?} outside [{}, {}]", row.iter().collect::<Vec<_>>(), region.lo, region.hi),
                });
            }
        }
        Ok(())
    };

    let mut state = NetworkState::initial(x0);
    let mut z = ratio_state(&state)?;
    let mut lyapunov = lyapunov_average(&z, &state.y)?;
    let mut weighted_sum = DVector::zeros(objective.d());
    let mut plain_sum = DVector::zeros(objective.d());
    let mut alpha_sum = 0.0;
    let mut records = Vec::with_capacity(steps);

    for (t, w) in weights.iter().enumerate().take(steps) {
        check_box(&z, t)?;
        let alpha = schedule.stepsize(t)?;
        let zbar = z.row_mean().transpose();
        weighted_sum += &zbar * alpha;
        plain_sum += &zbar;
        alpha_sum += alpha;
        let running_avg = if alpha_sum > 0.0 {
            &weighted_sum / alpha_sum
        } else {
            &plain_sum / (t + 1) as f64
        };
        let gap_running_avg = optimum
            .as_ref()
            .map(|opt| clip_gap(objective.value(&running_avg) - opt.value));

        let step = pushsub_step(&state, w, alpha, objective)?;
        let next_z = ratio_state(&step.next)?;
        let next_lyapunov = lyapunov_average(&next_z, &step.next.y)?;

        let pushed_mean = (&state.x - &step.subgradients * alpha).row_sum().transpose() / n as f64;
        let consensus_deviation = next_z
            .row_iter()
            .map(|row| (row.transpose() - &pushed_mean).norm())
            .fold(0.0, f64::max);
        let drift = step.subgradients.row_sum().transpose() * (alpha / n as f64);
        let lyapunov_residual = (&next_lyapunov - &lyapunov + drift).amax();

        records.push(StepRecord {
            t,
            alpha,
            x: state.x.clone(),
            y: state.y.clone(),
            consensus_error: consensus_error(&z),
            z,
            subgradients: step.subgradients,
            zbar,
            lyapunov,
            running_avg,
            gap_running_avg,
            consensus_deviation,
            lyapunov_residual,
        });
        state = step.next;
        z = next_z;
        lyapunov = next_lyapunov;
    }
    check_box(&z, steps)?;
    Ok(RunTrace {
        meta,
        records,
        final_state: state,
    })
}

fn clip_gap(gap: f64) -> f64 {
    if (-GAP_NOISE..0.0).contains(&gap) {
        0.0
    } else {
        gap
    }
}

/// `sum_{s<=upto} alpha(s) v(s) / sum_{s<=upto} alpha(s)` where `v` is the
/// network average `zbar` or, with `agent = Some(k)`, agent `k`'s ratio.
/// Falls back to the plain mean when every stepsize in range is zero.
pub fn weighted_running_average(trace: &RunTrace, upto: usize, agent: Option<usize>) -> Result<DVector<f64>> {
    let records = trace
        .records
        .get(..=upto)
        .ok_or_else(|| Error::EmptyRange(format!("t = {upto} beyond a trace of length {}", trace.len())))?;
    if let Some(k) = agent {
        if k >= trace.meta.n {
            return Err(Error::Dimension(format!("agent {k} of {}", trace.meta.n)));
        }
    }
    let sample = |r: &StepRecord| match agent {
        Some(k) => r.z.row(k).transpose(),
        None => r.zbar.clone(),
    };
    let alpha_sum: f64 = records.iter().map(|r| r.alpha).sum();
    let d = trace.meta.d;
    if alpha_sum > 0.0 {
        let total = records
            .iter()
            .fold(DVector::zeros(d), |acc, r| acc + sample(r) * r.alpha);
        Ok(total / alpha_sum)
    } else {
        let total = records.iter().fold(DVector::zeros(d), |acc, r| acc + sample(r));
        Ok(total / records.len() as f64)
    }
}

/// `f(point) - f*`. Float noise just below zero is clipped.
pub fn optimality_gap(objective: &Objective, point: &DVector<f64>) -> Result<f64> {
    let opt = objective.optimum().ok_or(Error::UnknownOptimum)?;
    Ok(clip_gap(objective.value(point) - opt.value))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{generate_sequence, Digraph, GeneratorKind};
    use crate::pushsum::pushsum_step;
    use crate::subgradient::objective::{BoxRegion, LocalObjective};
    use crate::weights::{build_weights, WeightRule};

    const WIDE: BoxRegion = BoxRegion { lo: -20.0, hi: 20.0 };

    fn meta(n: usize, d: usize, schedule: StepsizeSchedule) -> RunMetadata {
        RunMetadata {
            seed: 0,
            graph: "test".into(),
            schedule,
            n,
            d,
            optimum: None,
        }
    }

    fn medians() -> Objective {
        Objective::new(
            1,
            [0.0, 1.0, 2.0].iter().map(|&a| LocalObjective::L1 { center: vec![a] }).collect(),
            WIDE,
            None,
            None,
        )
        .unwrap()
    }

    #[test]
    fn single_agent_gradient_step() {
        let obj = Objective::new(1, vec![LocalObjective::Quadratic { center: vec![0.0] }], WIDE, None, None).unwrap();
        let w = WeightMatrix::from_matrix_unchecked(DMatrix::from_element(1, 1, 1.0));
        let s = NetworkState::initial(DMatrix::from_element(1, 1, 1.0));
        let step = pushsub_step(&s, &w, 0.25, &obj).unwrap();
        assert_eq!(step.next.x[(0, 0)], 0.5);
        assert!(matches!(pushsub_step(&s, &w, -0.1, &obj), Err(Error::InvalidStepsize(_))));
    }

    #[test]
    fn zero_stepsize_is_pushsum_bitwise() {
        let seq = generate_sequence(&"random-walkable".parse().unwrap(), 3, 30, 5).unwrap();
        let obj = medians();
        let mut a = NetworkState::initial(DMatrix::from_column_slice(3, 1, &[-0.0, 2.5, -1.25]));
        let mut b = a.clone();
        for g in seq.graphs() {
            let w = build_weights(g, &WeightRule::UniformOutDegree).unwrap();
            a = pushsub_step(&a, &w, 0.0, &obj).unwrap().next;
            b = pushsum_step(&b, &w).unwrap();
            assert!(a.x.iter().zip(b.x.iter()).all(|(p, q)| p.to_bits() == q.to_bits()));
            assert!(a.y.iter().zip(b.y.iter()).all(|(p, q)| p.to_bits() == q.to_bits()));
        }
    }

    #[test]
    fn medians_on_three_cycle() {
        // Oracle: dense grid minimization of f.
        let obj = medians();
        let mut best = (f64::INFINITY, 0.0);
        for k in -3000..=3000 {
            let z = k as f64 * 1e-3;
            let v = obj.value(&DVector::from_element(1, z));
            if v < best.0 {
                best = (v, z);
            }
        }
        assert_eq!(best.1, 1.0);

        let w = build_weights(&Digraph::cycle(3).unwrap(), &WeightRule::UniformOutDegree).unwrap();
        let schedule = StepsizeSchedule::Harmonic { a: 1.0 };
        let trace = run_pushsub(
            &vec![w; 2000],
            DMatrix::from_column_slice(3, 1, &[5.0, -4.0, 0.0]),
            &schedule,
            &obj,
            2000,
            meta(3, 1, schedule.clone()),
        )
        .unwrap();
        let z = ratio_state(&trace.final_state).unwrap();
        for i in 0..3 {
            assert!((z[(i, 0)] - best.1).abs() <= 0.05, "z_{i} = {}", z[(i, 0)]);
        }
    }

    #[test]
    fn ratio_form_matches_state_form() {
        let seq = generate_sequence(&"random-walkable".parse().unwrap(), 4, 60, 2).unwrap();
        let obj = Objective::new(
            2,
            (0..4)
                .map(|i| LocalObjective::Quadratic { center: vec![i as f64, -(i as f64)] })
                .collect(),
            WIDE,
            None,
            None,
        )
        .unwrap();
        let mut s = NetworkState::initial(DMatrix::from_fn(4, 2, |i, k| (i + 2 * k) as f64 - 3.0));
        for (t, g) in seq.graphs().iter().enumerate() {
            let w = build_weights(g, &WeightRule::UniformOutDegree).unwrap();
            let alpha = 0.3 / (t + 1) as f64;
            let z = ratio_state(&s).unwrap();
            let (z_alt, y_alt) = pushsub_step_ratio_form(&z, &s.y, &w, alpha, &obj).unwrap();
            s = pushsub_step(&s, &w, alpha, &obj).unwrap().next;
            assert!((ratio_state(&s).unwrap() - z_alt).amax() <= 1e-10);
            assert!((&s.y - y_alt).amax() <= 1e-12);
        }
    }

    #[test]
    fn lyapunov_recursion_and_initial_average() {
        let seq = generate_sequence(&GeneratorKind::RotatingArc, 4, 200, 0).unwrap();
        let ws: Vec<_> = seq
            .graphs()
            .iter()
            .map(|g| build_weights(g, &WeightRule::UniformOutDegree).unwrap())
            .collect();
        let obj = Objective::new(
            1,
            [0.0, 1.0, 2.0, 5.0].iter().map(|&a| LocalObjective::L1 { center: vec![a] }).collect(),
            WIDE,
            None,
            None,
        )
        .unwrap();
        let schedule = StepsizeSchedule::Polynomial { a: 0.5, p: 0.75 };
        let trace = run_pushsub(
            &ws,
            DMatrix::from_column_slice(4, 1, &[3.0, -1.0, 4.0, 1.5]),
            &schedule,
            &obj,
            200,
            meta(4, 1, schedule.clone()),
        )
        .unwrap();
        assert_eq!(trace.records[0].lyapunov, trace.records[0].zbar);
        for r in &trace.records {
            assert!(r.lyapunov_residual <= 1e-9, "t = {}: {}", r.t, r.lyapunov_residual);
        }
    }

    #[test]
    fn leaving_the_box_aborts() {
        let obj = Objective::new(
            1,
            vec![LocalObjective::Quadratic { center: vec![0.0] }],
            BoxRegion { lo: -1.0, hi: 1.0 },
            None,
            None,
        )
        .unwrap();
        let w = WeightMatrix::from_matrix_unchecked(DMatrix::from_element(1, 1, 1.0));
        let schedule = StepsizeSchedule::Constant { value: 1.5 };
        let err = run_pushsub(&[w.clone(), w.clone(), w], DMatrix::from_element(1, 1, 0.5), &schedule, &obj, 3, meta(1, 1, schedule.clone()));
        assert!(matches!(err, Err(Error::LeftBox { agent: 0, .. })));
    }

    fn synthetic_trace(zbars: &[f64], alphas: &[f64]) -> RunTrace {
        let records = zbars
            .iter()
            .zip(alphas)
            .enumerate()
            .map(|(t, (&zb, &alpha))| StepRecord {
                t,
                alpha,
                x: DMatrix::from_element(1, 1, zb),
                y: DVector::from_element(1, 1.0),
                z: DMatrix::from_element(1, 1, zb),
                subgradients: DMatrix::zeros(1, 1),
                zbar: DVector::from_element(1, zb),
                lyapunov: DVector::from_element(1, zb),
                consensus_error: 0.0,
                running_avg: DVector::zeros(1),
                gap_running_avg: None,
                consensus_deviation: 0.0,
                lyapunov_residual: 0.0,
            })
            .collect();
        RunTrace {
            meta: meta(1, 1, StepsizeSchedule::Harmonic { a: 1.0 }),
            records,
            final_state: NetworkState::initial(DMatrix::zeros(1, 1)),
        }
    }

    #[test]
    fn running_average_examples() {
        let harmonic = [1.0, 0.5, 1.0 / 3.0];
        let trace = synthetic_trace(&[0.0, 1.0, 2.0], &harmonic);
        let avg = weighted_running_average(&trace, 2, None).unwrap();
        assert!((avg[0] - 7.0 / 11.0).abs() < 1e-15);
        assert_eq!(weighted_running_average(&trace, 2, Some(0)).unwrap(), avg);
        assert!(weighted_running_average(&trace, 3, None).is_err());

        let trace = synthetic_trace(&[4.0; 5], &harmonic.repeat(2)[..5]);
        for t in 0..5 {
            assert_eq!(weighted_running_average(&trace, t, None).unwrap()[0], 4.0);
        }
        let trace = synthetic_trace(&[1.0, 2.0, 6.0], &[0.1; 3]);
        assert!((weighted_running_average(&trace, 2, None).unwrap()[0] - 3.0).abs() < 1e-15);
    }

    #[test]
    fn gap_examples() {
        let obj = medians();
        assert_eq!(optimality_gap(&obj, &DVector::from_element(1, 1.0)).unwrap(), 0.0);
        assert!((optimality_gap(&obj, &DVector::from_element(1, 0.0)).unwrap() - 1.0 / 3.0).abs() < 1e-15);

        // (1/n) sum (z - a_i)^2 - f* = (z - mean a)^2.
        let quad = Objective::new(
            1,
            [1.0, 2.0, 6.0].iter().map(|&a| LocalObjective::Quadratic { center: vec![a] }).collect(),
            WIDE,
            None,
            None,
        )
        .unwrap();
        assert!((optimality_gap(&quad, &DVector::from_element(1, 4.0)).unwrap() - 1.0).abs() < 1e-12);
        assert!((optimality_gap(&quad, &DVector::from_element(1, 0.5)).unwrap() - 6.25).abs() < 1e-12);

        let unknown = Objective::new(
            3,
            vec![LocalObjective::Hinge { label: 1.0, weights: vec![1.0, 1.0, 1.0] }],
            WIDE,
            None,
            None,
        )
        .unwrap();
        assert!(matches!(optimality_gap(&unknown, &DVector::zeros(3)), Err(Error::UnknownOptimum)));
    }
}
