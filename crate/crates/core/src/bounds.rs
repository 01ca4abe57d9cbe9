//! Finite-time error bounds for push-subgradient, the consensus envelope,
//! empirical constants and rate fits.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pushsum::{Contraction, TheoryConstants};
use crate::subgradient::{validate_schedule, Objective, RunTrace, StepsizeSchedule};
use crate::weights::WeightMatrix;

/// Entries of a product this close to their row limit count as converged.
pub const PRODUCT_NOISE: f64 = 1e-12;
/// Envelope constant in `|[Phi_W(t+1, s)]_ij - v_i(t)| <= 4 mu^{t-s}`.
pub const ENVELOPE: f64 = 4.0;

/// How the initial-mass factor `M` is evaluated.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MassTerm {
    /// `||sum_i x_i(0) + alpha(0) g_i(0)||_2`.
    #[default]
    AsPrinted,
    /// `sum_i ||x_i(0) - alpha(0) g_i(0)||_2`. Always at least the norm of
    /// the sum, and valid even when `sum_i x_i(0)` cancels.
    SumOfNorms,
}

/// The `(eta, mu)` pair a bound is evaluated with.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundConstants {
    pub eta: f64,
    pub mu: Contraction,
}

impl BoundConstants {
    pub fn theory(c: &TheoryConstants) -> Self {
        Self {
            eta: c.eta_lb,
            mu: c.mu_ub,
        }
    }

    /// `eta = min y_i(t)` over the run and `mu` certified from the products
    /// of the weight matrices it used.
    pub fn empirical(trace: &RunTrace, weights: &[WeightMatrix]) -> Self {
        Self {
            eta: trace.min_weight(),
            mu: certify_contraction(&weights[..trace.len().min(weights.len())]),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BoundInputs {
    pub n: usize,
    pub d: usize,
    pub g: f64,
    pub constants: BoundConstants,
    pub zbar0: DVector<f64>,
    /// Row `i` is `z_i(0)`.
    pub z0: DMatrix<f64>,
    pub z_star: DVector<f64>,
    pub x0: DMatrix<f64>,
    pub g0: DMatrix<f64>,
    pub schedule: StepsizeSchedule,
    pub mass_term: MassTerm,
}

impl BoundInputs {
    pub fn from_run(
        trace: &RunTrace,
        objective: &Objective,
        constants: BoundConstants,
        mass_term: MassTerm,
    ) -> Result<Self> {
        let first = trace
            .records
            .first()
            .ok_or_else(|| Error::InvalidBoundInputs("empty trace".into()))?;
        let z_star = objective.optimum().ok_or(Error::UnknownOptimum)?.point.clone();
        Ok(Self {
            n: trace.meta.n,
            d: trace.meta.d,
            g: objective.g_bound(),
            constants,
            zbar0: first.zbar.clone(),
            z0: first.z.clone(),
            z_star: DVector::from_vec(z_star),
            x0: first.x.clone(),
            g0: first.subgradients.clone(),
            schedule: trace.meta.schedule.clone(),
            mass_term,
        })
    }

    pub fn with_constants(&self, constants: BoundConstants) -> Self {
        Self {
            constants,
            ..self.clone()
        }
    }

    fn validate(&self) -> Result<()> {
        let eta = self.constants.eta;
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(Error::InvalidBoundInputs(format!("eta = {eta} must be positive")));
        }
        if !self.constants.mu.is_contracting() {
            return Err(Error::InvalidBoundInputs(format!(
                "mu = {} must lie in [0, 1)",
                self.constants.mu.mu()
            )));
        }
        if !(self.g >= 0.0 && self.g.is_finite()) {
            return Err(Error::InvalidBoundInputs(format!("G = {}", self.g)));
        }
        let shapes = [
            (self.z0.shape(), "z(0)"),
            (self.x0.shape(), "x(0)"),
            (self.g0.shape(), "g(0)"),
        ];
        for (shape, what) in shapes {
            if shape != (self.n, self.d) {
                return Err(Error::Dimension(format!("{what} is {}x{}, expected {}x{}", shape.0, shape.1, self.n, self.d)));
            }
        }
        if self.zbar0.len() != self.d || self.z_star.len() != self.d {
            return Err(Error::Dimension("zbar(0) and z* must have length d".into()));
        }
        Ok(())
    }

    /// The factor `M` multiplying `mu^t` terms, at stepsize `alpha`.
    pub fn initial_mass(&self, alpha: f64) -> f64 {
        match self.mass_term {
            MassTerm::AsPrinted => (&self.x0 + &self.g0 * alpha).row_sum().norm(),
            MassTerm::SumOfNorms => (&self.x0 - &self.g0 * alpha)
                .row_iter()
                .map(|r| r.norm())
                .sum(),
        }
    }

    /// `sum_i ||zbar(0) - z_i(0)||`.
    fn spread(&self) -> f64 {
        self.z0
            .row_iter()
            .map(|r| (r.transpose() - &self.zbar0).norm())
            .sum()
    }

    /// `sum_i (||zbar(0) - z_i(0)|| + ||z_k(0) - z_i(0)||)`.
    fn agent_spread(&self, k: usize) -> Result<f64> {
        if k >= self.n {
            return Err(Error::Dimension(format!("agent {k} of {}", self.n)));
        }
        let zk = self.z0.row(k);
        Ok(self.spread() + self.z0.row_iter().map(|r| (r - zk).norm()).sum::<f64>())
    }

    fn dist2(&self) -> f64 {
        (&self.zbar0 - &self.z_star).norm_squared()
    }
}

/// The four summands of a bound, in role order:
/// optimization, initial spread, initial mass, consensus.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundTerms(pub [f64; 4]);

impl BoundTerms {
    pub fn rhs(&self) -> f64 {
        self.0.iter().sum()
    }

    /// True when the value is too large to carry information.
    pub fn is_vacuous(&self) -> bool {
        !self.rhs().is_finite()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundEntry {
    pub t: usize,
    pub lhs: f64,
    pub rhs: f64,
    pub terms: BoundTerms,
}

impl BoundEntry {
    pub fn new(t: usize, lhs: f64, terms: BoundTerms) -> Self {
        Self {
            t,
            lhs,
            rhs: terms.rhs(),
            terms,
        }
    }

    pub fn margin(&self) -> f64 {
        self.rhs - self.lhs
    }
}

fn require_clean_schedule(schedule: &StepsizeSchedule) -> Result<()> {
    let report = validate_schedule(schedule);
    if report.is_clean() {
        Ok(())
    } else {
        Err(Error::InvalidBoundInputs(format!(
            "stepsize {} is not positive and non-increasing",
            schedule.label()
        )))
    }
}

/// Time-varying bound at every `t < horizon`; `agent = Some(k)` gives the
/// per-agent variant.
///
/// The sums in the last two terms run to `t - 1` while the denominator runs
/// to `t`, so both terms are 0 at `t = 0`.
pub fn timevarying_series(inp: &BoundInputs, horizon: usize, agent: Option<usize>) -> Result<Vec<BoundTerms>> {
    inp.validate()?;
    require_clean_schedule(&inp.schedule)?;
    let BoundConstants { eta, mu } = inp.constants;
    let (n, g) = (inp.n as f64, inp.g);
    let a0 = inp.schedule.stepsize(0)?;
    let spread_term = match agent {
        None => 2.0 * g * a0 * inp.spread() / n,
        Some(k) => g * a0 * inp.agent_spread(k)? / n,
    };
    let dist2 = inp.dist2();
    let mass_coeff = 32.0 * g / eta * inp.initial_mass(a0);
    let consensus_coeff = 32.0 * n * g * g / (eta * mu.one_minus_mu);

    let mut alphas = Vec::with_capacity(horizon);
    let (mut sum_a, mut sum_a2, mut mass_sum, mut consensus_sum) = (0.0, 0.0, 0.0, 0.0);
    let mut out = Vec::with_capacity(horizon);
    for t in 0..horizon {
        let a = inp.schedule.stepsize(t)?;
        alphas.push(a);
        sum_a += a;
        sum_a2 += a * a;
        out.push(BoundTerms([
            (dist2 + g * g * sum_a2) / (2.0 * sum_a),
            spread_term / sum_a,
            mass_coeff * mass_sum / sum_a,
            consensus_coeff * consensus_sum / sum_a,
        ]));
        let tf = t as f64;
        mass_sum += a * mu.pow(tf);
        consensus_sum += a * (a0 * mu.pow(tf / 2.0) + alphas[t.div_ceil(2)]);
    }
    Ok(out)
}

/// Network-average bound for a diminishing stepsize at time `t`.
pub fn bound_timevarying(inp: &BoundInputs, t: usize) -> Result<BoundTerms> {
    Ok(*timevarying_series(inp, t + 1, None)?.last().expect("nonempty"))
}

/// Bound for agent `k`'s running average at time `t`.
pub fn bound_timevarying_agent(inp: &BoundInputs, t: usize, k: usize) -> Result<BoundTerms> {
    Ok(*timevarying_series(inp, t + 1, Some(k))?.last().expect("nonempty"))
}

fn fixed_terms(inp: &BoundInputs, horizon: usize, agent: Option<usize>) -> Result<BoundTerms> {
    inp.validate()?;
    if inp.schedule != (StepsizeSchedule::FixedHorizon { horizon }) || horizon == 0 {
        return Err(Error::InvalidBoundInputs(format!(
            "fixed-horizon bound at T = {horizon} needs the 1/sqrt(T) schedule with that T, got {}",
            inp.schedule.label()
        )));
    }
    let BoundConstants { eta, mu } = inp.constants;
    let (n, g, tf) = (inp.n as f64, inp.g, horizon as f64);
    let root = tf.sqrt();
    let spread = match agent {
        None => 2.0 * g * inp.spread() / (n * tf),
        Some(k) => g * inp.agent_spread(k)? / (n * tf),
    };
    Ok(BoundTerms([
        (inp.dist2() + g * g) / (2.0 * root),
        spread,
        32.0 * g / (eta * mu.one_minus_mu * tf) * inp.initial_mass(1.0 / root),
        32.0 * n * g * g / (eta * mu.one_minus_mu * root),
    ]))
}

/// Network-average bound for the fixed stepsize `1/sqrt(T)` after `T` steps.
pub fn bound_fixed(inp: &BoundInputs, horizon: usize) -> Result<BoundTerms> {
    fixed_terms(inp, horizon, None)
}

pub fn bound_fixed_agent(inp: &BoundInputs, horizon: usize, k: usize) -> Result<BoundTerms> {
    fixed_terms(inp, horizon, Some(k))
}

/// Both forms of the envelope on `max_i ||z_i(t+1) - (1/n) sum_j (x_j(t) - alpha(t) g_j(t))||`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConsensusBound {
    /// `(8/eta) mu^t M + (8nG/eta) sum_{s=0}^t mu^{t-s} alpha(s)`.
    pub general: f64,
    /// `(8/eta) mu^t M + 8nG/(eta(1-mu)) (alpha(0) mu^{t/2} + alpha(ceil(t/2)))`.
    pub refined: f64,
}

pub fn consensus_bound_series(inp: &BoundInputs, horizon: usize) -> Result<Vec<ConsensusBound>> {
    inp.validate()?;
    let BoundConstants { eta, mu } = inp.constants;
    let (n, g) = (inp.n as f64, inp.g);
    let mut alphas = Vec::with_capacity(horizon);
    let mut out = Vec::with_capacity(horizon);
    let mut discounted = 0.0;
    let mut mass = 0.0;
    for t in 0..horizon {
        let a = inp.schedule.stepsize(t)?;
        alphas.push(a);
        if t == 0 {
            mass = inp.initial_mass(a);
        }
        let tf = t as f64;
        discounted = discounted * mu.pow(1.0) + a;
        let head = 8.0 / eta * mu.pow(tf) * mass;
        out.push(ConsensusBound {
            general: head + 8.0 * n * g / eta * discounted,
            refined: head
                + 8.0 * n * g / (eta * mu.one_minus_mu) * (alphas[0] * mu.pow(tf / 2.0) + alphas[t.div_ceil(2)]),
        });
    }
    Ok(out)
}

pub fn consensus_contraction_bound(inp: &BoundInputs, t: usize) -> Result<ConsensusBound> {
    Ok(*consensus_bound_series(inp, t + 1)?.last().expect("nonempty"))
}

/// Row-wise ranges of `Phi_W(t+1, t-k)` for `k = 0, 1, ...`, stopped once
/// every row has converged to within [`PRODUCT_NOISE`].
struct ProductRanges {
    /// `ranges[k][i] = (min_j, max_j)` of row `i`.
    ranges: Vec<Vec<(f64, f64)>>,
    /// Row ranges of the deepest product computed; later products lie inside them.
    deepest: Vec<(f64, f64)>,
}

impl ProductRanges {
    fn compute(ws: &[WeightMatrix], t: usize) -> Self {
        let n = ws[t].n();
        let row_ranges = |p: &DMatrix<f64>| -> Vec<(f64, f64)> {
            p.row_iter().map(|r| (r.min(), r.max())).collect()
        };
        let mut product = ws[t].matrix().clone();
        let mut ranges = Vec::new();
        loop {
            let rr = row_ranges(&product);
            let converged = rr.iter().all(|&(lo, hi)| hi - lo <= PRODUCT_NOISE);
            ranges.push(rr);
            let k = ranges.len() - 1;
            if converged || k == t {
                break;
            }
            product = &product * ws[t - k - 1].matrix();
        }
        debug_assert!(n > 0);
        let deepest = ranges.last().cloned().unwrap_or_default();
        Self { ranges, deepest }
    }

    /// Some `v` has `|Phi_ij - v_i| <= max(4 rho^k, noise)` at every lag.
    fn feasible(&self, rho: f64) -> bool {
        let mu = Contraction::from_mu(rho);
        (0..self.deepest.len()).all(|i| {
            let (mut lo, mut hi) = self.deepest[i];
            for (k, rr) in self.ranges.iter().enumerate() {
                let r = (ENVELOPE * mu.pow(k as f64)).max(PRODUCT_NOISE);
                lo = lo.max(rr[i].1 - r);
                hi = hi.min(rr[i].0 + r);
            }
            lo <= hi
        })
    }
}

/// Smallest `rho` such that for every `t` some vector `v(t)` satisfies
/// `|[Phi_W(t+1, s)]_ij - v_i(t)| <= max(4 rho^{t-s}, 1e-12)` for all `s <= t`.
///
/// Row ranges of `Phi_W(t+1, s)` shrink as `s` decreases because each extra
/// factor on the right averages every row with column-stochastic weights, so
/// lags beyond the point where all rows have converged impose nothing new.
pub fn certify_contraction(ws: &[WeightMatrix]) -> Contraction {
    if ws.first().is_none_or(|w| w.n() <= 1) {
        return Contraction::from_mu(0.0);
    }
    let mut rho: f64 = 0.0;
    for t in 0..ws.len() {
        let ranges = ProductRanges::compute(ws, t);
        if ranges.feasible(rho) {
            continue;
        }
        let (mut lo, mut hi) = (rho, 1.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if ranges.feasible(mid) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        rho = hi;
    }
    Contraction::from_mu(rho)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    pub points: usize,
}

/// Ordinary least squares of `ys` on `xs`.
pub fn least_squares(xs: &[f64], ys: &[f64]) -> Result<LinearFit> {
    if xs.len() != ys.len() {
        return Err(Error::Dimension(format!("{} x values, {} y values", xs.len(), ys.len())));
    }
    if xs.len() < 2 {
        return Err(Error::TooFewPoints { needed: 2, got: xs.len() });
    }
    let m = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidBoundInputs("all x values coincide".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let r2 = if syy == 0.0 { 1.0 } else { 1.0 - sse / syy };
    Ok(LinearFit {
        slope,
        intercept,
        r2,
        points: xs.len(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "kebab-case")]
pub enum RateFit {
    /// Log-log fit over the positive gaps; `excluded` lists horizons whose gap was not positive.
    Fitted { fit: LinearFit, excluded: Vec<f64> },
    /// Every gap was exactly zero.
    ExactConvergence { excluded: Vec<f64> },
}

impl RateFit {
    pub fn slope(&self) -> Option<f64> {
        match self {
            RateFit::Fitted { fit, .. } => Some(fit.slope),
            RateFit::ExactConvergence { .. } => None,
        }
    }
}

/// Least-squares slope of `log(gap)` against `log(T)`.
pub fn fit_rate(points: &[(f64, f64)]) -> Result<RateFit> {
    if points.len() < 3 {
        return Err(Error::TooFewPoints { needed: 3, got: points.len() });
    }
    let (positive, excluded): (Vec<_>, Vec<_>) = points.iter().partition(|(_, gap)| *gap > 0.0);
    let excluded: Vec<f64> = excluded.into_iter().map(|(t, _)| t).collect();
    if positive.is_empty() {
        return Ok(RateFit::ExactConvergence { excluded });
    }
    if positive.len() < 3 {
        return Err(Error::TooFewPoints { needed: 3, got: positive.len() });
    }
    let xs: Vec<f64> = positive.iter().map(|(t, _)| t.ln()).collect();
    let ys: Vec<f64> = positive.iter().map(|(_, g)| g.ln()).collect();
    Ok(RateFit::Fitted {
        fit: least_squares(&xs, &ys)?,
        excluded,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeometricFit {
    /// `exp(slope)`: the fitted per-step contraction.
    pub rate: f64,
    pub fit: LinearFit,
}

/// Fits `log(err(t)) ~ a + b t` over `t in range`, skipping nonpositive values.
pub fn fit_geometric(errors: &[f64], range: std::ops::Range<usize>) -> Result<GeometricFit> {
    let (xs, ys): (Vec<f64>, Vec<f64>) = errors
        .get(range.clone())
        .ok_or_else(|| Error::EmptyRange(format!("{range:?} of {} values", errors.len())))?
        .iter()
        .enumerate()
        .filter(|(_, &e)| e > 0.0)
        .map(|(k, &e)| ((range.start + k) as f64, e.ln()))
        .unzip();
    let fit = least_squares(&xs, &ys)?;
    Ok(GeometricFit {
        rate: fit.slope.exp(),
        fit,
    })
}
