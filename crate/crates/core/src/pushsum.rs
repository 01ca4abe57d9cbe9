//! Push-sum dynamics, the companion row-stochastic matrices `S(t)`,
//! transition-matrix products and the absolute probability sequence
//! `pi(t) = y(t) / n`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::weights::WeightMatrix;

/// `y_i` at or below this is treated as a broken run.
pub const WEIGHT_FLOOR: f64 = 1e-300;
/// Allowed drift of `sum_i y_i` away from `n` before [`absolute_probability`] refuses.
pub const MASS_TOLERANCE: f64 = 1e-6;

/// Agent numerators `x` (one row per agent, `d` columns) and scalar weights `y`.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkState {
    pub t: usize,
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
}

impl NetworkState {
    /// Time 0 with the given numerators and `y = 1`.
    pub fn initial(x: DMatrix<f64>) -> Self {
        let n = x.nrows();
        Self {
            t: 0,
            x,
            y: DVector::from_element(n, 1.0),
        }
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn d(&self) -> usize {
        self.x.ncols()
    }

    pub fn ratios(&self) -> Result<DMatrix<f64>> {
        ratio_state(self)
    }
}

pub(crate) fn check_square(w: &DMatrix<f64>, n: usize, what: &str) -> Result<()> {
    if w.nrows() != n || w.ncols() != n {
        return Err(Error::Dimension(format!(
            "{what} is {}x{}, state has {n} agents",
            w.nrows(),
            w.ncols()
        )));
    }
    Ok(())
}

pub(crate) fn check_positive_weights(y: &DVector<f64>) -> Result<()> {
    match y.iter().position(|&v| !(v > WEIGHT_FLOOR)) {
        Some(agent) => Err(Error::DegenerateWeight {
            agent,
            value: y[agent],
        }),
        None => Ok(()),
    }
}

/// One push-sum round: `x' = W x`, `y' = W y`.
pub fn pushsum_step(state: &NetworkState, w: &WeightMatrix) -> Result<NetworkState> {
    check_square(w.matrix(), state.n(), "weight matrix")?;
    if state.y.len() != state.n() {
        return Err(Error::Dimension("x and y disagree on agent count".into()));
    }
    check_positive_weights(&state.y)?;
    Ok(NetworkState {
        t: state.t + 1,
        x: w.matrix() * &state.x,
        y: w.matrix() * &state.y,
    })
}

/// `z_i = x_i / y_i`, one row per agent.
pub fn ratio_state(state: &NetworkState) -> Result<DMatrix<f64>> {
    check_positive_weights(&state.y)?;
    let mut z = state.x.clone();
    for (i, mut row) in z.row_iter_mut().enumerate() {
        row /= state.y[i];
    }
    Ok(z)
}

/// Anything that can be chained into a transition product.
pub trait StochasticFactor {
    fn matrix(&self) -> &DMatrix<f64>;
}

impl StochasticFactor for WeightMatrix {
    fn matrix(&self) -> &DMatrix<f64> {
        WeightMatrix::matrix(self)
    }
}

impl StochasticFactor for DMatrix<f64> {
    fn matrix(&self) -> &DMatrix<f64> {
        self
    }
}

/// Row-stochastic `S(t)` with `s_ij = w_ij y_j / sum_k w_ik y_k`.
#[derive(Clone, Debug, PartialEq)]
pub struct SMatrix {
    entries: DMatrix<f64>,
    gamma: f64,
}

impl SMatrix {
    pub fn n(&self) -> usize {
        self.entries.nrows()
    }

    /// Smallest positive entry.
    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.entries
    }
}

impl StochasticFactor for SMatrix {
    fn matrix(&self) -> &DMatrix<f64> {
        &self.entries
    }
}

/// Builds `S(t)` from `W(t)` and `y(t)`; it does not depend on `x`.
pub fn build_s_matrix(w: &WeightMatrix, y: &DVector<f64>) -> Result<SMatrix> {
    let n = y.len();
    check_square(w.matrix(), n, "weight matrix")?;
    check_positive_weights(y)?;
    let mut entries = DMatrix::zeros(n, n);
    for i in 0..n {
        let denominator: f64 = (0..n).map(|k| w.matrix()[(i, k)] * y[k]).sum();
        if !(denominator > 0.0) {
            return Err(Error::DegenerateWeight {
                agent: i,
                value: denominator,
            });
        }
        for j in 0..n {
            entries[(i, j)] = w.matrix()[(i, j)] * y[j] / denominator;
        }
    }
    let gamma = entries
        .iter()
        .copied()
        .filter(|&v| v > 0.0)
        .fold(f64::INFINITY, f64::min);
    Ok(SMatrix { entries, gamma })
}

/// `M(t-1) ... M(tau)`, accumulated by left-multiplying the newest factor.
pub fn transition_product<F: StochasticFactor>(factors: &[F], tau: usize, t: usize) -> Result<DMatrix<f64>> {
    if tau >= t {
        return Err(Error::EmptyRange(format!("product needs tau < t, got tau = {tau}, t = {t}")));
    }
    if t > factors.len() {
        return Err(Error::EmptyRange(format!(
            "product up to t = {t} but only {} factors available",
            factors.len()
        )));
    }
    let mut product = factors[tau].matrix().clone();
    for factor in &factors[tau + 1..t] {
        product = factor.matrix() * &product;
    }
    Ok(product)
}

/// `Phi_W(t, tau) = W(t-1) ... W(tau)`; column stochastic.
pub fn transition_product_w(ws: &[WeightMatrix], tau: usize, t: usize) -> Result<DMatrix<f64>> {
    transition_product(ws, tau, t)
}

/// `Phi_S(t, tau) = S(t-1) ... S(tau)`; row stochastic.
pub fn transition_product_s(ss: &[SMatrix], tau: usize, t: usize) -> Result<DMatrix<f64>> {
    transition_product(ss, tau, t)
}

/// `max_ij |[Phi_S(t,tau)]_ij y_i(t) - [Phi_W(t,tau)]_ij y_j(tau)|`.
///
/// `ys[k]` must hold `y(k)` for every `k <= t`.
pub fn verify_product_identity(
    ws: &[WeightMatrix],
    ss: &[SMatrix],
    ys: &[DVector<f64>],
    tau: usize,
    t: usize,
) -> Result<f64> {
    if ys.len() <= t {
        return Err(Error::Dimension(format!(
            "need y up to time {t}, history has {} entries",
            ys.len()
        )));
    }
    let phi_w = transition_product_w(ws, tau, t)?;
    let phi_s = transition_product_s(ss, tau, t)?;
    Ok(identity_residual(&phi_w, &phi_s, &ys[tau], &ys[t]))
}

fn identity_residual(
    phi_w: &DMatrix<f64>,
    phi_s: &DMatrix<f64>,
    y_start: &DVector<f64>,
    y_end: &DVector<f64>,
) -> f64 {
    let n = y_start.len();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            let r = (phi_s[(i, j)] * y_end[i] - phi_w[(i, j)] * y_start[j]).abs();
            worst = worst.max(r);
        }
    }
    worst
}

/// Largest product-identity residual over every `(tau, t)` with
/// `0 < t - tau <= max_gap` inside the history. Products are grown
/// incrementally from each `tau`.
pub fn product_identity_sweep(
    ws: &[WeightMatrix],
    ss: &[SMatrix],
    ys: &[DVector<f64>],
    max_gap: usize,
) -> Result<f64> {
    let steps = ws.len().min(ss.len()).min(ys.len().saturating_sub(1));
    let mut worst = 0.0f64;
    for tau in 0..steps {
        let mut phi_w = ws[tau].matrix().clone();
        let mut phi_s = ss[tau].matrix().clone();
        let last = steps.min(tau + max_gap);
        for t in tau + 1..=last {
            if t > tau + 1 {
                phi_w = ws[t - 1].matrix() * &phi_w;
                phi_s = ss[t - 1].matrix() * &phi_s;
            }
            worst = worst.max(identity_residual(&phi_w, &phi_s, &ys[tau], &ys[t]));
        }
    }
    Ok(worst)
}

/// `pi = y / n`. Refuses when `sum y` has drifted from `n`.
pub fn absolute_probability(y: &DVector<f64>) -> Result<DVector<f64>> {
    let n = y.len();
    let sum = y.sum();
    if !((sum - n as f64).abs() <= MASS_TOLERANCE) {
        return Err(Error::MassViolation {
            sum,
            n,
            tolerance: MASS_TOLERANCE,
        });
    }
    Ok(y / n as f64)
}

/// Stochastic vectors `pi(0), pi(1), ...` with their smallest entry.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AbsProbSeq {
    pis: Vec<DVector<f64>>,
    pi_min: f64,
}

impl AbsProbSeq {
    pub fn new() -> Self {
        Self {
            pis: Vec::new(),
            pi_min: f64::INFINITY,
        }
    }

    /// Appends `pi(t) = y(t) / n`.
    pub fn push_weights(&mut self, y: &DVector<f64>) -> Result<()> {
        let pi = absolute_probability(y)?;
        self.pi_min = self.pi_min.min(pi.min());
        self.pis.push(pi);
        Ok(())
    }

    pub fn get(&self, t: usize) -> Option<&DVector<f64>> {
        self.pis.get(t)
    }

    pub fn len(&self) -> usize {
        self.pis.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pis.is_empty()
    }

    pub fn pi_min(&self) -> f64 {
        self.pi_min
    }

    /// `max_t ||pi(t)^T - pi(t+1)^T S(t)||_inf` over the stored range.
    pub fn recursion_residual(&self, ss: &[SMatrix]) -> f64 {
        let mut worst = 0.0f64;
        for (t, s) in ss.iter().enumerate() {
            let (Some(now), Some(next)) = (self.pis.get(t), self.pis.get(t + 1)) else {
                break;
            };
            let pulled = s.matrix().tr_mul(next);
            worst = worst.max((now - pulled).amax());
        }
        worst
    }

    /// `max_t |sum_i pi_i(t) - 1|`, together with whether any entry is negative.
    pub fn stochasticity_residual(&self) -> (f64, bool) {
        let worst = self
            .pis
            .iter()
            .map(|p| (p.sum() - 1.0).abs())
            .fold(0.0, f64::max);
        let negative = self.pis.iter().any(|p| p.iter().any(|&v| v < 0.0));
        (worst, negative)
    }
}

/// A contraction factor `mu` in `[0, 1)`, kept in log form so that values
/// indistinguishable from 1 in `f64` still carry `1 - mu`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Contraction {
    #[serde(with = "crate::serde_float")]
    pub ln_mu: f64,
    pub one_minus_mu: f64,
}

impl Contraction {
    pub fn from_mu(mu: f64) -> Self {
        Self {
            ln_mu: mu.ln(),
            one_minus_mu: 1.0 - mu,
        }
    }

    pub fn from_ln(ln_mu: f64) -> Self {
        Self {
            ln_mu,
            one_minus_mu: -ln_mu.exp_m1(),
        }
    }

    pub fn mu(&self) -> f64 {
        self.ln_mu.exp()
    }

    /// `mu^e` with `mu^0 = 1` even when `mu = 0`.
    pub fn pow(&self, e: f64) -> f64 {
        if e == 0.0 {
            1.0
        } else {
            (e * self.ln_mu).exp()
        }
    }

    pub fn is_contracting(&self) -> bool {
        self.ln_mu < 0.0 && self.one_minus_mu > 0.0
    }
}

/// Worst-case constants guaranteed for a sequence that is uniformly strongly
/// connected with window `L` and uses out-degree weights.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TheoryConstants {
    pub n: usize,
    pub window: usize,
    /// Lower bound `n^{-nL}` on every `y_i(t)`; may underflow to 0.
    pub eta_lb: f64,
    pub ln_eta_lb: f64,
    /// `(1 - n^{-nL})^{1/L}`.
    pub mu_ub: Contraction,
    /// Envelope constant of the column-product convergence.
    pub c: f64,
}

impl TheoryConstants {
    /// `gamma = beta * eta / n`, the floor on positive entries of `S(t)`.
    pub fn s_entry_floor(&self, beta: f64) -> f64 {
        beta * self.eta_lb / self.n as f64
    }
}

/// Closed-form constants, evaluated in log space.
pub fn theory_constants(n: usize, window: usize) -> TheoryConstants {
    assert!(n >= 1 && window >= 1, "theory constants need n >= 1 and L >= 1");
    let ln_eta_lb = -((n * window) as f64) * (n as f64).ln();
    let eta_lb = ln_eta_lb.exp();
    // ln(1 - eta) / L; when eta underflows use ln(1 - eta) ~ -eta computed from its log.
    let ln_mu = if eta_lb > 0.0 {
        (-eta_lb).ln_1p() / window as f64
    } else {
        -(ln_eta_lb - (window as f64).ln()).exp()
    };
    TheoryConstants {
        n,
        window,
        eta_lb,
        ln_eta_lb,
        mu_ub: Contraction::from_ln(ln_mu),
        c: 4.0,
    }
}

/// `max_i ||z_i - mean_j z_j||_2`.
pub fn consensus_error(zs: &DMatrix<f64>) -> f64 {
    let n = zs.nrows();
    if n == 0 {
        return 0.0;
    }
    let mean = zs.row_mean();
    zs.row_iter()
        .map(|row| (row - &mean).norm())
        .fold(0.0, f64::max)
}
