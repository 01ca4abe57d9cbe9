//! Convex per-agent costs, their subgradient oracles, and the optimum of
//! `f(z) = (1/n) sum_i f_i(z)`.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute slack allowed when a declared `G` is compared to the computed one.
const G_SLACK: f64 = 1e-12;

/// One agent's private cost.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum LocalObjective {
    /// `||z - center||^2`
    Quadratic { center: Vec<f64> },
    /// `sum_k |z_k - center_k|`
    L1 { center: Vec<f64> },
    /// `max(0, 1 - label * <weights, z>)`
    Hinge { label: f64, weights: Vec<f64> },
    /// `f_i = 0`
    Zero,
}

impl LocalObjective {
    fn check_dim(&self, d: usize) -> Result<()> {
        let len = match self {
            LocalObjective::Quadratic { center } | LocalObjective::L1 { center } => center.len(),
            LocalObjective::Hinge { weights, .. } => weights.len(),
            LocalObjective::Zero => d,
        };
        if len != d {
            return Err(Error::InvalidObjective(format!(
                "term has dimension {len}, objective has {d}"
            )));
        }
        Ok(())
    }

    pub fn value(&self, z: &DVector<f64>) -> f64 {
        match self {
            LocalObjective::Quadratic { center } => z
                .iter()
                .zip(center)
                .map(|(zk, ak)| (zk - ak).powi(2))
                .sum(),
            LocalObjective::L1 { center } => {
                z.iter().zip(center).map(|(zk, ak)| (zk - ak).abs()).sum()
            }
            LocalObjective::Hinge { label, weights } => {
                let margin: f64 = z.iter().zip(weights).map(|(zk, wk)| zk * wk).sum();
                (1.0 - label * margin).max(0.0)
            }
            LocalObjective::Zero => 0.0,
        }
    }

    /// A subgradient at `z`. At kinks the minimal-norm canonical choice is
    /// returned: `sign(0) = 0` for L1, and 0 at the hinge's corner.
    pub fn subgradient(&self, z: &DVector<f64>) -> DVector<f64> {
        match self {
            LocalObjective::Quadratic { center } => {
                DVector::from_iterator(z.len(), z.iter().zip(center).map(|(zk, ak)| 2.0 * (zk - ak)))
            }
            LocalObjective::L1 { center } => DVector::from_iterator(
                z.len(),
                z.iter().zip(center).map(|(zk, ak)| sign(zk - ak)),
            ),
            LocalObjective::Hinge { label, weights } => {
                let margin: f64 = z.iter().zip(weights).map(|(zk, wk)| zk * wk).sum();
                if 1.0 - label * margin > 0.0 {
                    DVector::from_iterator(z.len(), weights.iter().map(|wk| -label * wk))
                } else {
                    DVector::zeros(z.len())
                }
            }
            LocalObjective::Zero => DVector::zeros(z.len()),
        }
    }

    /// `sup ||g||_2` over the box `[lo, hi]^d`.
    fn subgradient_bound(&self, d: usize, region: &BoxRegion) -> f64 {
        match self {
            LocalObjective::Quadratic { center } => {
                let far: f64 = center
                    .iter()
                    .map(|a| (region.lo - a).abs().max((region.hi - a).abs()).powi(2))
                    .sum();
                2.0 * far.sqrt()
            }
            LocalObjective::L1 { .. } => (d as f64).sqrt(),
            LocalObjective::Hinge { label, weights } => {
                label.abs() * weights.iter().map(|w| w * w).sum::<f64>().sqrt()
            }
            LocalObjective::Zero => 0.0,
        }
    }
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// The cube `[lo, hi]^d` on which `G` is certified.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxRegion {
    pub lo: f64,
    pub hi: f64,
}

impl BoxRegion {
    pub fn contains(&self, z: &DVector<f64>) -> bool {
        z.iter().all(|&v| v >= self.lo && v <= self.hi)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OptimumSource {
    /// Mean / coordinatewise median formula.
    Analytic,
    /// Supplied by the caller.
    Declared,
    /// Dense grid with local refinement over the box.
    GridSearch,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Optimum {
    pub point: Vec<f64>,
    pub value: f64,
    pub source: OptimumSource,
}

/// `f = (1/n) sum_i f_i` on `R^d` with its certified subgradient bound.
#[derive(Clone, Debug, PartialEq)]
pub struct Objective {
    d: usize,
    terms: Vec<LocalObjective>,
    region: BoxRegion,
    g_bound: f64,
    optimum: Option<Optimum>,
}

impl Objective {
    /// Validates the terms, certifies `G` on `region` (a declared value must
    /// not undercut the computed one) and locates the optimum.
    pub fn new(
        d: usize,
        terms: Vec<LocalObjective>,
        region: BoxRegion,
        declared_g: Option<f64>,
        declared_optimum: Option<Vec<f64>>,
    ) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidObjective("dimension must be at least 1".into()));
        }
        if terms.is_empty() {
            return Err(Error::InvalidObjective("no agent terms".into()));
        }
        if !(region.lo < region.hi) || !region.lo.is_finite() || !region.hi.is_finite() {
            return Err(Error::InvalidObjective(format!(
                "box [{}, {}] is empty or unbounded",
                region.lo, region.hi
            )));
        }
        for term in &terms {
            term.check_dim(d)?;
        }
        let computed_g = terms
            .iter()
            .map(|t| t.subgradient_bound(d, &region))
            .fold(0.0, f64::max);
        let g_bound = match declared_g {
            Some(g) if g + G_SLACK < computed_g => {
                return Err(Error::InvalidObjective(format!(
                    "declared G = {g} is below the subgradient norm {computed_g} reachable on the box"
                )))
            }
            Some(g) => g,
            None => computed_g,
        };
        let mut objective = Self {
            d,
            terms,
            region,
            g_bound,
            optimum: None,
        };
        objective.optimum = match declared_optimum {
            Some(point) => {
                if point.len() != d {
                    return Err(Error::InvalidObjective("declared optimum has wrong dimension".into()));
                }
                let value = objective.value(&DVector::from_vec(point.clone()));
                Some(Optimum {
                    point,
                    value,
                    source: OptimumSource::Declared,
                })
            }
            None => objective.locate_optimum(),
        };
        if let Some(opt) = &objective.optimum {
            if !region.contains(&DVector::from_vec(opt.point.clone())) {
                return Err(Error::InvalidObjective(
                    "optimum lies outside the bounding box".into(),
                ));
            }
        }
        Ok(objective)
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn n(&self) -> usize {
        self.terms.len()
    }

    pub fn terms(&self) -> &[LocalObjective] {
        &self.terms
    }

    pub fn region(&self) -> BoxRegion {
        self.region
    }

    /// Uniform bound on `||g_i||_2` over the box.
    pub fn g_bound(&self) -> f64 {
        self.g_bound
    }

    pub fn optimum(&self) -> Option<&Optimum> {
        self.optimum.as_ref()
    }

    pub fn value(&self, z: &DVector<f64>) -> f64 {
        self.terms.iter().map(|t| t.value(z)).sum::<f64>() / self.terms.len() as f64
    }

    /// Subgradient of agent `i`'s term.
    pub fn subgradient(&self, agent: usize, z: &DVector<f64>) -> DVector<f64> {
        self.terms[agent].subgradient(z)
    }

    fn locate_optimum(&self) -> Option<Optimum> {
        let n = self.terms.len();
        let analytic = |point: Vec<f64>| {
            let value = self.value(&DVector::from_vec(point.clone()));
            Some(Optimum {
                point,
                value,
                source: OptimumSource::Analytic,
            })
        };
        let centers = |want_l1: bool| -> Option<Vec<&Vec<f64>>> {
            self.terms
                .iter()
                .map(|t| match (t, want_l1) {
                    (LocalObjective::Quadratic { center }, false) => Some(center),
                    (LocalObjective::L1 { center }, true) => Some(center),
                    _ => None,
                })
                .collect()
        };
        if self.terms.iter().all(|t| matches!(t, LocalObjective::Zero)) {
            return analytic(vec![0.5 * (self.region.lo + self.region.hi); self.d]);
        }
        if let Some(cs) = centers(false) {
            let mean = (0..self.d)
                .map(|k| cs.iter().map(|c| c[k]).sum::<f64>() / n as f64)
                .collect();
            return analytic(mean);
        }
        if let Some(cs) = centers(true) {
            let median = (0..self.d)
                .map(|k| {
                    let mut col: Vec<f64> = cs.iter().map(|c| c[k]).collect();
                    col.sort_by(f64::total_cmp);
                    col[(n - 1) / 2]
                })
                .collect();
            return analytic(median);
        }
        if self.d <= 2 {
            let (point, value) = grid_minimize(|z| self.value(z), self.d, self.region);
            return Some(Optimum {
                point,
                value,
                source: OptimumSource::GridSearch,
            });
        }
        None
    }
}

/// Dense grid over the box followed by repeated zooming around the best cell.
/// Intended for convex functions of one or two variables.
pub fn grid_minimize(f: impl Fn(&DVector<f64>) -> f64, d: usize, region: BoxRegion) -> (Vec<f64>, f64) {
    const POINTS: usize = 81;
    const ROUNDS: usize = 40;
    let mut lo = vec![region.lo; d];
    let mut hi = vec![region.hi; d];
    let mut best = (vec![0.5 * (region.lo + region.hi); d], f64::INFINITY);
    for _ in 0..ROUNDS {
        let steps: Vec<f64> = (0..d).map(|k| (hi[k] - lo[k]) / (POINTS - 1) as f64).collect();
        let total = POINTS.pow(d as u32);
        for flat in 0..total {
            let mut idx = flat;
            let z = DVector::from_fn(d, |k, _| {
                let i = idx % POINTS;
                idx /= POINTS;
                lo[k] + i as f64 * steps[k]
            });
            let v = f(&z);
            if v < best.1 {
                best = (z.iter().copied().collect(), v);
            }
        }
        for k in 0..d {
            lo[k] = (best.0[k] - 2.0 * steps[k]).max(region.lo);
            hi[k] = (best.0[k] + 2.0 * steps[k]).min(region.hi);
        }
    }
    best
}
