//! Column-stochastic mixing matrices compliant with a graph.

use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Digraph;

/// Column-sum tolerance for matrices built by [`build_weights`].
pub const CONSTRUCTED_TOLERANCE: f64 = 1e-12;
/// Column-sum tolerance for user-supplied matrices, which may have gone
/// through a text round trip.
pub const USER_TOLERANCE: f64 = 1e-9;

/// A column-stochastic `W(t)`; entry `(i, j)` is the weight agent `j` sends to `i`.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightMatrix {
    entries: DMatrix<f64>,
    beta: f64,
}

impl WeightMatrix {
    pub fn n(&self) -> usize {
        self.entries.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.entries
    }

    /// Smallest positive entry.
    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Wraps a matrix without checking it. Callers are expected to run
    /// [`validate_column_stochastic`] before trusting the result.
    pub fn from_matrix_unchecked(entries: DMatrix<f64>) -> Self {
        let beta = smallest_positive(&entries);
        Self { entries, beta }
    }

    /// Graph whose arcs are the support of this matrix (`w_ij > 0` gives `j -> i`).
    pub fn support_graph(&self) -> Result<Digraph> {
        let n = self.n();
        let mut g = Digraph::self_loops(n)?;
        for i in 0..n {
            for j in 0..n {
                if self.entries[(i, j)] > 0.0 {
                    g.add_arc(j, i)?;
                }
            }
        }
        Ok(g)
    }
}

fn smallest_positive(m: &DMatrix<f64>) -> f64 {
    m.iter()
        .copied()
        .filter(|&v| v > 0.0)
        .fold(f64::INFINITY, f64::min)
}

/// How weights are assigned to the arcs of a graph.
#[derive(Clone, Debug, PartialEq)]
pub enum WeightRule {
    /// `w_ij = 1 / |out-neighbors of j|` on every arc `j -> i`.
    UniformOutDegree,
    /// Explicit entries, validated but never modified.
    Custom(DMatrix<f64>),
}

/// Builds `W(t)` for `g`. Custom entries are checked against the graph at
/// [`USER_TOLERANCE`] with `beta_min` = any positive value.
pub fn build_weights(g: &Digraph, rule: &WeightRule) -> Result<WeightMatrix> {
    let n = g.n();
    match rule {
        WeightRule::UniformOutDegree => {
            let mut m = DMatrix::zeros(n, n);
            for &(from, to) in g.arcs() {
                m[(to, from)] = 1.0 / g.out_degree(from) as f64;
            }
            Ok(WeightMatrix::from_matrix_unchecked(m))
        }
        WeightRule::Custom(entries) => {
            if entries.nrows() != n || entries.ncols() != n {
                return Err(Error::Dimension(format!(
                    "custom weights are {}x{}, graph has {n} vertices",
                    entries.nrows(),
                    entries.ncols()
                )));
            }
            let w = WeightMatrix::from_matrix_unchecked(entries.clone());
            let report = validate_with_tolerance(w.matrix(), g, f64::MIN_POSITIVE, USER_TOLERANCE);
            if !report.is_clean() {
                return Err(Error::InvalidWeights(report.to_string()));
            }
            Ok(w)
        }
    }
}

/// One way a matrix can fail to be a compliant column-stochastic matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Violation {
    Dimension { rows: usize, cols: usize, n: usize },
    ColumnSum { column: usize, sum: f64 },
    Negative { row: usize, column: usize, value: f64 },
    /// Positive entry where the graph has no arc `column -> row`.
    Support { row: usize, column: usize, value: f64 },
    /// Arc `column -> row` present but the entry is zero.
    MissingWeight { row: usize, column: usize },
    BelowBeta { row: usize, column: usize, value: f64, beta_min: f64 },
    ZeroDiagonal { index: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // 1-indexed for humans.
        match *self {
            Violation::Dimension { rows, cols, n } => {
                write!(f, "matrix is {rows}x{cols}, expected {n}x{n}")
            }
            Violation::ColumnSum { column, sum } => {
                write!(f, "column {} sums to {sum}", column + 1)
            }
            Violation::Negative { row, column, value } => {
                write!(f, "entry ({}, {}) = {value} is negative", row + 1, column + 1)
            }
            Violation::Support { row, column, value } => write!(
                f,
                "entry ({}, {}) = {value} but {} -> {} is not an arc",
                row + 1,
                column + 1,
                column + 1,
                row + 1
            ),
            Violation::MissingWeight { row, column } => write!(
                f,
                "arc {} -> {} carries zero weight",
                column + 1,
                row + 1
            ),
            Violation::BelowBeta {
                row,
                column,
                value,
                beta_min,
            } => write!(
                f,
                "entry ({}, {}) = {value} below beta {beta_min}",
                row + 1,
                column + 1
            ),
            Violation::ZeroDiagonal { index } => {
                write!(f, "diagonal entry {} is not positive", index + 1)
            }
        }
    }
}

/// Findings of [`validate_column_stochastic`]; empty means compliant.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct WeightReport {
    pub violations: Vec<Violation>,
}

impl WeightReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for WeightReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return write!(f, "ok");
        }
        for (k, v) in self.violations.iter().enumerate() {
            if k > 0 {
                write!(f, "; ")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

/// Checks column sums, graph compliance, the positive-entry floor `beta_min`
/// and the diagonal. Uses [`CONSTRUCTED_TOLERANCE`].
pub fn validate_column_stochastic(w: &WeightMatrix, g: &Digraph, beta_min: f64) -> WeightReport {
    validate_with_tolerance(w.matrix(), g, beta_min, CONSTRUCTED_TOLERANCE)
}

pub fn validate_with_tolerance(
    m: &DMatrix<f64>,
    g: &Digraph,
    beta_min: f64,
    tolerance: f64,
) -> WeightReport {
    let n = g.n();
    let mut violations = Vec::new();
    if m.nrows() != n || m.ncols() != n {
        violations.push(Violation::Dimension {
            rows: m.nrows(),
            cols: m.ncols(),
            n,
        });
        return WeightReport { violations };
    }
    for column in 0..n {
        let sum: f64 = m.column(column).iter().sum();
        if !((sum - 1.0).abs() <= tolerance) {
            violations.push(Violation::ColumnSum { column, sum });
        }
    }
    for row in 0..n {
        for column in 0..n {
            let value = m[(row, column)];
            let arc = g.has_arc(column, row);
            if value < 0.0 || value.is_nan() {
                violations.push(Violation::Negative { row, column, value });
            } else if value > 0.0 && !arc {
                violations.push(Violation::Support { row, column, value });
            } else if value == 0.0 && arc && row != column {
                violations.push(Violation::MissingWeight { row, column });
            } else if value > 0.0 && value < beta_min {
                violations.push(Violation::BelowBeta {
                    row,
                    column,
                    value,
                    beta_min,
                });
            }
        }
        if !(m[(row, row)] > 0.0) {
            violations.push(Violation::ZeroDiagonal { index: row });
        }
    }
    WeightReport { violations }
}

/// Parses whitespace-separated row-major matrices. Blocks are separated by
/// blank lines; every block must be square with the same size.
pub fn parse_weight_blocks(text: &str) -> Result<Vec<DMatrix<f64>>> {
    let mut blocks = Vec::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut flush = |rows: &mut Vec<Vec<f64>>, line: usize| -> Result<()> {
        if rows.is_empty() {
            return Ok(());
        }
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::Parse {
                line,
                msg: format!("weight block ending here is not {n}x{n}"),
            });
        }
        let flat: Vec<f64> = rows.drain(..).flatten().collect();
        blocks.push(DMatrix::from_row_slice(n, n, &flat));
        Ok(())
    };
    for (k, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.starts_with('#') {
            continue;
        }
        if line.is_empty() {
            flush(&mut rows, k + 1)?;
            continue;
        }
        let row = line
            .split_whitespace()
            .map(|tok| {
                tok.parse::<f64>().map_err(|_| Error::Parse {
                    line: k + 1,
                    msg: format!("not a number: `{tok}`"),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    flush(&mut rows, text.lines().count())?;
    if blocks.is_empty() {
        return Err(Error::Parse {
            line: 1,
            msg: "no weight matrix found".into(),
        });
    }
    let n = blocks[0].nrows();
    if blocks.iter().any(|b| b.nrows() != n) {
        return Err(Error::Parse {
            line: 0,
            msg: "weight blocks differ in size".into(),
        });
    }
    Ok(blocks)
}

/// Inverse of [`parse_weight_blocks`] for a single matrix.
pub fn format_weight_matrix(m: &DMatrix<f64>) -> String {
    let mut out = String::new();
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| format!("{:?}", m[(i, j)])).collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{generate_sequence, GeneratorKind};
    use nalgebra::DVector;
    use proptest::prelude::*;

    #[test]
    fn uniform_on_three_cycle() {
        let g = Digraph::cycle(3).unwrap();
        let w = build_weights(&g, &WeightRule::UniformOutDegree).unwrap();
        // Out-degree of every vertex is 2 (itself and its successor).
        for j in 0..3 {
            let col: Vec<f64> = w.matrix().column(j).iter().copied().collect();
            assert_eq!(col.iter().filter(|&&v| v == 0.5).count(), 2);
            assert_eq!(w.matrix()[(j, j)], 0.5);
            assert_eq!(w.matrix()[((j + 1) % 3, j)], 0.5);
        }
        assert_eq!(w.beta(), 0.5);
        assert!(validate_column_stochastic(&w, &g, 1.0 / 3.0).is_clean());
    }

    #[test]
    fn self_loops_give_identity() {
        let g = Digraph::self_loops(4).unwrap();
        let w = build_weights(&g, &WeightRule::UniformOutDegree).unwrap();
        assert_eq!(w.matrix(), &DMatrix::identity(4, 4));
        let g1 = Digraph::self_loops(1).unwrap();
        let w1 = build_weights(&g1, &WeightRule::UniformOutDegree).unwrap();
        assert_eq!(w1.matrix(), &DMatrix::from_element(1, 1, 1.0));
    }

    #[test]
    fn column_sum_violation_named() {
        let g = Digraph::cycle(3).unwrap();
        let mut m = build_weights(&g, &WeightRule::UniformOutDegree)
            .unwrap()
            .matrix()
            .clone();
        m[(1, 0)] = 0.4; // column 0 now sums to 0.9
        let report = validate_column_stochastic(&WeightMatrix::from_matrix_unchecked(m.clone()), &g, 0.1);
        assert_eq!(report.violations.len(), 1);
        assert!(matches!(report.violations[0], Violation::ColumnSum { column: 0, .. }));
        assert!(matches!(
            build_weights(&g, &WeightRule::Custom(m)),
            Err(Error::InvalidWeights(_))
        ));
    }

    #[test]
    fn support_violation() {
        let g = Digraph::cycle(3).unwrap();
        let mut m = build_weights(&g, &WeightRule::UniformOutDegree)
            .unwrap()
            .matrix()
            .clone();
        // 1 -> 3 (0-indexed 0 -> 2) is not an arc of the ring.
        m[(2, 0)] = 0.25;
        m[(0, 0)] = 0.25;
        let report = validate_column_stochastic(&WeightMatrix::from_matrix_unchecked(m), &g, 0.1);
        assert!(report
            .violations
            .iter()
            .any(|v| matches!(v, Violation::Support { row: 2, column: 0, .. })));
    }

    #[test]
    fn zero_diagonal_and_beta() {
        let g = Digraph::from_arcs(2, [(0, 1), (1, 0)]).unwrap();
        let m = DMatrix::from_row_slice(2, 2, &[0.0, 0.5, 1.0, 0.5]);
        let report = validate_column_stochastic(&WeightMatrix::from_matrix_unchecked(m), &g, 0.1);
        assert!(report
            .violations
            .iter()
            .any(|v| matches!(v, Violation::ZeroDiagonal { index: 0 })));
        let m = DMatrix::from_row_slice(2, 2, &[0.95, 0.5, 0.05, 0.5]);
        let report = validate_column_stochastic(&WeightMatrix::from_matrix_unchecked(m), &g, 0.1);
        assert!(matches!(report.violations[..], [Violation::BelowBeta { row: 1, column: 0, .. }]));
    }

    #[test]
    fn custom_weights_are_kept_verbatim() {
        let g = Digraph::from_arcs(2, [(0, 1), (1, 0)]).unwrap();
        let m = DMatrix::from_row_slice(2, 2, &[0.7, 0.4, 0.3, 0.6]);
        let w = build_weights(&g, &WeightRule::Custom(m.clone())).unwrap();
        assert_eq!(w.matrix(), &m);
        assert_eq!(w.beta(), 0.3);
    }

    #[test]
    fn weight_file_blocks() {
        let text = "0.5 0.5\n0.5 0.5\n\n1 0\n0 1\n";
        let blocks = parse_weight_blocks(text).unwrap();
        assert_eq!(blocks.len(), 2);
        assert_eq!(blocks[1], DMatrix::identity(2, 2));
        let m = DMatrix::from_row_slice(2, 2, &[0.7, 0.4, 0.3, 0.6]);
        assert_eq!(parse_weight_blocks(&format_weight_matrix(&m)).unwrap()[0], m);
        assert!(parse_weight_blocks("1 0\n0\n").is_err());
        assert!(parse_weight_blocks("").is_err());
    }

    proptest! {
        #[test]
        fn uniform_weights_satisfy_assumption(n in 1usize..8, seed in any::<u64>(), which in 0usize..3) {
            let kind: GeneratorKind = ["static-cycle", "rotating-arc", "random-walkable"][which].parse().unwrap();
            let seq = generate_sequence(&kind, n, 10, seed).unwrap();
            for g in seq.graphs() {
                let w = build_weights(g, &WeightRule::UniformOutDegree).unwrap();
                prop_assert!(w.beta() >= 1.0 / n as f64);
                let report = validate_column_stochastic(&w, g, 1.0 / n as f64);
                prop_assert!(report.is_clean(), "{}", report);
                let x = DVector::from_fn(n, |i, _| (i as f64 * 1.7).sin() * 10.0);
                let moved = w.matrix() * &x;
                prop_assert!((moved.sum() - x.sum()).abs() <= 1e-10);
            }
        }
    }
}
