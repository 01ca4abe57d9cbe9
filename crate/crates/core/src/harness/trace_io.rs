//! Trace CSV export and import.
//!
//! Columns: `t, alpha`, then `z{i}_{k}` for every agent `i` and coordinate
//! `k` (both 1-indexed), `zbar_{k}`, `lyap_{k}`, `consensus_err`,
//! `gap_running_avg`, and when bounds are enabled `bound_lhs, rhs_theory,
//! rhs_empirical, term1..term4`. Floats carry 17 significant digits so a
//! re-import is bitwise identical; `NaN` marks values that were not evaluated.

use std::path::Path;

use nalgebra::{DMatrix, DVector};

use super::experiment::BoundColumns;
use crate::error::{Error, Result};
use crate::subgradient::RunTrace;

pub const BOUND_COLUMNS: [&str; 7] = [
    "bound_lhs",
    "rhs_theory",
    "rhs_empirical",
    "term1",
    "term2",
    "term3",
    "term4",
];

pub fn format_float(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        v.to_string()
    }
}

pub fn trace_header(n: usize, d: usize, with_bounds: bool) -> Vec<String> {
    let mut h = vec!["t".to_string(), "alpha".to_string()];
    for i in 1..=n {
        h.extend((1..=d).map(|k| format!("z{i}_{k}")));
    }
    h.extend((1..=d).map(|k| format!("zbar_{k}")));
    h.extend((1..=d).map(|k| format!("lyap_{k}")));
    h.push("consensus_err".into());
    h.push("gap_running_avg".into());
    if with_bounds {
        h.extend(BOUND_COLUMNS.iter().map(|s| s.to_string()));
    }
    h
}

pub fn export_trace(trace: &RunTrace, bounds: Option<&BoundColumns>, path: &Path) -> Result<()> {
    let (n, d) = (trace.meta.n, trace.meta.d);
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(trace_header(n, d, bounds.is_some()))?;
    for (t, r) in trace.records.iter().enumerate() {
        let mut row = vec![r.t.to_string(), format_float(r.alpha)];
        for i in 0..n {
            row.extend((0..d).map(|k| format_float(r.z[(i, k)])));
        }
        row.extend(r.zbar.iter().map(|&v| format_float(v)));
        row.extend(r.lyapunov.iter().map(|&v| format_float(v)));
        row.push(format_float(r.consensus_error));
        row.push(format_float(r.gap_running_avg.unwrap_or(f64::NAN)));
        if let Some(b) = bounds {
            row.push(format_float(b.lhs[t]));
            row.push(format_float(b.rhs_theory[t]));
            row.push(format_float(b.rhs_empirical[t]));
            row.extend(b.terms[t].iter().map(|&v| format_float(v)));
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// A trace read back from CSV.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceTable {
    pub n: usize,
    pub d: usize,
    pub t: Vec<usize>,
    pub alpha: Vec<f64>,
    pub z: Vec<DMatrix<f64>>,
    pub zbar: Vec<DVector<f64>>,
    pub lyapunov: Vec<DVector<f64>>,
    pub consensus_err: Vec<f64>,
    /// NaN where the optimum was unknown.
    pub gap: Vec<f64>,
    pub bounds: Option<BoundColumns>,
}

impl TraceTable {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }
}

fn parse_float(s: &str, line: usize) -> Result<f64> {
    s.trim().parse().map_err(|_| Error::Parse {
        line,
        msg: format!("not a number: `{s}`"),
    })
}

pub fn import_trace(path: &Path) -> Result<TraceTable> {
    let mut r = csv::Reader::from_path(path)?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    let d = header.iter().filter(|h| h.starts_with("zbar_")).count();
    let z_cols = header
        .iter()
        .filter(|h| h.starts_with('z') && !h.starts_with("zbar_"))
        .count();
    if d == 0 || z_cols % d != 0 {
        return Err(Error::Parse {
            line: 1,
            msg: "trace header lacks zbar or agent columns".into(),
        });
    }
    let n = z_cols / d;
    let with_bounds = header.iter().any(|h| h == "bound_lhs");
    if header != trace_header(n, d, with_bounds) {
        return Err(Error::Parse {
            line: 1,
            msg: format!("unexpected trace header for n = {n}, d = {d}"),
        });
    }
    let mut table = TraceTable {
        n,
        d,
        t: Vec::new(),
        alpha: Vec::new(),
        z: Vec::new(),
        zbar: Vec::new(),
        lyapunov: Vec::new(),
        consensus_err: Vec::new(),
        gap: Vec::new(),
        bounds: with_bounds.then(|| BoundColumns {
            lhs: Vec::new(),
            rhs_theory: Vec::new(),
            rhs_empirical: Vec::new(),
            terms: Vec::new(),
        }),
    };
    for (k, rec) in r.records().enumerate() {
        let rec = rec?;
        let line = k + 2;
        let f = |idx: usize| parse_float(&rec[idx], line);
        table.t.push(rec[0].trim().parse().map_err(|_| Error::Parse {
            line,
            msg: format!("bad step `{}`", &rec[0]),
        })?);
        table.alpha.push(f(1)?);
        let mut z = DMatrix::zeros(n, d);
        for i in 0..n {
            for c in 0..d {
                z[(i, c)] = f(2 + i * d + c)?;
            }
        }
        table.z.push(z);
        let base = 2 + n * d;
        table.zbar.push(DVector::from_iterator(d, (0..d).map(|c| f(base + c)).collect::<Result<Vec<_>>>()?));
        table
            .lyapunov
            .push(DVector::from_iterator(d, (0..d).map(|c| f(base + d + c)).collect::<Result<Vec<_>>>()?));
        let base = base + 2 * d;
        table.consensus_err.push(f(base)?);
        table.gap.push(f(base + 1)?);
        if let Some(b) = table.bounds.as_mut() {
            let base = base + 2;
            b.lhs.push(f(base)?);
            b.rhs_theory.push(f(base + 1)?);
            b.rhs_empirical.push(f(base + 2)?);
            b.terms.push([f(base + 3)?, f(base + 4)?, f(base + 5)?, f(base + 6)?]);
        }
    }
    Ok(table)
}
