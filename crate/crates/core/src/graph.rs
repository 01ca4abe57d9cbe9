//! Time-varying directed graphs with self-arcs at every vertex.
//!
//! An arc `(j, i)` means `j -> i`: information flows from `j` to `i`, so `j`
//! is an in-neighbor of `i`. Vertices are 0-indexed here; the text format and
//! exported traces use 1-indexed labels.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// RNG stream reserved for graph generation.
pub(crate) const GRAPH_STREAM: u64 = 0;

/// Default arc probability for the `random-walkable` generator.
pub const DEFAULT_ARC_PROBABILITY: f64 = 0.2;
/// Default period at which `random-walkable` injects the spanning cycle.
pub const DEFAULT_INJECT_EVERY: usize = 5;

/// A directed graph on `n` vertices that always carries every self-arc.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Digraph {
    n: usize,
    arcs: BTreeSet<(usize, usize)>,
}

impl Digraph {
    /// Graph holding only the self-arcs.
    pub fn self_loops(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::EmptyGraph);
        }
        Ok(Self {
            n,
            arcs: (0..n).map(|i| (i, i)).collect(),
        })
    }

    /// Graph with the given arcs `(from, to)` plus all self-arcs.
    pub fn from_arcs<I>(n: usize, arcs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let mut g = Self::self_loops(n)?;
        for (from, to) in arcs {
            g.add_arc(from, to)?;
        }
        Ok(g)
    }

    /// Directed ring `0 -> 1 -> ... -> n-1 -> 0` plus self-arcs.
    pub fn cycle(n: usize) -> Result<Self> {
        Self::from_arcs(n, (0..n).map(|j| (j, (j + 1) % n)))
    }

    pub fn add_arc(&mut self, from: usize, to: usize) -> Result<()> {
        if from >= self.n || to >= self.n {
            return Err(Error::ArcOutOfRange { from, to, n: self.n });
        }
        self.arcs.insert((from, to));
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn arcs(&self) -> &BTreeSet<(usize, usize)> {
        &self.arcs
    }

    pub fn has_arc(&self, from: usize, to: usize) -> bool {
        self.arcs.contains(&(from, to))
    }

    /// In-neighbors of `i`, including `i` itself.
    pub fn in_neighbors(&self, i: usize) -> Vec<usize> {
        self.arcs
            .iter()
            .filter(|&&(_, to)| to == i)
            .map(|&(from, _)| from)
            .collect()
    }

    /// Out-neighbors of `j`, including `j` itself.
    pub fn out_neighbors(&self, j: usize) -> Vec<usize> {
        self.arcs
            .range((j, 0)..(j + 1, 0))
            .map(|&(_, to)| to)
            .collect()
    }

    pub fn out_degree(&self, j: usize) -> usize {
        self.arcs.range((j, 0)..(j + 1, 0)).count()
    }

    /// True iff every vertex reaches every other vertex.
    pub fn is_strongly_connected(&self) -> bool {
        let mut adjacency = vec![false; self.n * self.n];
        for &(from, to) in &self.arcs {
            adjacency[from * self.n + to] = true;
        }
        strongly_connected_dense(self.n, |from, to| adjacency[from * self.n + to])
    }
}

/// Forward and backward reachability from vertex 0 covers everything iff the
/// graph is strongly connected.
fn strongly_connected_dense(n: usize, arc: impl Fn(usize, usize) -> bool) -> bool {
    let sweep = |forward: bool| {
        let mut seen = vec![false; n];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(v) = stack.pop() {
            for u in 0..n {
                let present = if forward { arc(v, u) } else { arc(u, v) };
                if present && !seen[u] {
                    seen[u] = true;
                    stack.push(u);
                }
            }
        }
        seen.into_iter().all(|s| s)
    };
    sweep(true) && sweep(false)
}

/// Union of arc sets over graphs sharing one vertex count.
pub fn union_graph(graphs: &[Digraph]) -> Result<Digraph> {
    let first = graphs.first().ok_or(Error::EmptyUnion)?;
    let mut out = first.clone();
    for g in &graphs[1..] {
        if g.n != out.n {
            return Err(Error::Dimension(format!(
                "union of graphs with {} and {} vertices",
                out.n, g.n
            )));
        }
        out.arcs.extend(g.arcs.iter().copied());
    }
    Ok(out)
}

/// Which family a [`GraphSequence`] is drawn from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum GeneratorKind {
    /// The directed ring at every step.
    StaticCycle,
    /// At step `t` only the arc `t mod n -> (t+1) mod n`.
    RotatingArc,
    /// Independent random arcs per step; the ring is injected every
    /// `inject_every` steps so every window of that length is strongly connected.
    RandomWalkable {
        arc_probability: f64,
        inject_every: usize,
    },
}

impl GeneratorKind {
    pub fn name(&self) -> &'static str {
        match self {
            GeneratorKind::StaticCycle => "static-cycle",
            GeneratorKind::RotatingArc => "rotating-arc",
            GeneratorKind::RandomWalkable { .. } => "random-walkable",
        }
    }
}

impl FromStr for GeneratorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "static-cycle" => Ok(GeneratorKind::StaticCycle),
            "rotating-arc" => Ok(GeneratorKind::RotatingArc),
            "random-walkable" => Ok(GeneratorKind::RandomWalkable {
                arc_probability: DEFAULT_ARC_PROBABILITY,
                inject_every: DEFAULT_INJECT_EVERY,
            }),
            other => Err(Error::UnknownGenerator(other.to_string())),
        }
    }
}

/// Graphs `G(0), ..., G(horizon-1)` on a common vertex set.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphSequence {
    n: usize,
    /// `None` when the sequence was read from a file.
    kind: Option<GeneratorKind>,
    seed: u64,
    graphs: Vec<Digraph>,
}

impl GraphSequence {
    /// Wraps explicit graphs (e.g. parsed from a file).
    pub fn from_graphs(graphs: Vec<Digraph>) -> Result<Self> {
        let n = graphs.first().ok_or(Error::EmptyHorizon)?.n;
        if let Some(bad) = graphs.iter().find(|g| g.n != n) {
            return Err(Error::Dimension(format!(
                "sequence mixes {n} and {} vertices",
                bad.n
            )));
        }
        Ok(Self {
            n,
            kind: None,
            seed: 0,
            graphs,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn horizon(&self) -> usize {
        self.graphs.len()
    }

    pub fn kind(&self) -> Option<&GeneratorKind> {
        self.kind.as_ref()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn graphs(&self) -> &[Digraph] {
        &self.graphs
    }

    pub fn get(&self, t: usize) -> Option<&Digraph> {
        self.graphs.get(t)
    }

    /// Keeps only the first `horizon` graphs.
    pub fn truncated(&self, horizon: usize) -> Self {
        let mut out = self.clone();
        out.graphs.truncate(horizon);
        out
    }

    /// Line-oriented text form: `n horizon`, then `t: j>i ...` per step with
    /// 1-indexed vertices and self-arcs omitted.
    pub fn to_text(&self) -> String {
        let mut out = format!("{} {}\n", self.n, self.horizon());
        for (t, g) in self.graphs.iter().enumerate() {
            let _ = write!(out, "{t}:");
            for &(from, to) in g.arcs.iter().filter(|(a, b)| a != b) {
                let _ = write!(out, " {}>{}", from + 1, to + 1);
            }
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(k, l)| (k + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let (line, header) = lines.next().ok_or(Error::Parse {
            line: 1,
            msg: "missing `n horizon` header".into(),
        })?;
        let parse_usize = |s: &str, line: usize| {
            s.parse::<usize>().map_err(|_| Error::Parse {
                line,
                msg: format!("expected a nonnegative integer, got `{s}`"),
            })
        };
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 2 {
            return Err(Error::Parse {
                line,
                msg: "header must be `n horizon`".into(),
            });
        }
        let n = parse_usize(fields[0], line)?;
        let horizon = parse_usize(fields[1], line)?;
        if n == 0 {
            return Err(Error::EmptyGraph);
        }
        if horizon == 0 {
            return Err(Error::EmptyHorizon);
        }

        let mut graphs = vec![None; horizon];
        for (line, body) in lines {
            let (t_str, arcs) = body.split_once(':').ok_or(Error::Parse {
                line,
                msg: "expected `t: j>i ...`".into(),
            })?;
            let t = parse_usize(t_str.trim(), line)?;
            if t >= horizon {
                return Err(Error::Parse {
                    line,
                    msg: format!("step {t} beyond horizon {horizon}"),
                });
            }
            let mut g = Digraph::self_loops(n)?;
            for tok in arcs.split_whitespace() {
                let (j, i) = tok.split_once('>').ok_or(Error::Parse {
                    line,
                    msg: format!("malformed arc `{tok}`"),
                })?;
                let (j, i) = (parse_usize(j, line)?, parse_usize(i, line)?);
                if j == 0 || i == 0 {
                    return Err(Error::Parse {
                        line,
                        msg: "vertices are 1-indexed".into(),
                    });
                }
                g.add_arc(j - 1, i - 1)?;
            }
            if graphs[t].replace(g).is_some() {
                return Err(Error::Parse {
                    line,
                    msg: format!("step {t} listed twice"),
                });
            }
        }
        let graphs = graphs
            .into_iter()
            .enumerate()
            .map(|(t, g)| {
                g.ok_or(Error::Parse {
                    line: 0,
                    msg: format!("step {t} missing"),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_graphs(graphs)
    }
}

/// Materializes `horizon` graphs of the given family. Deterministic in
/// `(kind, n, horizon, seed)`.
pub fn generate_sequence(
    kind: &GeneratorKind,
    n: usize,
    horizon: usize,
    seed: u64,
) -> Result<GraphSequence> {
    if n == 0 {
        return Err(Error::EmptyGraph);
    }
    if horizon == 0 {
        return Err(Error::EmptyHorizon);
    }
    let graphs = match kind {
        GeneratorKind::StaticCycle => vec![Digraph::cycle(n)?; horizon],
        GeneratorKind::RotatingArc => (0..horizon)
            .map(|t| Digraph::from_arcs(n, [(t % n, (t + 1) % n)]))
            .collect::<Result<_>>()?,
        GeneratorKind::RandomWalkable {
            arc_probability,
            inject_every,
        } => {
            if !(0.0..=1.0).contains(arc_probability) {
                return Err(Error::Config(format!(
                    "arc_probability {arc_probability} outside [0, 1]"
                )));
            }
            if *inject_every == 0 {
                return Err(Error::Config("inject_every must be at least 1".into()));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(GRAPH_STREAM);
            let cycle = Digraph::cycle(n)?;
            let mut graphs = Vec::with_capacity(horizon);
            for t in 0..horizon {
                let mut g = if t % inject_every == 0 {
                    cycle.clone()
                } else {
                    Digraph::self_loops(n)?
                };
                for from in 0..n {
                    for to in 0..n {
                        // Always draw so the stream position does not depend on injection.
                        let draw: f64 = rng.random();
                        if from != to && draw < *arc_probability {
                            g.add_arc(from, to)?;
                        }
                    }
                }
                graphs.push(g);
            }
            graphs
        }
    };
    Ok(GraphSequence {
        n,
        kind: Some(kind.clone()),
        seed,
        graphs,
    })
}

/// Result of checking uniform strong connectivity over a finite horizon.
///
/// This certifies windows inside the materialized horizon only; it says
/// nothing about graphs beyond it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConnectivityCertificate {
    /// Smallest `L` such that every length-`L` window inside the horizon has
    /// a strongly connected union, if any.
    pub window: Option<usize>,
    /// Number of graphs the certificate covers.
    pub horizon: usize,
}

/// Smallest window length `L` whose every in-horizon window union is strongly
/// connected. `None` if no `L <= horizon` works.
///
/// Finite-horizon certificate only: windows starting late enough that they
/// would run past the horizon are not examined.
pub fn uniform_connectivity_window(seq: &GraphSequence) -> Option<usize> {
    certify_connectivity(seq).window
}

pub fn certify_connectivity(seq: &GraphSequence) -> ConnectivityCertificate {
    let horizon = seq.horizon();
    let n = seq.n;
    // shortest[t]: length of the shortest strongly connected window starting at t.
    // The window end is monotone in t, so a two-pointer sweep with arc counts works.
    let mut counts = vec![0u32; n * n];
    let mut shortest = vec![None; horizon];
    let mut end = 0; // exclusive end of the current window
    let connected =
        |counts: &[u32]| strongly_connected_dense(n, |from, to| counts[from * n + to] > 0);
    for (start, slot) in shortest.iter_mut().enumerate() {
        if end < start {
            end = start;
        }
        while end < horizon && (end == start || !connected(&counts)) {
            for &(from, to) in &seq.graphs[end].arcs {
                counts[from * n + to] += 1;
            }
            end += 1;
        }
        if end > start && connected(&counts) {
            *slot = Some(end - start);
        }
        if end > start {
            for &(from, to) in &seq.graphs[start].arcs {
                counts[from * n + to] -= 1;
            }
        }
    }
    // L works iff every window start t with t + L <= horizon has shortest[t] <= L.
    let window = (1..=horizon).find(|&len| {
        shortest[..=horizon - len]
            .iter()
            .all(|s| matches!(s, Some(l) if *l <= len))
    });
    ConnectivityCertificate { window, horizon }
}
