//! Experiment configuration, read from and written to TOML.
//!
//! ```toml
//! seed = 7
//! steps = 400
//! dimension = 1
//!
//! [graph]
//! kind = "random-walkable"   # static-cycle | rotating-arc | random-walkable | file
//! n = 5
//! arc_probability = 0.2      # random-walkable only; default 0.2
//! inject_every = 5           # random-walkable only; default 5
//!
//! [weights]
//! rule = "uniform-out-degree" # or "custom" with `path`
//!
//! [objective]
//! box = [-10.0, 10.0]        # G is certified on this cube
//! terms = [{ kind = "l1", center = [0.0] }, ...]   # one per agent
//!
//! [schedule]
//! kind = "fixed-horizon"     # harmonic | polynomial | fixed-horizon | constant
//! horizon = 400
//!
//! [initial]
//! kind = "uniform"           # or "explicit" with `x = [[...], ...]`
//! lo = -5.0
//! hi = 5.0
//!
//! [bounds]
//! enabled = true
//! mass_term = "as-printed"   # or "sum-of-norms"
//! ```
//!
//! Unknown keys are rejected. Relative paths resolve against the directory
//! of the config file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bounds::MassTerm;
use crate::error::{Error, Result};
use crate::graph::{GeneratorKind, DEFAULT_ARC_PROBABILITY, DEFAULT_INJECT_EVERY};
use crate::subgradient::{LocalObjective, StepsizeSchedule};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub seed: u64,
    /// Number of iterations `T`; the graph sequence has this horizon.
    pub steps: usize,
    pub dimension: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    pub graph: GraphSpec,
    #[serde(default)]
    pub weights: WeightSpec,
    pub objective: ObjectiveSpec,
    pub schedule: StepsizeSchedule,
    pub initial: InitialSpec,
    #[serde(default)]
    pub bounds: BoundsSpec,
    /// Directory relative paths resolve against.
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

fn default_arc_probability() -> f64 {
    DEFAULT_ARC_PROBABILITY
}

fn default_inject_every() -> usize {
    DEFAULT_INJECT_EVERY
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum GraphSpec {
    StaticCycle {
        n: usize,
    },
    RotatingArc {
        n: usize,
    },
    RandomWalkable {
        n: usize,
        #[serde(default = "default_arc_probability")]
        arc_probability: f64,
        #[serde(default = "default_inject_every")]
        inject_every: usize,
    },
    /// A sequence in the line-oriented text format.
    File { path: PathBuf },
}

impl GraphSpec {
    /// Generator and vertex count, or `None` for a file source.
    pub fn generator(&self) -> Option<(GeneratorKind, usize)> {
        match *self {
            GraphSpec::StaticCycle { n } => Some((GeneratorKind::StaticCycle, n)),
            GraphSpec::RotatingArc { n } => Some((GeneratorKind::RotatingArc, n)),
            GraphSpec::RandomWalkable {
                n,
                arc_probability,
                inject_every,
            } => Some((
                GeneratorKind::RandomWalkable {
                    arc_probability,
                    inject_every,
                },
                n,
            )),
            GraphSpec::File { .. } => None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "kebab-case", deny_unknown_fields)]
pub enum WeightSpec {
    #[default]
    UniformOutDegree,
    /// Dense matrices: one block used at every step, or one block per step.
    Custom { path: PathBuf },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectiveSpec {
    #[serde(rename = "box")]
    pub region: [f64; 2],
    /// Declared subgradient bound; must not undercut the certified one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g_bound: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub optimum: Option<Vec<f64>>,
    /// One local objective per agent.
    pub terms: Vec<LocalObjective>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InitialSpec {
    /// Independent uniform draws in `[lo, hi]` from the seeded generator.
    Uniform { lo: f64, hi: f64 },
    /// Row `i` is `x_i(0)`.
    Explicit { x: Vec<Vec<f64>> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BoundsSpec {
    pub enabled: bool,
    pub mass_term: MassTerm,
}

impl Default for BoundsSpec {
    fn default() -> Self {
        Self {
            enabled: true,
            mass_term: MassTerm::AsPrinted,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut config = Self::from_toml(&text)?;
        config.base_dir = path.parent().map(Path::to_path_buf);
        Ok(config)
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        match &self.base_dir {
            Some(base) if path.is_relative() => base.join(path),
            _ => path.to_path_buf(),
        }
    }

    /// Vertex count, when the graph source declares it.
    pub fn declared_n(&self) -> Option<usize> {
        self.graph.generator().map(|(_, n)| n)
    }

    pub fn label(&self) -> String {
        self.name.clone().unwrap_or_else(|| {
            let graph = match &self.graph {
                GraphSpec::File { path } => format!("file:{}", path.display()),
                other => other.generator().map(|(k, n)| format!("{}(n={n})", k.name())).unwrap_or_default(),
            };
            format!("{graph} {} seed={}", self.schedule.label(), self.seed)
        })
    }

    /// Structural checks that need no files.
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.steps == 0 {
            return fail("steps must be at least 1".into());
        }
        if self.dimension == 0 {
            return fail("dimension must be at least 1".into());
        }
        if let Some(n) = self.declared_n() {
            if n == 0 {
                return fail("graph.n must be at least 1".into());
            }
            if self.objective.terms.len() != n {
                return fail(format!("objective has {} terms for {n} agents", self.objective.terms.len()));
            }
        }
        if let GraphSpec::RandomWalkable {
            arc_probability,
            inject_every,
            ..
        } = self.graph
        {
            if !(0.0..=1.0).contains(&arc_probability) || inject_every == 0 {
                return fail("random-walkable needs arc_probability in [0, 1] and inject_every >= 1".into());
            }
        }
        if let StepsizeSchedule::FixedHorizon { horizon } = self.schedule {
            if horizon != self.steps {
                return fail(format!("fixed-horizon T = {horizon} differs from steps = {}", self.steps));
            }
        }
        let [lo, hi] = self.objective.region;
        if !(lo < hi) {
            return fail(format!("objective box [{lo}, {hi}] is empty"));
        }
        match &self.initial {
            InitialSpec::Uniform { lo: a, hi: b } => {
                if !(a <= b) || *a < lo || *b > hi {
                    return fail(format!("initial range [{a}, {b}] must lie inside the box [{lo}, {hi}]"));
                }
            }
            InitialSpec::Explicit { x } => {
                if let Some(n) = self.declared_n() {
                    if x.len() != n {
                        return fail(format!("initial x has {} rows for {n} agents", x.len()));
                    }
                }
                if x.iter().any(|row| row.len() != self.dimension) {
                    return fail(format!("every initial row needs {} entries", self.dimension));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const SAMPLE: &str = r#"
seed = 11
steps = 100
dimension = 1

[graph]
kind = "random-walkable"
n = 3

[objective]
box = [-10.0, 10.0]
terms = [
  { kind = "l1", center = [0.0] },
  { kind = "l1", center = [1.0] },
  { kind = "l1", center = [2.0] },
]

[schedule]
kind = "harmonic"
a = 1.0

[initial]
kind = "uniform"
lo = -5.0
hi = 5.0
"#;

    #[test]
    fn parses_with_defaults() {
        let c = ExperimentConfig::from_toml(SAMPLE).unwrap();
        assert_eq!(
            c.graph,
            GraphSpec::RandomWalkable {
                n: 3,
                arc_probability: 0.2,
                inject_every: 5
            }
        );
        assert_eq!(c.weights, WeightSpec::UniformOutDegree);
        assert!(c.bounds.enabled);
    }

    #[test]
    fn round_trip_is_byte_identical() {
        let c = ExperimentConfig::from_toml(SAMPLE).unwrap();
        let text = c.to_toml().unwrap();
        let again = ExperimentConfig::from_toml(&text).unwrap();
        assert_eq!(again, c);
        assert_eq!(again.to_toml().unwrap(), text);
    }

    #[test]
    fn unknown_keys_are_errors() {
        for (from, to) in [
            ("seed = 11", "seed = 11\nsed = 3"),
            ("n = 3", "n = 3\nnn = 1"),
            ("a = 1.0", "a = 1.0\nb = 2.0"),
            ("hi = 5.0", "hi = 5.0\nmid = 0.0"),
            ("center = [0.0] }", "center = [0.0], scale = 1.0 }"),
        ] {
            let text = SAMPLE.replacen(from, to, 1);
            assert!(matches!(ExperimentConfig::from_toml(&text), Err(Error::Config(_))), "{to}");
        }
        let text = format!("{SAMPLE}\n[bounds]\nenable = true\n");
        assert!(ExperimentConfig::from_toml(&text).is_err());
    }

    #[test]
    fn structural_errors() {
        let bad = SAMPLE.replace("steps = 100", "steps = 0");
        assert!(ExperimentConfig::from_toml(&bad).is_err());
        let bad = SAMPLE.replace("kind = \"harmonic\"\na = 1.0", "kind = \"fixed-horizon\"\nhorizon = 50");
        assert!(ExperimentConfig::from_toml(&bad).is_err());
        let bad = SAMPLE.replace("n = 3", "n = 4");
        assert!(ExperimentConfig::from_toml(&bad).is_err());
        let bad = SAMPLE.replace("hi = 5.0", "hi = 50.0");
        assert!(ExperimentConfig::from_toml(&bad).is_err());
    }
}
