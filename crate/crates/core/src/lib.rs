//! Push-sum averaging and push-subgradient optimization over time-varying
//! directed graphs.

// `!(a < b)` also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod error;
pub mod graph;
pub mod harness;
pub mod pushsum;
mod serde_float;
pub mod subgradient;
pub mod weights;

pub use bounds::{BoundConstants, BoundInputs, BoundTerms, MassTerm, RateFit};
pub use error::{Error, Result};
pub use graph::{ConnectivityCertificate, Digraph, GeneratorKind, GraphSequence};
pub use harness::{ExperimentConfig, RunOutput, SummaryReport};
pub use pushsum::{Contraction, NetworkState, SMatrix, TheoryConstants};
pub use subgradient::{BoxRegion, LocalObjective, Objective, RunTrace, StepsizeSchedule};
pub use weights::{WeightMatrix, WeightRule};
