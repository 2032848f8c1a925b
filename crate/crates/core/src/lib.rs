//! Two-group model for large-scale multiple testing whose alternative is a
//! weighted ("non-local") density vanishing at the origin.
//!
//! The crate covers weight functions and their normalizing constants, a
//! numerical oracle for operating characteristics, parametric and
//! stick-breaking Gibbs samplers, BFDR-controlled post-processing and a
//! simulation harness.

pub mod error;
pub mod inference;
pub mod io;
pub mod numerics;
pub mod sampler;
pub mod simulation;
pub mod slice;
pub mod theory;
pub mod weightcore;

pub use error::{NollikError, Result};
pub use inference::{BnpDensity, DensityGrid, DiscoveryReport, Summary, Threshold};
pub use io::{Dataset, SourceKind};
pub use sampler::bnp::{run_chain_bnp, BnpHyperparameters};
pub use sampler::parametric::{run_chain, run_grouped, GroupedTrace, Hyperparameters};
pub use sampler::{ChainTrace, Controls, DrawRecord, ModelKind};
pub use simulation::{ConfusionMetrics, LabeledSample, Method, ScenarioId, ScenarioSpec};
pub use theory::{AcceptanceRegion, TheoryOracle, TwoGroupSpec};
pub use weightcore::{GaussianComponent, MixtureDensity, WeightFunction, WeightKind, WeightedKernel};
