//! Curriculum neural architecture search at desk scale.
//!
//! The search space is a cell DAG whose candidate operation set grows one
//! operation per stage. A factorized categorical controller is trained with
//! entropy-regularized REINFORCE against pluggable reward oracles that
//! stand in for trained-network accuracy.

pub mod cell_space;
pub mod curriculum;
pub mod error;
pub mod harness;
pub mod policy;
pub mod reward;

pub use cell_space::{Architecture, Edge, OperationSpec, SearchSpaceStage, SpaceShape};
pub use error::{Error, Result};
pub use policy::{Baseline, FactorizedPolicy, PolicyUpdateConfig};
pub use reward::{
    Oracle, PlantedLandscape, PlantedParams, RewardOracle, SupernetParams, SurrogateSupernet, TabularOracle,
};
