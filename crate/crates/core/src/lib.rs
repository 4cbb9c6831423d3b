//! Stochastic alignment dynamics on the circle: particle simulation, the
//! closed-form pair correlation of the noisy-leader model, the large-N
//! hierarchy equations and the finite-N master equations.

pub mod ensemble;
pub mod estimators;
pub mod grid;
pub mod hierarchy;
pub mod master;
pub mod oracle;
pub mod particle;
pub mod torus;

pub use ensemble::{ensemble_marginals, EnsembleResult, EnsembleSummary};
pub use estimators::{Histogram1D, Histogram2D, Metrics};
pub use grid::GridField;
pub use hierarchy::PdeParams;
pub use master::{MasterDynamics, MasterField, MasterKernel};
pub use oracle::{CorrelationParams, FourierMarginal};
pub use particle::{
    DynamicsConfig, DynamicsKind, EnsembleState, RunDiagnostics, SimError, StopReason,
};
pub use torus::{BiasModel, NoiseModel, Phase, TorusError};
