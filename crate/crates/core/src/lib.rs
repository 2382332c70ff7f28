//! Reconstruction of networked dynamical systems from mean-field measurements.
//!
//! The pipeline: pinch one node at a time with a localized pulse, evolve the
//! network one (or more) steps, observe only `P < N` linear combinations of
//! the node states, recover the sparse states by l1 minimization, and read the
//! adjacency matrix off the recovered supports. A second stage fits each
//! node's local update rule from the recovered trajectories.

pub mod dynamics;
pub mod error;
pub mod experiments;
pub mod graph;
pub mod measurement;
pub mod metrics;
pub mod recovery;
pub mod scalar;
pub mod sysid;
pub mod topology;

pub use error::{Error, Result};
pub use graph::Graph;
pub use scalar::Real;

/// Concrete 64-bit aliases; the experiment pipeline and CLI use these.
pub type StateVector64 = dynamics::StateVector<f64>;
pub type Trajectory64 = dynamics::Trajectory<f64>;
pub type NetworkSystem64 = dynamics::NetworkSystem<f64>;
pub type MeasurementMatrix64 = measurement::MeasurementMatrix<f64>;
pub type MeanFieldSet64 = measurement::MeanFieldSet<f64>;
pub type RecoveryConfig64 = recovery::RecoveryConfig<f64>;
pub type RecoveryResult64 = recovery::RecoveryResult<f64>;

