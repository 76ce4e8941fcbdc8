//! Noisy classical shadows.
//!
//! Simulation toolkit for randomized-measurement ("classical shadow")
//! tomography when the measurement itself is affected by a known noise
//! channel. It covers channel algebra, unitary ensembles and twirls, shadow
//! channel construction and inversion, median-of-means estimation, shadow
//! seminorms and sample-complexity planning, together with brute-force
//! oracles for every closed form at one to four qubits.

pub mod channels;
pub mod ensembles;
pub mod error;
pub mod estimator;
pub mod identities;
pub mod linalg;
pub mod pauli;
pub mod planner;
pub mod registry;
pub mod seminorm;
pub mod shadow;

pub use channels::{ChannelDescriptor, QuantumChannel, Superoperator};
pub use ensembles::{EnsembleDescriptor, UnitaryEnsemble};
pub use error::{Result, ShadowError};
pub use linalg::{DenseOperator, DensityMatrix, HermitianObservable, C64};
pub use pauli::PauliString;
pub use shadow::{ShadowChannel, ShadowProtocol, ShadowSet, Snapshot};
