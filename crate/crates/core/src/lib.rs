//! Simulation and verification tools for networks of linear Hopfield
//! neurons with i.i.d. random couplings and their Gaussian mean-field limit.
//!
//! * [`special_fn`]: `I0`, `I0 - 1` and the double factorial.
//! * [`randomness`]: coupling and initial laws, addressable random streams.
//! * [`finite_network`]: finite-N trajectories from the explicit solution.
//! * [`limit_process`]: limit covariances and exact-in-law limit samplers.
//! * [`word_combinatorics`]: exact finite-N moments by word enumeration.
//! * [`stats`]: estimators and the statistical checks built on them.

pub mod coupling;
pub mod error;
pub mod finite_network;
pub mod limit_process;
pub mod paths;
pub mod quadrature;
pub mod randomness;
pub mod special_fn;
pub mod stats;
pub mod summation;
pub mod word_combinatorics;

pub use coupling::CouplingMatrix;
pub use error::{Error, Result};
pub use finite_network::{ModelParams, TimeGrid, TrajectoryEnsemble};
pub use limit_process::LimitParams;
pub use paths::PathSet;
pub use randomness::{EntryLaw, InitialLaw, MomentTable, SeedSpec, StreamRole};
