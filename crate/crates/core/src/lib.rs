//! Randomized Kaczmarz-type solvers and their sketch-and-project analysis.
//!
//! The crate is organised bottom-up:
//!
//! * [`linalg`]: dense primitives, SVD, least-squares references and projections.
//! * [`sampling`]: row/column distributions and seeded index streams.
//! * [`solvers`]: RK, REK and SAP-REK(ε) updates in closed form, plus the run loop.
//! * [`sap`]: the generic sketch-and-project machinery on the saddle-point embedding.
//! * [`rates`]: convergence-rate formulas and their brute-force counterparts.
//! * [`experiments`]: matrix ensembles, multi-trial runs and CSV output.
//!
//! Matrices are [`nalgebra::DMatrix<f64>`]; the iterate pair is stacked as `(z; x)`
//! with `z ∈ R^m` first, matching the embedded system `[Aᵀ 0; I A](z; x) = (0; b)`.

pub mod error;
pub mod experiments;
pub mod linalg;
pub mod oracle;
pub mod rates;
pub mod sampling;
pub mod sap;
pub mod solvers;

pub use error::{Error, Result};
pub use linalg::{DenseMatrix, LinearSystem, SvdResult, Vector};
pub use sampling::{DiscreteDistribution, SeededStream};
pub use solvers::{Method, MethodConfig, SolverState, TrialRecord};
