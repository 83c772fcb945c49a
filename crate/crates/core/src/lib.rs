//! Broadband raypath direction estimation for vertical line arrays.
//!
//! Snapshots from a uniform vertical array are turned into a focused
//! spectral matrix, its signal subspace is lifted onto an angle grid and a
//! nonnegative sparse program picks out the arrival angles. MUSIC, CBF,
//! BPDN and reweighted ℓ1 are provided for comparison.

pub mod baselines;
pub mod bench;
pub mod error;
pub mod estimate;
pub mod linalg;
pub mod model;
pub mod scenario;
pub mod simulator;
pub mod solvers;
pub mod spectral;
pub mod subspace;

pub type C64 = nalgebra::Complex<f64>;

pub use error::{Error, Result};
pub use estimate::{Algorithm, Estimator, EstimatorConfig};
pub use model::{build_dictionary, steering_vector, AngleGrid, ArrayGeometry, Raypath, RaypathSet, SteeringDictionary};
