//! Dual-mixed finite element solver for stationary 2D viscoplastic flows
//! with yield (Herschel-Bulkley, Casson, Carreau with yield).
//!
//! The weak formulation keeps strain, stress, velocity, vorticity, pressure,
//! a plastic multiplier and a trace constraint as independent unknowns in a
//! twofold saddle-point system. The plastic term is Huber-regularized and
//! the discrete system is solved by a semismooth Newton method with an
//! active-set structure and a multiplier projection.
//!
//! Discretization (lowest order): discontinuous P1 tensors for strain and
//! multiplier, H(div) tensors with BDM rows for the stress, piecewise
//! constants for velocity, vorticity and pressure, and one global scalar
//! for the trace constraint.

pub mod assembly;
pub mod cases;
pub mod error;
pub mod fem;
pub mod linalg;
pub mod mesh;
pub mod rheology;
pub mod solver;
pub mod tensor;
mod threads;
pub mod verify;
pub mod vtk;

pub use assembly::{ProblemData, State};
pub use error::{Error, Result};
pub use mesh::Mesh;
pub use rheology::{Law, ModelParams};
pub use solver::{InitStrategy, SolveReport, SsnConfig};
