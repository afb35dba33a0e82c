//! Implicit-equation solving: banded linear algebra and Newton iteration.
//!
//! The implicit stage equations of every scheme in this crate reduce to
//! nonlinear systems whose Jacobians are narrow bands (half-bandwidth 1 to 3),
//! possibly with periodic wraparound corners. [`band`] provides the matrix
//! type and factorizations; [`newton`] drives the iteration.

pub mod band;
pub mod newton;

pub use band::{banded_lu_solve, BandShape, BandedLu, BandedMatrix, DenseLu, LinalgError};
pub use newton::{
    fd_jacobian, newton_solve, JacobianMode, NewtonSolution, SolverError, SolverOptions,
};
