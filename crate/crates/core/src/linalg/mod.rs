//! Sparse storage and Krylov solvers.

pub mod krylov;
pub mod precond;
pub mod sparse;
pub mod vector;

pub use krylov::{cg, minres, KrylovOptions, LinearSolveReport};
pub use precond::{
    BlockDiagonalPreconditioner, IdentityPreconditioner, InnerCgPreconditioner, JacobiPreconditioner,
    Preconditioner,
};
pub use sparse::{SparseMatrix, TripletBuilder};
