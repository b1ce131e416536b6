//! Sparse storage, direct solves and the eigensolver.

pub mod lanczos;
pub mod skyline;
pub mod sparse;

pub use lanczos::{pencil_residual, smallest_eigenpairs, EigOptions, EigPair};
pub use skyline::{solve_refined, SkylineCholesky};
pub use sparse::{CsrMatrix, FactorRow, SymBuilder};
