//! Dense linear algebra, symmetric eigensolvers and the seeded PRNG.

mod eigen;
mod matrix;
mod rng;

pub use eigen::{sym_eigen, sym_eigenvalues, SymEigen, SYMMETRY_TOL};
pub use matrix::{dot, squared_distance, Matrix};
pub use rng::{shuffled_indices, Rng};
