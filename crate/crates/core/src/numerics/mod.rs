//! Dense linear algebra, penalty functions, the Adam optimizer, a
//! finite-difference gradient and seeded random streams.

mod adam;
mod linalg;
mod matrix;
mod rng;

pub use adam::AdamState;
pub use linalg::{
    entropy_gradient, entropy_penalty, finite_diff_gradient, nuclear_norm, nuclear_norm_gradient,
    pseudo_inverse, rank, row_softmax, softmax_backward, solve_least_squares, svd, Svd,
    PINV_RELATIVE_CUTOFF,
};
pub use matrix::Matrix;
pub use rng::{derive_rng, Rng};
