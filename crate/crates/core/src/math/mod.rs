//! Dense vectors and matrices, differentiable ops with hand-written
//! backward passes, a seeded RNG and a finite-difference gradient checker.

pub mod gradcheck;
pub mod ops;
mod rng;
mod tensor;

pub use gradcheck::{grad_check, numeric_gradient, GradCheckReport, DEFAULT_EPS};
pub use ops::{axpy, dot, hadamard, matvec, sigmoid, softmax, tanh};
pub use rng::Rng;
pub use tensor::{Matrix, Vector};
