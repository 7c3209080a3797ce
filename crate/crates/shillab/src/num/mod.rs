//! Minimal dense numeric kernel: matrices, activations, a seeded PRNG, a
//! parameter store with Adam, and a finite-difference gradient checker.

pub mod gradcheck;
pub mod matrix;
pub mod params;
pub mod rng;

pub use gradcheck::{grad_check, GradCheckReport};
pub use matrix::{
    l2_normalize, log_sigmoid, log_softmax_rows, relu, sigmoid, softmax_rows, DenseMatrix,
};
pub use params::{sha256_hex, AdamConfig, Init, ParamStore};
pub use rng::{derive_seed, Rng};
