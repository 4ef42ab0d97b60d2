//! Regularized modified basis pursuit denoising (reg-mod-BPDN): recovery of
//! sparse signals from noisy linear measurements given partial support and
//! signal value knowledge, with computable reconstruction error bounds.

pub mod linalg;
pub mod model;
pub mod operators;
pub mod rng;
pub mod bounds;
pub mod solvers;
pub mod dynamic;
pub mod harness;
