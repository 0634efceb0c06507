//! Dense numeric substrate: matrices, layers with explicit backward passes,
//! Adam, a seeded generator and a finite-difference gradient checker.

mod adam;
pub mod gradcheck;
pub mod layers;
mod loss;
mod matrix;
mod rng;

pub use adam::{AdamConfig, AdamState};
pub use gradcheck::{grad_check, GradCheckOptions, GradCheckReport};
pub use layers::{glorot_uniform, Dropout, Linear, LogSoftmax, ParamTensor, Params, Relu};
pub use loss::{nll_loss, weighted_nll, LossGrad};
pub use matrix::{dot, Matrix};
pub use rng::{derive_seed, Rng};
