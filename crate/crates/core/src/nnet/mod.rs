//! Numerical substrate: dense matrices, ReLU MLPs with manual backprop,
//! softmax cross-entropy, momentum SGD with cosine annealing, and a
//! finite-difference gradient oracle.

mod gradcheck;
mod loss;
mod matrix;
mod mlp;
mod optim;

pub use gradcheck::{finite_diff_grad, max_relative_error, DEFAULT_STEP};
pub use loss::{
    cross_entropy, one_hot, per_example_cross_entropy, softmax, softmax_cross_entropy_grad,
    softmax_in_place, softmax_vec, LOG_CLAMP,
};
pub use matrix::{argmax, Matrix};
pub use mlp::{Backward, Gradients, Mlp, Tape};
pub use optim::{cosine_lr, sgd_step, OptConfig, SgdState};


