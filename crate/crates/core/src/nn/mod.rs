//! Small dense numerical kernel: matrices, activations, Adam and a
//! finite-difference gradient checker.

mod activation;
mod adam;
mod gradcheck;
mod matrix;
mod params;

pub use activation::{relu, sigmoid, softmax, softmax_in_place, tanh};
pub use adam::{adam_step, AdamConfig};
pub use gradcheck::{grad_check, relative_error, GradCheckConfig, GradCheckReport, ParamCheck};
pub use matrix::{axpy, dot, Matrix};
pub use params::{Grads, Param, ParamId, ParamStore, PARAM_FORMAT_VERSION};
