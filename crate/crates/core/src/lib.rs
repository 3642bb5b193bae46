//! Recurrent autoencoders with sequence-aware context decoding.
//!
//! The crate compares three ways of handing an encoder's context `C` to the
//! decoder of a GRU autoencoder:
//!
//! * **RAE**: `C` repeated at every decoder step,
//! * **RAES**: `C` reshaped into a sequence of `n_X` steps with `λ = n_C/n_X` features,
//! * **RAESC**: a 1-D convolution with `n_Y` filters plus max-pooling over `C`,
//!   transposed so every filter becomes one decoder step.
//!
//! Everything runs on a small tape-based reverse-mode autodiff core
//! ([`Graph`]) that is generic over the element type ([`Scalar`], `f32` or
//! `f64`). The aliases below fix the precision used by the benchmark.

pub mod data;
pub mod error;
pub mod gradcheck;
pub mod graph;
pub mod harness;
pub mod layers;
pub mod models;
pub mod optim;
pub mod scalar;
pub mod tensor;

pub use error::{Error, Result};
pub use graph::{Graph, Var};
pub use scalar::Scalar;
pub use tensor::Tensor;

pub type Tensor64 = Tensor<f64>;
pub type Tensor32 = Tensor<f32>;
pub type Graph64 = Graph<f64>;
pub type Graph32 = Graph<f32>;
pub type Model64 = models::AutoencoderModel<f64>;
pub type Model32 = models::AutoencoderModel<f32>;
pub type Adam64 = optim::AdamState<f64>;
pub type Adam32 = optim::AdamState<f32>;
