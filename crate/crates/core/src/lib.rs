//! Adaptively scaled recurrent networks.
//!
//! At every timestep the recurrent cell reads a wavelet-filtered view of its
//! input history instead of the raw frame. The filter is a dilated causal Haar
//! kernel whose dilation `2^j` is chosen per step by a Gumbel-Softmax sampler
//! driven by the previous hidden state and the current frame. The crate
//! contains everything needed to train such cells end to end:
//!
//! - [`graph`]: a small define-by-run reverse-mode differentiation engine over
//!   dense `f64` matrices, where columns index examples of a batch.
//! - [`wavelet`]: the Haar bank and the dilated causal convolution.
//! - [`sampler`]: scale logits, Gumbel noise and the relaxed categorical sample.
//! - [`cells`]: LSTM/GRU cells in adaptive, fixed-scale and vanilla modes.
//! - [`trainer`]: RMSProp, the training loop, evaluation and scale statistics.
//! - [`tasks`] / [`dataset`]: synthetic benchmark generators and their binary format.
//! - [`config`], [`checkpoint`], [`compare`], [`cli`]: experiment plumbing.

pub mod cells;
pub mod checkpoint;
pub mod cli;
pub mod compare;
pub mod config;
pub mod dataset;
pub mod error;
pub mod graph;
pub mod rng;
pub mod sampler;
pub mod tasks;
pub mod tensor;
pub mod trainer;
pub mod wavelet;

pub use error::{Error, Result};
pub use graph::{Graph, NodeId};
pub use rng::RngStream;
pub use tensor::Tensor;
