//! Deterministic federated-learning simulation core.
//!
//! Everything in this crate is pure computation over in-memory values and
//! builds without `std` (an allocator is required). File formats, the
//! experiment runner and the thread-pool executor live in the `fedlab`
//! companion crate.
//!
//! The main pieces:
//!
//! - [`nn`]: a small dense network engine (forward pass, cross-entropy,
//!   backpropagation, momentum SGD) with encoder/classifier surgery.
//! - [`data`]: datasets, the synthetic blob generator and the label-skew
//!   partitioners.
//! - [`cluster`]: label distributions (counted, inferred from a model, or
//!   Laplace-noised) and K-means with elbow selection and size balancing.
//! - [`engine`]: local training, weighted averaging, the FedAvg/FedProx loop
//!   and the cluster / average / concatenate pipeline ([`engine::run_fedconcat`]).
//! - [`analysis`]: communication cost model, averaging-degradation tracker and
//!   linear probes on frozen encoders.

#![cfg_attr(not(test), no_std)]
#![deny(unsafe_code)]
#![warn(missing_debug_implementations)]

extern crate alloc;

pub mod analysis;
pub mod cluster;
pub mod data;
pub mod engine;
mod error;
pub mod math;
mod matrix;
pub mod metrics;
pub mod nn;

pub use error::{Error, Result};
pub use matrix::Matrix;
