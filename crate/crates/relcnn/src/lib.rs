//! Type-aware convolutional relation classifiers for slot filling.
//!
//! The crate bundles:
//! - a minimal dense numerical core with exact reverse-mode gradients
//!   ([`tensor`], [`nn`], [`tape`], [`optim`]),
//! - exact inference for the length-3 entity/relation/entity chain CRF
//!   ([`crf`]),
//! - the five classifier variants (binary, multi-class, pipeline types,
//!   joint typing, structured prediction) with input encoding and the
//!   merged slot schema ([`schema`], [`encode`], [`model`]),
//! - dataset handling: loading, negative cleaning, subsampling,
//!   self-training selection and a synthetic corpus generator ([`dataset`],
//!   [`selftrain`], [`synth`], [`embed`]),
//! - training, threshold tuning, grid search and slot-wise evaluation
//!   ([`train`], [`eval`], [`grid`], [`config`]),
//! - slot-filler output selection and location inference ([`postproc`]).

pub mod config;
pub mod crf;
pub mod dataset;
pub mod embed;
pub mod encode;
pub mod error;
pub mod eval;
pub mod grid;
pub mod model;
pub mod nn;
pub mod optim;
pub mod postproc;
pub mod rng;
pub mod schema;
pub mod selftrain;
pub mod synth;
pub mod tape;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::Tensor2;
