//! Core algorithms for desk-scale radiology-style report generation.
//!
//! Everything in this crate is pure computation over in-memory data: a small
//! reverse-mode tensor engine, a patch-based encoder/decoder transformer with
//! optional multi-view fusion and a multi-label classification head, a
//! length-based curriculum sampler, a synthetic study generator with an
//! invertible rule labeler, NLG and clinical-accuracy metrics, and post-hoc
//! analyses. File formats, checkpointing and the command-line surface live in
//! the companion `radgen-cli` crate.
//!
//! The crate is `no_std`-compatible (it requires `alloc`); the `std` feature
//! (on by default) only adds `std::error::Error` impls for the error types.
//! All transcendental math goes through `libm` so results are bit-stable
//! across platforms.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod analysis;
pub mod curriculum;
pub mod data;
pub mod fmath;
pub mod metrics;
pub mod model;
pub mod optim;
pub mod rng;
pub mod synth;
pub mod tensor;
pub mod text;
pub mod training;

pub use tensor::{Graph, TensorError, TensorId};
