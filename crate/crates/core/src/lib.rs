//! Sentence classification with convolutional networks over one or more
//! word-embedding groups.
//!
//! The crate covers four model variants that share one engine:
//!
//! * `cnn`: a single embedding table, filters of several heights, 1-max
//!   pooling and a softmax classifier;
//! * `ccnn`: the same network over the per-word concatenation of several
//!   embedding tables;
//! * `mg`: independent filter groups per embedding table whose pooled
//!   features are concatenated, with one max-norm bound on the classifier;
//! * `mgnc`: the `mg` network with a separate max-norm bound per group.
//!
//! Everything here is pure computation over owned buffers and only needs
//! `alloc`. File formats, the command line and thread pools live in the
//! companion `mgnc` crate.
//!
//! Randomness comes from [`Rng`], a xoshiro256** generator seeded through
//! SplitMix64, so every run is reproducible from its seed.
#![no_std]

extern crate alloc;

pub mod data;
pub mod embedding;
mod error;
pub mod experiment;
pub mod gradcheck;
pub mod math;
pub mod metrics;
pub mod model;
pub mod optim;
mod real;
pub mod regularization;
mod rng;
pub mod synthetic;
pub mod train;
pub mod vocab;

pub use error::{Error, Result};
pub use real::Real;
pub use rng::Rng;
