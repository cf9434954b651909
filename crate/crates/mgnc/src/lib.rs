//! File formats, configuration and the command-line front end for
//! `mgnc-core`.

pub mod checkpoint;
pub mod cli;
mod commands;
pub mod config;
pub mod corpus;
pub mod embeddings_io;
mod error;
pub mod output;
pub mod parallel;
pub mod pipeline;

pub use error::{Error, Result};
