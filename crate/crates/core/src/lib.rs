//! Core of the Blockies platform: parametric creature generation, X-ray
//! rendering, the diagnosis advisor, the participant session engine and the
//! reliance metrics/statistics used to analyse study logs.
//!
//! The crate is `no_std` (it needs `alloc`). All floating point math goes
//! through `libm`, so generated datasets, trained models and statistics are
//! bit-identical across platforms. IO, file formats, the HTTP server and the
//! CLI live in the `blockies` companion crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod advisor;
pub mod blocky;
pub mod dataset;
mod error;
pub mod generation;
pub mod hash;
pub mod metrics;
pub mod render;
pub mod rng;
pub mod stats;
pub mod study;

pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
