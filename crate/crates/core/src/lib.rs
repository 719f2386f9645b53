//! Stroke-controlled diffusion toolkit: core algorithms.
//!
//! Everything in this crate is pure computation over owned buffers; file
//! formats, configuration, and the command-line front end live in the
//! companion `mstk` crate. The crate is `no_std` (alloc required) so the
//! numeric core stays free of platform dependencies.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod denoiser;
pub mod diagnostics;
pub mod diffusion;
pub mod error;
mod linalg;
pub mod oracles;
pub mod rng;
pub mod sampler;
pub mod stroke;
pub mod surrogate;
pub mod tensor;
pub mod verify;

pub use error::{Error, Result};
pub use stroke::{RoughnessSchedule, StrokeOperator};
pub use tensor::ImageTensor;
