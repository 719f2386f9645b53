//! File formats, run configuration, manifests, and the command
//! implementations behind the `mstk` binary.

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;
pub mod pgm;
pub mod tensor_file;
