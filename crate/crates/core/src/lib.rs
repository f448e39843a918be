//! `no_std` core of the anodiss toolkit: the parameter recursion for the
//! branching-pipe construction, closed-form analytic velocity fields, the
//! pipe tree and its distinguished sets, and seeded SDE kernels.
//!
//! Everything here is allocation-only (`alloc`); file formats, FFTs,
//! threading and the command line live in the `anodiss` crate.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod error;
pub mod geom;
pub mod logspace;
pub mod params;
pub mod patch;
pub mod block;
pub mod bq;
pub mod tree;
pub mod curve;
pub mod sde;

pub use error::{CoreError, Result};
