//! Std companion of `anodiss-core`: spectral grid fields, the
//! advection–diffusion solver and its checks, stochastic-flow ensembles,
//! file formats, configuration, pipelines and reports.

pub use anodiss_core as core;

pub mod ensemble;
pub mod config;
pub mod error;
pub mod fields;
pub mod initial;
pub mod io;
pub mod ns3d;
pub mod pde_checks;
pub mod pipeline;
pub mod report;
pub mod solver;
pub mod spectral;

pub use error::{Error, Result};
