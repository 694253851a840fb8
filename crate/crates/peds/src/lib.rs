//! Data generation, datasets, checkpoints, experiments and the CLI on top
//! of `peds-core`.

pub mod al;
pub mod checkpoint;
pub mod dataset;
pub mod error;
pub mod exec;
pub mod experiment;
pub mod trainlog;

pub use error::{Error, Result};
pub use peds_core;
