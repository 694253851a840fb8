//! Physics-enhanced deep surrogates.
//!
//! A surrogate in this crate is a small neural generator whose output grid is
//! blended with a sub-pixel-averaged coarse rasterization of the geometry and
//! then pushed through a cheap finite-difference solver:
//!
//! ```text
//! prediction(p) = lf_solve( project( w * generator(p) + (1 - w) * downsample(p) ) )
//! ```
//!
//! Everything needed to train that composition end to end lives here: the
//! parameterized hole-array geometries ([`geometry`]), a banded sparse LU
//! ([`linalg`]), the diffusion / reaction-diffusion / Helmholtz solvers with
//! their adjoints ([`solvers`]), hand-written MLPs with Adam ([`neural`]), the
//! composed model and ensembles ([`peds`]) and the training and active
//! learning loops ([`training`]).
//!
//! The crate is `no_std` and only needs `alloc`. File formats, timing and the
//! command line live in the `peds` companion crate.
#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod error;
pub mod exec;
pub mod geometry;
pub mod linalg;
pub mod metrics;
pub mod neural;
pub mod peds;
pub mod solvers;
pub mod training;

mod math;

pub use error::{Error, Result};

pub use geometry::{Family, GeometryParams, MaterialGrid, ProjectionConfig};
pub use linalg::Complex;
