//! Per-family property solvers: flux `kappa` for the diffusion families,
//! `(Re t, Im t)` for the metasurface cell.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::diffusion::{diffusion_vjp_with, solve_diffusion, DiffusionProblem};
use super::helmholtz::{omega_for_wavelength, FdfdSolver, Stencil};
use super::reaction::{solve_reaction_diffusion, ReactionDiffusionProblem};
use crate::geometry::{rasterize, Family, GeometryParams, GridShape, MaterialGrid, Physics, MAXWELL_WAVELENGTHS};
use crate::{Error, Result};

fn fdfd_bank(shape: GridShape, resolution: usize, stencil: Stencil) -> Result<Vec<FdfdSolver>> {
    MAXWELL_WAVELENGTHS
        .iter()
        .map(|&lambda| {
            FdfdSolver::with_stencil(
                shape.nx,
                shape.cell_size_x,
                shape.cell_size_y,
                shape.ny,
                omega_for_wavelength(lambda),
                resolution,
                stencil,
            )
        })
        .collect()
}

fn pick<'a>(bank: &'a [FdfdSolver], freq: Option<usize>) -> Result<&'a FdfdSolver> {
    freq.and_then(|k| bank.get(k))
        .ok_or_else(|| Error::InvalidParams(format!("frequency index {freq:?} not available")))
}

/// The cheap solver at the end of a surrogate. For the reaction–diffusion
/// families it drops the reaction term.
#[derive(Debug, Clone)]
pub struct LowFidelity {
    family: Family,
    resolution: usize,
    shape: GridShape,
    fdfd: Vec<FdfdSolver>,
}

impl LowFidelity {
    pub fn new(family: Family, resolution: usize) -> Result<Self> {
        Self::with_stencil(family, resolution, Stencil::Second)
    }

    pub fn with_stencil(family: Family, resolution: usize, stencil: Stencil) -> Result<Self> {
        let shape = family.grid_shape(resolution)?;
        let fdfd = if family.is_maxwell() {
            fdfd_bank(shape, resolution, stencil)?
        } else {
            Vec::new()
        };
        Ok(LowFidelity {
            family,
            resolution,
            shape,
            fdfd,
        })
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn shape(&self) -> GridShape {
        self.shape
    }

    fn check(&self, grid: &MaterialGrid) -> Result<()> {
        if grid.shape() != self.shape {
            return Err(Error::Shape(format!(
                "grid {}x{} does not match low-fidelity {}x{}",
                grid.nx, grid.ny, self.shape.nx, self.shape.ny
            )));
        }
        Ok(())
    }

    pub fn evaluate(&self, grid: &MaterialGrid, freq: Option<usize>) -> Result<Vec<f64>> {
        self.check(grid)?;
        if self.family.is_maxwell() {
            let t = pick(&self.fdfd, freq)?.transmission(grid)?;
            Ok(vec![t.re, t.im])
        } else {
            Ok(vec![solve_diffusion(&DiffusionProblem::new(grid.clone()))?.kappa])
        }
    }

    /// Property and gradient of `cotangent · property` with respect to the
    /// grid values.
    pub fn vjp(&self, grid: &MaterialGrid, freq: Option<usize>, cotangent: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        self.vjp_with(grid, freq, |_| cotangent.to_vec())
    }

    /// As [`vjp`](Self::vjp), with the cotangent computed from the property.
    pub fn vjp_with<F: FnOnce(&[f64]) -> Vec<f64>>(
        &self,
        grid: &MaterialGrid,
        freq: Option<usize>,
        seed: F,
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        self.check(grid)?;
        let dim = self.family.target_dim();
        let mut bad = None;
        let checked = |v: &[f64]| {
            let c = seed(v);
            if c.len() != dim {
                bad = Some(c.len());
                return vec![0.0; dim];
            }
            c
        };
        let out = if self.family.is_maxwell() {
            let (t, g) = pick(&self.fdfd, freq)?.vjp_with(grid, |t| {
                let c = checked(&[t.re, t.im]);
                [c[0], c[1]]
            })?;
            (vec![t.re, t.im], g)
        } else {
            let (sol, g) = diffusion_vjp_with(&DiffusionProblem::new(grid.clone()), |k| checked(&[k])[0])?;
            (vec![sol.kappa], g)
        };
        if let Some(got) = bad {
            return Err(Error::Shape(format!("cotangent has {got} entries, property has {dim}")));
        }
        Ok(out)
    }
}

/// Reference solver that produces training targets.
#[derive(Debug, Clone)]
pub struct HighFidelity {
    family: Family,
    resolution: usize,
    fdfd: Vec<FdfdSolver>,
}

impl HighFidelity {
    pub fn new(family: Family, resolution: usize) -> Result<Self> {
        let shape = family.grid_shape(resolution)?;
        let fdfd = if family.is_maxwell() {
            fdfd_bank(shape, resolution, Stencil::Fourth)?
        } else {
            Vec::new()
        };
        Ok(HighFidelity {
            family,
            resolution,
            fdfd,
        })
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn evaluate(&self, p: &GeometryParams) -> Result<Vec<f64>> {
        if p.family != self.family {
            return Err(Error::InvalidParams(format!(
                "{} parameters given to a {} solver",
                p.family, self.family
            )));
        }
        p.validate()?;
        let grid = rasterize(p, self.resolution)?;
        match self.family.physics() {
            Physics::Diffusion => Ok(vec![solve_diffusion(&DiffusionProblem::new(grid))?.kappa]),
            Physics::ReactionDiffusion => {
                let prob = ReactionDiffusionProblem::new(DiffusionProblem::new(grid));
                Ok(vec![solve_reaction_diffusion(&prob)?.kappa()])
            }
            Physics::Helmholtz => {
                let t = pick(&self.fdfd, p.freq_index)?.transmission(&grid)?;
                Ok(vec![t.re, t.im])
            }
        }
    }
}
