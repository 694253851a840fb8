//! Steady Fisher-type reaction–diffusion `∇·D∇u + k u(1−u) = 0` with the
//! same boundary conditions as [`super::DiffusionProblem`], solved by damped
//! Newton iterations along a geometric continuation in `k`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::diffusion::{assemble, faces, flux_through, DiffusionProblem, DiffusionSolution};
use crate::linalg::{self, LuFactors, SparseMatrix};
use crate::math;
use crate::{Error, Result};

/// `steps` values of `k` spaced geometrically from `k_start` up to the target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContinuationSchedule {
    pub k_start: f64,
    pub steps: usize,
}

impl Default for ContinuationSchedule {
    fn default() -> Self {
        ContinuationSchedule {
            k_start: 0.1,
            steps: 5,
        }
    }
}

impl ContinuationSchedule {
    pub fn values(&self, k: f64) -> Result<Vec<f64>> {
        if self.steps == 0 {
            return Err(Error::Config("continuation needs at least one step".into()));
        }
        if self.steps == 1 {
            return Ok(vec![k]);
        }
        if !(self.k_start > 0.0 && self.k_start < k) {
            return Err(Error::Config(format!(
                "continuation start {} must lie in (0, {k})",
                self.k_start
            )));
        }
        let last = (self.steps - 1) as f64;
        let ratio = k / self.k_start;
        let mut out: Vec<f64> = (0..self.steps)
            .map(|i| self.k_start * math::powf(ratio, i as f64 / last))
            .collect();
        out[self.steps - 1] = k;
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReactionDiffusionProblem {
    pub diffusion: DiffusionProblem,
    pub k: f64,
    pub schedule: ContinuationSchedule,
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl ReactionDiffusionProblem {
    pub const DEFAULT_K: f64 = 10.0;

    pub fn new(diffusion: DiffusionProblem) -> Self {
        Self::with_k(diffusion, Self::DEFAULT_K)
    }

    pub fn with_k(diffusion: DiffusionProblem, k: f64) -> Self {
        ReactionDiffusionProblem {
            diffusion,
            k,
            schedule: ContinuationSchedule::default(),
            tolerance: 1e-10,
            max_iterations: 50,
        }
    }
}

/// Residual history (∞-norm, starting with the initial guess) of one
/// continuation step.
#[derive(Debug, Clone, PartialEq)]
pub struct NewtonRecord {
    pub k: f64,
    pub residuals: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReactionDiffusionSolution {
    pub solution: DiffusionSolution,
    pub log: Vec<NewtonRecord>,
}

impl ReactionDiffusionSolution {
    pub fn kappa(&self) -> f64 {
        self.solution.kappa
    }

    pub fn final_residual(&self) -> f64 {
        self.log
            .last()
            .and_then(|r| r.residuals.last())
            .copied()
            .unwrap_or(0.0)
    }
}

struct System {
    k_mat: SparseMatrix<f64>,
    rhs: Vec<f64>,
    diag: Vec<usize>,
    area: f64,
}

impl System {
    fn residual(&self, u: &[f64], k: f64, out: &mut [f64]) -> f64 {
        self.k_mat.mul_vec_into(u, out);
        let mut worst: f64 = 0.0;
        for ((r, &ui), &fi) in out.iter_mut().zip(u).zip(&self.rhs) {
            *r = fi - *r + k * self.area * ui * (1.0 - ui);
            worst = worst.max(r.abs());
        }
        if worst.is_finite() {
            worst
        } else {
            f64::INFINITY
        }
    }

    // K − k·area·diag(1 − 2u), i.e. minus the Jacobian of the residual.
    fn jacobian(&self, u: &[f64], k: f64) -> SparseMatrix<f64> {
        let mut j = self.k_mat.clone();
        let vals = j.values_mut();
        for (&p, &ui) in self.diag.iter().zip(u) {
            vals[p] -= k * self.area * (1.0 - 2.0 * ui);
        }
        j
    }
}

/// Residual `f − K u + k·h_x·h_y·u(1−u)` of the discrete flux balance.
pub fn reaction_residual(prob: &ReactionDiffusionProblem, field: &[f64]) -> Result<Vec<f64>> {
    let sys = system(&prob.diffusion)?;
    if field.len() != sys.rhs.len() {
        return Err(Error::Shape(format!(
            "field has {} values, grid has {}",
            field.len(),
            sys.rhs.len()
        )));
    }
    let mut out = vec![0.0; field.len()];
    sys.residual(field, prob.k, &mut out);
    Ok(out)
}

fn system(prob: &DiffusionProblem) -> Result<System> {
    prob.validate()?;
    let grid = &prob.grid;
    let (k_mat, rhs) = assemble(grid, &faces(grid));
    let diag = k_mat
        .diagonal_positions()
        .into_iter()
        .map(|p| p.ok_or_else(|| Error::Shape("operator lacks a diagonal entry".into())))
        .collect::<Result<Vec<_>>>()?;
    Ok(System {
        k_mat,
        rhs,
        diag,
        area: grid.cell_size_x * grid.cell_size_y,
    })
}

const MAX_HALVINGS: usize = 12;

pub fn solve_reaction_diffusion(prob: &ReactionDiffusionProblem) -> Result<ReactionDiffusionSolution> {
    if !(prob.k.is_finite() && prob.k >= 0.0) {
        return Err(Error::Config(format!("reaction coefficient {} must be >= 0", prob.k)));
    }
    let sys = system(&prob.diffusion)?;
    let factors = LuFactors::factorize(&sys.k_mat)?;
    let (mut u, _) = linalg::solve_refined(&sys.k_mat, &factors, &sys.rhs)?;
    let mut log = Vec::new();

    if prob.k > 0.0 {
        let n = u.len();
        let mut r = vec![0.0; n];
        let mut trial = vec![0.0; n];
        let mut r_trial = vec![0.0; n];
        for k in prob.schedule.values(prob.k)? {
            let mut norm = sys.residual(&u, k, &mut r);
            let mut residuals = vec![norm];
            while norm > prob.tolerance {
                if residuals.len() > prob.max_iterations {
                    return Err(Error::NewtonDiverged {
                        k,
                        residual: norm,
                        iterations: prob.max_iterations,
                    });
                }
                let jac = sys.jacobian(&u, k);
                let lu = LuFactors::factorize(&jac)?;
                let delta = lu.solve(&r);
                let mut step = 1.0;
                let mut best = (f64::INFINITY, 0.0);
                for _ in 0..=MAX_HALVINGS {
                    for ((t, &ui), &di) in trial.iter_mut().zip(&u).zip(&delta) {
                        *t = ui + step * di;
                    }
                    let nt = sys.residual(&trial, k, &mut r_trial);
                    if nt < best.0 {
                        best = (nt, step);
                    }
                    if nt < norm {
                        break;
                    }
                    step *= 0.5;
                }
                if best.1 == 0.0 {
                    return Err(Error::NewtonDiverged {
                        k,
                        residual: norm,
                        iterations: residuals.len() - 1,
                    });
                }
                // fall back to the least-bad trial when no halving reduced the residual
                for (ui, &di) in u.iter_mut().zip(&delta) {
                    *ui += best.1 * di;
                }
                norm = sys.residual(&u, k, &mut r);
                residuals.push(norm);
            }
            log.push(NewtonRecord { k, residuals });
        }
    }

    let grid = &prob.diffusion.grid;
    let kappa = flux_through(grid, &u, prob.diffusion.plane_index());
    Ok(ReactionDiffusionSolution {
        solution: DiffusionSolution {
            nx: grid.nx,
            ny: grid.ny,
            field: u,
            kappa,
        },
        log,
    })
}
