//! Finite-volume steady diffusion `∇·D∇u = 0` on a periodic-in-x strip with
//! `u = 1` on the bottom edge and `u = 0` on the top edge.
//!
//! Unknowns sit at cell centres. Face conductances use the harmonic mean of
//! the two adjacent cells; boundary faces see the cell's own coefficient over
//! half a cell. The discrete equations are the flux balances of each cell
//! (not divided by the cell area), which is also the scale at which residuals
//! are reported.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::geometry::MaterialGrid;
use crate::linalg::{self, LuFactors, SparseMatrix, TripletBuilder};
use crate::math;
use crate::{Error, Result};

pub const BOTTOM_VALUE: f64 = 1.0;
pub const TOP_VALUE: f64 = 0.0;

#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionProblem {
    /// Conductivity `D` per cell.
    pub grid: MaterialGrid,
    /// Height of the horizontal plane where the flux is measured; snapped to
    /// the nearest row of cell faces.
    pub flux_plane_y: f64,
}

impl DiffusionProblem {
    /// Flux measured at mid-height.
    pub fn new(grid: MaterialGrid) -> Self {
        let flux_plane_y = 0.5 * grid.height();
        DiffusionProblem { grid, flux_plane_y }
    }

    pub fn validate(&self) -> Result<()> {
        if let Some((k, v)) = self
            .grid
            .values
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.is_finite() && **v > 0.0))
        {
            return Err(Error::Config(format!("conductivity {v} at pixel {k} must be positive")));
        }
        let h = self.grid.height();
        if !(self.flux_plane_y > 0.0 && self.flux_plane_y < h) {
            return Err(Error::Config(format!(
                "flux plane {} outside (0, {h})",
                self.flux_plane_y
            )));
        }
        Ok(())
    }

    /// Face-row index `m ∈ 0..=ny` closest to `flux_plane_y`.
    pub fn plane_index(&self) -> usize {
        face_row(&self.grid, self.flux_plane_y)
    }
}

pub(crate) fn face_row(grid: &MaterialGrid, y: f64) -> usize {
    (math::round(y / grid.cell_size_y).max(0.0) as usize).min(grid.ny)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionSolution {
    pub nx: usize,
    pub ny: usize,
    /// Cell-centre values, row-major from the bottom row.
    pub field: Vec<f64>,
    /// Flux through the measurement plane, normalized so a uniform medium of
    /// conductivity `c` gives `c`.
    pub kappa: f64,
}

#[derive(Debug, Clone, Copy)]
pub(crate) enum FaceKind {
    Interior { a: usize, b: usize },
    /// Dirichlet face of cell `a` held at `value`.
    Boundary { a: usize, value: f64 },
}

/// One cell face with its geometric factor `face length / centre distance`.
/// For y-faces `row` is the face-row index (`0..=ny`), `a` is below `b`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Face {
    pub kind: FaceKind,
    pub tau: f64,
    pub row: Option<usize>,
}

pub(crate) fn faces(grid: &MaterialGrid) -> Vec<Face> {
    let (nx, ny) = (grid.nx, grid.ny);
    let (hx, hy) = (grid.cell_size_x, grid.cell_size_y);
    let mut out = Vec::with_capacity(2 * nx * ny + 2 * nx);
    if nx > 1 {
        for j in 0..ny {
            for i in 0..nx {
                out.push(Face {
                    kind: FaceKind::Interior {
                        a: j * nx + i,
                        b: j * nx + (i + 1) % nx,
                    },
                    tau: hy / hx,
                    row: None,
                });
            }
        }
    }
    for i in 0..nx {
        out.push(Face {
            kind: FaceKind::Boundary {
                a: i,
                value: BOTTOM_VALUE,
            },
            tau: 2.0 * hx / hy,
            row: Some(0),
        });
        for j in 1..ny {
            out.push(Face {
                kind: FaceKind::Interior {
                    a: (j - 1) * nx + i,
                    b: j * nx + i,
                },
                tau: hx / hy,
                row: Some(j),
            });
        }
        out.push(Face {
            kind: FaceKind::Boundary {
                a: (ny - 1) * nx + i,
                value: TOP_VALUE,
            },
            tau: 2.0 * hx / hy,
            row: Some(ny),
        });
    }
    out
}

#[inline]
pub(crate) fn conductance(face: &Face, d: &[f64]) -> f64 {
    match face.kind {
        FaceKind::Interior { a, b } => face.tau * 2.0 * d[a] * d[b] / (d[a] + d[b]),
        FaceKind::Boundary { a, .. } => face.tau * d[a],
    }
}

/// `K u = f` with `K` the (symmetric, positive definite) flux operator.
pub(crate) fn assemble(grid: &MaterialGrid, faces: &[Face]) -> (SparseMatrix<f64>, Vec<f64>) {
    let n = grid.len();
    let d = &grid.values;
    let mut t = TripletBuilder::with_capacity(n, 4 * faces.len());
    let mut rhs = vec![0.0; n];
    for face in faces {
        let g = conductance(face, d);
        match face.kind {
            FaceKind::Interior { a, b } => {
                t.add(a, a, g);
                t.add(b, b, g);
                t.add(a, b, -g);
                t.add(b, a, -g);
            }
            FaceKind::Boundary { a, value } => {
                t.add(a, a, g);
                rhs[a] += g * value;
            }
        }
    }
    (t.build(), rhs)
}

fn flux_scale(grid: &MaterialGrid) -> f64 {
    grid.height() / (grid.width() * (BOTTOM_VALUE - TOP_VALUE))
}

/// Normalized upward flux through face row `m` for a given field.
pub fn flux_through(grid: &MaterialGrid, field: &[f64], m: usize) -> f64 {
    let d = &grid.values;
    let total: f64 = faces(grid)
        .iter()
        .filter(|f| f.row == Some(m))
        .map(|f| conductance(f, d) * face_drop(f, field))
        .sum();
    total * flux_scale(grid)
}

// u(below) − u(above) across a y-face.
#[inline]
fn face_drop(face: &Face, u: &[f64]) -> f64 {
    match (face.kind, face.row) {
        (FaceKind::Interior { a, b }, _) => u[a] - u[b],
        (FaceKind::Boundary { a, value }, Some(0)) => value - u[a],
        (FaceKind::Boundary { a, value }, _) => u[a] - value,
    }
}

pub fn solve_diffusion(prob: &DiffusionProblem) -> Result<DiffusionSolution> {
    solve_with_factors(prob).map(|(sol, _, _)| sol)
}

pub(crate) fn solve_with_factors(
    prob: &DiffusionProblem,
) -> Result<(DiffusionSolution, SparseMatrix<f64>, LuFactors<f64>)> {
    prob.validate()?;
    let faces = faces(&prob.grid);
    let (k, rhs) = assemble(&prob.grid, &faces);
    let factors = LuFactors::factorize(&k)?;
    let (field, _) = linalg::solve_refined(&k, &factors, &rhs)?;
    let kappa = flux_through(&prob.grid, &field, prob.plane_index());
    Ok((
        DiffusionSolution {
            nx: prob.grid.nx,
            ny: prob.grid.ny,
            field,
            kappa,
        },
        k,
        factors,
    ))
}

/// Adjoint gradient of `cotangent · kappa` with respect to every cell
/// conductivity: one transposed solve plus a sweep over faces.
pub fn diffusion_vjp(prob: &DiffusionProblem, cotangent: f64) -> Result<(DiffusionSolution, Vec<f64>)> {
    diffusion_vjp_with(prob, |_| cotangent)
}

/// As [`diffusion_vjp`], with the cotangent chosen after seeing `kappa`.
pub fn diffusion_vjp_with<F: FnOnce(f64) -> f64>(
    prob: &DiffusionProblem,
    seed: F,
) -> Result<(DiffusionSolution, Vec<f64>)> {
    let (sol, k, factors) = solve_with_factors(prob)?;
    let cotangent = seed(sol.kappa);
    let grid = &prob.grid;
    let n = grid.len();
    if cotangent == 0.0 {
        return Ok((sol, vec![0.0; n]));
    }
    let m = prob.plane_index();
    let s = flux_scale(grid);
    let d = &grid.values;
    let u = &sol.field;
    let faces = faces(grid);

    // ∂kappa/∂u
    let mut dk_du = vec![0.0; n];
    for f in faces.iter().filter(|f| f.row == Some(m)) {
        let g = conductance(f, d) * s;
        match f.kind {
            FaceKind::Interior { a, b } => {
                dk_du[a] += g;
                dk_du[b] -= g;
            }
            FaceKind::Boundary { a, .. } => {
                dk_du[a] += if m == 0 { -g } else { g };
            }
        }
    }
    let (mu, _) = linalg::solve_transposed_refined(&k, &factors, &dk_du)?;

    let mut grad = vec![0.0; n];
    for f in &faces {
        let on_plane = if f.row == Some(m) { s * face_drop(f, u) } else { 0.0 };
        match f.kind {
            FaceKind::Interior { a, b } => {
                let c = -(mu[a] - mu[b]) * (u[a] - u[b]) + on_plane;
                let sum = d[a] + d[b];
                let scale = f.tau * 2.0 / (sum * sum);
                grad[a] += c * scale * d[b] * d[b];
                grad[b] += c * scale * d[a] * d[a];
            }
            FaceKind::Boundary { a, value } => {
                let c = mu[a] * (value - u[a]) + on_plane;
                grad[a] += c * f.tau;
            }
        }
    }
    for g in &mut grad {
        *g *= cotangent;
    }
    Ok((sol, grad))
}
