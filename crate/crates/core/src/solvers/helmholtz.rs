//! Scalar Helmholtz `∇²u + ω²εu = s` on a strip periodic in x, with
//! stretched-coordinate absorbing layers at both y ends.
//!
//! Row layout from the bottom, mirror symmetric about the structure centre:
//!
//! ```text
//! absorber | gap | source row | gap | structure | gap | monitor row | gap | absorber
//! ```
//!
//! Rows of the operator are scaled by the local stretch factor so the
//! matrix is complex symmetric (`Aᵀ = A`, no conjugation). Adjoints therefore
//! use the plain transpose.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::geometry::MaterialGrid;
use crate::linalg::{self, Complex, LuFactors, SparseMatrix, TripletBuilder};
use crate::math;
use crate::{Error, Result};

/// Target round-trip reflection of the absorbing layer.
pub const PML_REFLECTION: f64 = 1e-4;
pub const MIN_RESOLUTION: usize = 8;

/// Accuracy order of the staggered first differences that build the
/// Laplacian as `−Dᵀ diag(1/s) D`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stencil {
    Second,
    #[default]
    Fourth,
}

impl Stencil {
    // Offsets (relative to the node just above/right of the face) and weights.
    fn taps(self) -> &'static [(isize, f64)] {
        match self {
            Stencil::Second => &[(-1, -1.0), (0, 1.0)],
            Stencil::Fourth => &[(-2, 1.0 / 24.0), (-1, -9.0 / 8.0), (0, 9.0 / 8.0), (1, -1.0 / 24.0)],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FdfdLayout {
    pub nx: usize,
    pub dx: f64,
    pub dy: f64,
    pub pml: usize,
    pub outer_gap: usize,
    pub inner_gap: usize,
    pub structure_rows: usize,
    pub source_row: usize,
    pub structure_row0: usize,
    pub monitor_row: usize,
    pub rows: usize,
}

impl FdfdLayout {
    /// Layout around a structure of `structure_rows × nx` pixels with
    /// `resolution` rows per unit length and an absorber `pml` rows thick.
    pub fn new(nx: usize, dx: f64, resolution: usize, structure_rows: usize, pml: usize) -> Result<Self> {
        if resolution < MIN_RESOLUTION {
            return Err(Error::Resolution {
                min: MIN_RESOLUTION,
                got: resolution,
            });
        }
        if nx == 0 || structure_rows == 0 || pml == 0 || !(dx.is_finite() && dx > 0.0) {
            return Err(Error::Config(format!(
                "degenerate layout: nx={nx}, rows={structure_rows}, pml={pml}, dx={dx}"
            )));
        }
        let outer_gap = (math::round(resolution as f64 / 4.0) as usize).max(1);
        let inner_gap = (math::round(resolution as f64 / 2.0) as usize).max(1);
        let source_row = pml + outer_gap;
        let structure_row0 = source_row + 1 + inner_gap;
        let monitor_row = structure_row0 + structure_rows + inner_gap;
        let rows = monitor_row + 1 + outer_gap + pml;
        Ok(FdfdLayout {
            nx,
            dx,
            dy: 1.0 / resolution as f64,
            pml,
            outer_gap,
            inner_gap,
            structure_rows,
            source_row,
            structure_row0,
            monitor_row,
            rows,
        })
    }

    pub fn unknowns(&self) -> usize {
        self.nx * self.rows
    }

    fn sigma_max(&self) -> f64 {
        3.0 * math::ln(1.0 / PML_REFLECTION) / (2.0 * self.pml as f64 * self.dy)
    }

    // Absorber conductivity at height y (in units of dy, measured from the
    // bottom edge of row 0).
    fn sigma(&self, y: f64) -> f64 {
        let lo = self.pml as f64;
        let hi = (self.rows - self.pml) as f64;
        let depth = if y < lo {
            lo - y
        } else if y > hi {
            y - hi
        } else {
            return 0.0;
        };
        let frac = depth / self.pml as f64;
        self.sigma_max() * frac * frac
    }

    fn stretch(&self, y: f64, omega: f64) -> Complex {
        Complex::new(1.0, self.sigma(y) / omega)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HelmholtzProblem {
    /// Relative permittivity of the structured region.
    pub grid: MaterialGrid,
    pub omega: f64,
    /// Absorber thickness in pixels.
    pub pml_thickness: usize,
}

impl HelmholtzProblem {
    /// Absorber one unit (the longest wavelength) thick.
    pub fn new(grid: MaterialGrid, omega: f64) -> Self {
        let pml_thickness = math::round(1.0 / grid.cell_size_y) as usize;
        HelmholtzProblem {
            grid,
            omega,
            pml_thickness,
        }
    }
}

pub fn omega_for_wavelength(wavelength: f64) -> f64 {
    2.0 * PI / wavelength
}

/// Operator and calibration for one grid shape and frequency. Reuse it to
/// amortize the empty-cell calibration run over many structures.
#[derive(Debug, Clone)]
pub struct FdfdSolver {
    layout: FdfdLayout,
    omega: f64,
    stencil: Stencil,
    // empty-cell operator and source; structures only touch the diagonal
    base: SparseMatrix<Complex>,
    rhs: Vec<Complex>,
    structure_diag: Vec<usize>,
    eps_coef: f64,
    reference: Complex,
}

impl FdfdSolver {
    pub fn new(nx: usize, dx: f64, dy: f64, structure_rows: usize, omega: f64, pml: usize) -> Result<Self> {
        Self::with_stencil(nx, dx, dy, structure_rows, omega, pml, Stencil::default())
    }

    pub fn with_stencil(
        nx: usize,
        dx: f64,
        dy: f64,
        structure_rows: usize,
        omega: f64,
        pml: usize,
        stencil: Stencil,
    ) -> Result<Self> {
        if !(omega.is_finite() && omega > 0.0) {
            return Err(Error::Config(format!("omega {omega} must be positive")));
        }
        let resolution = math::round(1.0 / dy) as usize;
        if (resolution as f64 * dy - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("row height {dy} is not 1/integer")));
        }
        let layout = FdfdLayout::new(nx, dx, resolution, structure_rows, pml)?;
        let (base, rhs) = assemble(&layout, omega, stencil);
        let diag = base.diagonal_positions();
        let offset = layout.structure_row0 * nx;
        let structure_diag = (offset..offset + nx * structure_rows)
            .map(|n| diag[n].ok_or_else(|| Error::Shape("operator lacks a diagonal entry".into())))
            .collect::<Result<Vec<_>>>()?;
        let mut solver = FdfdSolver {
            layout,
            omega,
            stencil,
            base,
            rhs,
            structure_diag,
            eps_coef: omega * omega * layout.dy * layout.dy,
            reference: Complex::ONE,
        };
        let vacuum = vec![1.0; nx * structure_rows];
        let (u, _, _) = solver.field(&vacuum)?;
        solver.reference = solver.monitor_mean(&u);
        if solver.reference.abs() == 0.0 {
            return Err(Error::NonFinite("calibration run has no transmitted field".into()));
        }
        Ok(solver)
    }

    pub fn for_problem(prob: &HelmholtzProblem) -> Result<Self> {
        let g = &prob.grid;
        Self::new(g.nx, g.cell_size_x, g.cell_size_y, g.ny, prob.omega, prob.pml_thickness)
    }

    pub fn layout(&self) -> &FdfdLayout {
        &self.layout
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    /// Monitor mean of the empty cell.
    pub fn reference(&self) -> Complex {
        self.reference
    }

    fn check_grid(&self, grid: &MaterialGrid) -> Result<()> {
        let l = &self.layout;
        if grid.nx != l.nx
            || grid.ny != l.structure_rows
            || (grid.cell_size_x - l.dx).abs() > 1e-12
            || (grid.cell_size_y - l.dy).abs() > 1e-12
        {
            return Err(Error::Shape(format!(
                "grid {}x{} does not match solver {}x{}",
                grid.nx, grid.ny, l.nx, l.structure_rows
            )));
        }
        if let Some(v) = grid.values.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("permittivity {v}")));
        }
        Ok(())
    }

    pub fn stencil(&self) -> Stencil {
        self.stencil
    }

    fn operator(&self, eps: &[f64]) -> SparseMatrix<Complex> {
        let mut a = self.base.clone();
        let vals = a.values_mut();
        for (&pos, &e) in self.structure_diag.iter().zip(eps) {
            vals[pos] += Complex::from(self.eps_coef * (e - 1.0));
        }
        a
    }

    fn field(&self, eps: &[f64]) -> Result<(Vec<Complex>, SparseMatrix<Complex>, LuFactors<Complex>)> {
        let a = self.operator(eps);
        let factors = LuFactors::factorize(&a)?;
        let (u, _) = linalg::solve_refined(&a, &factors, &self.rhs)?;
        if u.iter().any(|z| !z.is_finite()) {
            return Err(Error::NonFinite("field diverged".into()));
        }
        Ok((u, a, factors))
    }

    fn monitor_mean(&self, u: &[Complex]) -> Complex {
        let l = &self.layout;
        let row = &u[l.monitor_row * l.nx..(l.monitor_row + 1) * l.nx];
        row.iter().fold(Complex::ZERO, |acc, &z| acc + z) / l.nx as f64
    }

    /// Full field over the padded domain, row-major from the bottom.
    pub fn solve_field(&self, grid: &MaterialGrid) -> Result<Vec<Complex>> {
        self.check_grid(grid)?;
        self.field(&grid.values).map(|(u, _, _)| u)
    }

    pub fn transmission(&self, grid: &MaterialGrid) -> Result<Complex> {
        let u = self.solve_field(grid)?;
        Ok(self.monitor_mean(&u) / self.reference)
    }

    /// Transmission plus the gradient of `g_re·Re t + g_im·Im t` with
    /// respect to each permittivity pixel.
    pub fn vjp(&self, grid: &MaterialGrid, cotangent: [f64; 2]) -> Result<(Complex, Vec<f64>)> {
        self.vjp_with(grid, |_| cotangent)
    }

    /// As [`vjp`](Self::vjp), with the cotangent chosen after seeing `t`.
    pub fn vjp_with<F: FnOnce(Complex) -> [f64; 2]>(&self, grid: &MaterialGrid, seed: F) -> Result<(Complex, Vec<f64>)> {
        self.check_grid(grid)?;
        let (u, a, factors) = self.field(&grid.values)?;
        let t = self.monitor_mean(&u) / self.reference;
        let cotangent = seed(t);
        let n = grid.len();
        if cotangent == [0.0, 0.0] {
            return Ok((t, vec![0.0; n]));
        }
        let l = &self.layout;
        let mut c = vec![Complex::ZERO; l.unknowns()];
        let w = Complex::from(1.0 / l.nx as f64);
        for z in &mut c[l.monitor_row * l.nx..(l.monitor_row + 1) * l.nx] {
            *z = w;
        }
        let (lambda, _) = linalg::solve_transposed_refined(&a, &factors, &c)?;
        let g = Complex::new(cotangent[0], -cotangent[1]);
        let scale = -(self.omega * self.omega * l.dy * l.dy);
        let offset = l.structure_row0 * l.nx;
        let grad = (0..n)
            .map(|p| {
                let dt = lambda[offset + p] * u[offset + p] * scale / self.reference;
                (g * dt).re
            })
            .collect();
        Ok((t, grad))
    }
}

// Operator of the empty cell (ε = 1 everywhere) and the line source.
fn assemble(l: &FdfdLayout, omega: f64, stencil: Stencil) -> (SparseMatrix<Complex>, Vec<Complex>) {
    let (nx, rows) = (l.nx, l.rows);
    let taps = stencil.taps();
    let w2dy2 = omega * omega * l.dy * l.dy;
    let xr = (l.dy / l.dx) * (l.dy / l.dx);
    let width = taps.len();
    let mut t = TripletBuilder::with_capacity(l.unknowns(), 2 * width * width * l.unknowns() + l.unknowns());
    let mut rhs = vec![Complex::ZERO; l.unknowns()];
    // y faces: face f lies between rows f-1 and f; nodes beyond the
    // domain are zero
    for f in 0..=rows {
        let g = -(Complex::ONE / l.stretch(f as f64, omega));
        for i in 0..nx {
            for &(oa, wa) in taps {
                let Some(ja) = row_at(f, oa, rows) else { continue };
                for &(ob, wb) in taps {
                    let Some(jb) = row_at(f, ob, rows) else { continue };
                    t.add(ja * nx + i, jb * nx + i, g * (wa * wb));
                }
            }
        }
    }
    // x faces, periodic, scaled by the row stretch
    if nx > 1 {
        for j in 0..rows {
            let g = -(l.stretch(j as f64 + 0.5, omega) * xr);
            for f in 0..nx {
                for &(oa, wa) in taps {
                    let ia = (f as isize + oa).rem_euclid(nx as isize) as usize;
                    for &(ob, wb) in taps {
                        let ib = (f as isize + ob).rem_euclid(nx as isize) as usize;
                        t.add(j * nx + ia, j * nx + ib, g * (wa * wb));
                    }
                }
            }
        }
    }
    for j in 0..rows {
        let sc = l.stretch(j as f64 + 0.5, omega);
        for i in 0..nx {
            let n = j * nx + i;
            t.add(n, n, sc * w2dy2);
            if j == l.source_row {
                rhs[n] = sc * l.dy;
            }
        }
    }
    (t.build(), rhs)
}

fn row_at(face: usize, offset: isize, rows: usize) -> Option<usize> {
    let r = face as isize + offset;
    (r >= 0 && (r as usize) < rows).then_some(r as usize)
}

pub fn solve_helmholtz(prob: &HelmholtzProblem) -> Result<Complex> {
    FdfdSolver::for_problem(prob)?.transmission(&prob.grid)
}
