//! Hole-array geometries, sub-pixel-averaged rasterization, projection and
//! mixing of material grids.
//!
//! Diffusion families live on a unit square (height 1) with an `n × n`
//! lattice of square holes, hole `row * n + col` counted from the bottom-left.
//! The Maxwell family is a `0.95 × 11` stack (units of the longest vacuum
//! wavelength) of ten rectangular holes, one per `1.1`-tall layer, each `0.75`
//! tall and centred in its layer, with variable width centred in x.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::math;
use crate::{Error, Result};

/// x-period of the Maxwell unit cell.
pub const MAXWELL_PERIOD: f64 = 0.95;
/// Height of the Maxwell hole stack.
pub const MAXWELL_STACK_HEIGHT: f64 = 11.0;
/// One hole plus one interstice.
pub const MAXWELL_LAYER_PITCH: f64 = 1.1;
pub const MAXWELL_HOLE_HEIGHT: f64 = 0.75;
/// Vacuum wavelengths selected by the frequency one-hot.
pub const MAXWELL_WAVELENGTHS: [f64; 3] = [1.0, 0.9, 0.8];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Fourier16,
    Fourier25,
    Fisher16,
    Fisher25,
    Maxwell10,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Physics {
    Diffusion,
    ReactionDiffusion,
    Helmholtz,
}

impl Family {
    pub const ALL: [Family; 5] = [
        Family::Fourier16,
        Family::Fourier25,
        Family::Fisher16,
        Family::Fisher25,
        Family::Maxwell10,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Family::Fourier16 => "fourier16",
            Family::Fourier25 => "fourier25",
            Family::Fisher16 => "fisher16",
            Family::Fisher25 => "fisher25",
            Family::Maxwell10 => "maxwell10",
        }
    }

    pub fn parse(s: &str) -> Option<Family> {
        Family::ALL.into_iter().find(|f| f.name().eq_ignore_ascii_case(s))
    }

    pub fn n_widths(self) -> usize {
        match self {
            Family::Fourier16 | Family::Fisher16 => 16,
            Family::Fourier25 | Family::Fisher25 => 25,
            Family::Maxwell10 => 10,
        }
    }

    pub fn physics(self) -> Physics {
        match self {
            Family::Fourier16 | Family::Fourier25 => Physics::Diffusion,
            Family::Fisher16 | Family::Fisher25 => Physics::ReactionDiffusion,
            Family::Maxwell10 => Physics::Helmholtz,
        }
    }

    /// Holes per side of the square lattice (diffusion families only).
    pub fn lattice(self) -> Option<usize> {
        match self {
            Family::Fourier16 | Family::Fisher16 => Some(4),
            Family::Fourier25 | Family::Fisher25 => Some(5),
            Family::Maxwell10 => None,
        }
    }

    /// Coefficient inside a hole: thermal conductivity 0.1, or ε = 1 (air).
    pub fn hole_value(self) -> f64 {
        match self.physics() {
            Physics::Helmholtz => 1.0,
            _ => 0.1,
        }
    }

    /// Coefficient of the surrounding medium: conductivity 1, or ε = 2.1.
    pub fn medium_value(self) -> f64 {
        match self.physics() {
            Physics::Helmholtz => 2.1,
            _ => 1.0,
        }
    }

    /// `(min, max)` of the two material coefficients.
    pub fn material_bounds(self) -> (f64, f64) {
        let (a, b) = (self.hole_value(), self.medium_value());
        (a.min(b), a.max(b))
    }

    pub fn is_maxwell(self) -> bool {
        self == Family::Maxwell10
    }

    /// Length of the target vector: flux, or (Re t, Im t).
    pub fn target_dim(self) -> usize {
        if self.is_maxwell() {
            2
        } else {
            1
        }
    }

    /// Network input length: widths plus the frequency one-hot.
    pub fn input_dim(self) -> usize {
        self.n_widths() + if self.is_maxwell() { MAXWELL_WAVELENGTHS.len() } else { 0 }
    }

    pub fn default_hf_resolution(self) -> usize {
        if self.is_maxwell() {
            40
        } else {
            100
        }
    }

    /// One coarse pixel per hole position for the diffusion lattices.
    pub fn default_lf_resolution(self) -> usize {
        match self.lattice() {
            Some(n) => n,
            None => 10,
        }
    }

    /// Pixel counts and sizes of a rasterization at `resolution` pixels per
    /// unit length.
    pub fn grid_shape(self, resolution: usize) -> Result<GridShape> {
        if resolution == 0 {
            return Err(Error::Resolution { min: 1, got: 0 });
        }
        Ok(if self.is_maxwell() {
            let nx = math::ceil(MAXWELL_PERIOD * resolution as f64 - 1e-9) as usize;
            let ny = math::round(MAXWELL_STACK_HEIGHT * resolution as f64) as usize;
            GridShape {
                nx,
                ny,
                cell_size_x: MAXWELL_PERIOD / nx as f64,
                cell_size_y: MAXWELL_STACK_HEIGHT / ny as f64,
            }
        } else {
            GridShape {
                nx: resolution,
                ny: resolution,
                cell_size_x: 1.0 / resolution as f64,
                cell_size_y: 1.0 / resolution as f64,
            }
        })
    }
}

impl core::fmt::Display for Family {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridShape {
    pub nx: usize,
    pub ny: usize,
    pub cell_size_x: f64,
    pub cell_size_y: f64,
}

/// Geometry parameter vector `p`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometryParams {
    pub family: Family,
    /// Hole widths as fractions of the lattice pitch (or of the period).
    pub widths: Vec<f64>,
    /// Index into [`MAXWELL_WAVELENGTHS`]; `None` for diffusion families.
    #[serde(default)]
    pub freq_index: Option<usize>,
}

impl GeometryParams {
    pub fn new(family: Family, widths: Vec<f64>, freq_index: Option<usize>) -> Result<Self> {
        let p = GeometryParams {
            family,
            widths,
            freq_index,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let expected = self.family.n_widths();
        if self.widths.len() != expected {
            return Err(Error::WidthCount {
                family: self.family.name(),
                expected,
                got: self.widths.len(),
            });
        }
        if let Some((i, w)) = self
            .widths
            .iter()
            .enumerate()
            .find(|(_, w)| !(0.0..=1.0).contains(*w))
        {
            return Err(Error::InvalidParams(format!("width {i} = {w} outside [0, 1]")));
        }
        match (self.family.is_maxwell(), self.freq_index) {
            (true, Some(k)) if k < MAXWELL_WAVELENGTHS.len() => Ok(()),
            (true, Some(k)) => Err(Error::InvalidParams(format!("frequency index {k} out of range"))),
            (true, None) => Err(Error::InvalidParams("maxwell10 needs a frequency index".into())),
            (false, Some(_)) => Err(Error::InvalidParams(format!(
                "{} takes no frequency index",
                self.family
            ))),
            (false, None) => Ok(()),
        }
    }

    pub fn freq_onehot(&self) -> Option<[f64; 3]> {
        self.freq_index.map(|k| {
            let mut v = [0.0; 3];
            v[k] = 1.0;
            v
        })
    }

    pub fn wavelength(&self) -> Option<f64> {
        self.freq_index.map(|k| MAXWELL_WAVELENGTHS[k])
    }

    /// Network input: widths rescaled to `[-1, 1]`, then the frequency
    /// one-hot.
    pub fn nn_input(&self) -> Vec<f64> {
        let mut x: Vec<f64> = self.widths.iter().map(|w| 2.0 * w - 1.0).collect();
        if let Some(h) = self.freq_onehot() {
            x.extend_from_slice(&h);
        }
        x
    }

    /// Draws widths i.i.d. uniform on `[0, 1]` (and a uniform frequency).
    pub fn sample<R: Rng + ?Sized>(family: Family, rng: &mut R) -> Self {
        let widths = (0..family.n_widths()).map(|_| rng.gen::<f64>()).collect();
        let freq_index = family
            .is_maxwell()
            .then(|| rng.gen_range(0..MAXWELL_WAVELENGTHS.len()));
        GeometryParams {
            family,
            widths,
            freq_index,
        }
    }

    /// Geometry reflected through the horizontal mid-plane.
    pub fn mirrored_y(&self) -> Self {
        let widths = match self.family.lattice() {
            Some(n) => (0..n * n)
                .map(|h| {
                    let (row, col) = (h / n, h % n);
                    self.widths[(n - 1 - row) * n + col]
                })
                .collect(),
            None => self.widths.iter().rev().copied().collect(),
        };
        GeometryParams {
            widths,
            ..self.clone()
        }
    }

    /// Max-abs distance between two parameter vectors, `None` when they are
    /// not comparable (family or frequency differ).
    pub fn distance(&self, other: &GeometryParams) -> Option<f64> {
        if self.family != other.family || self.freq_index != other.freq_index {
            return None;
        }
        Some(
            self.widths
                .iter()
                .zip(&other.widths)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max),
        )
    }
}

/// 2D array of per-pixel material coefficients, row-major with row 0 at the
/// bottom: `values[j * nx + i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaterialGrid {
    pub nx: usize,
    pub ny: usize,
    pub cell_size_x: f64,
    pub cell_size_y: f64,
    pub values: Vec<f64>,
}

impl MaterialGrid {
    pub fn new(nx: usize, ny: usize, cell_size_x: f64, cell_size_y: f64, values: Vec<f64>) -> Result<Self> {
        if nx == 0 || ny == 0 {
            return Err(Error::Shape("grid needs at least one pixel per axis".into()));
        }
        if values.len() != nx * ny {
            return Err(Error::Shape(format!(
                "{} values for a {nx}x{ny} grid",
                values.len()
            )));
        }
        Ok(MaterialGrid {
            nx,
            ny,
            cell_size_x,
            cell_size_y,
            values,
        })
    }

    pub fn uniform(shape: GridShape, value: f64) -> Self {
        MaterialGrid {
            nx: shape.nx,
            ny: shape.ny,
            cell_size_x: shape.cell_size_x,
            cell_size_y: shape.cell_size_y,
            values: vec![value; shape.nx * shape.ny],
        }
    }

    pub fn shape(&self) -> GridShape {
        GridShape {
            nx: self.nx,
            ny: self.ny,
            cell_size_x: self.cell_size_x,
            cell_size_y: self.cell_size_y,
        }
    }

    pub fn with_values(&self, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), self.values.len());
        MaterialGrid { values, ..*self }
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[j * self.nx + i]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn same_shape(&self, other: &MaterialGrid) -> bool {
        self.nx == other.nx && self.ny == other.ny
    }

    pub fn width(&self) -> f64 {
        self.nx as f64 * self.cell_size_x
    }

    pub fn height(&self) -> f64 {
        self.ny as f64 * self.cell_size_y
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Reflection `i -> nx - 1 - i`.
    pub fn mirrored_x(&self) -> Self {
        let mut values = vec![0.0; self.values.len()];
        for j in 0..self.ny {
            for i in 0..self.nx {
                values[j * self.nx + i] = self.at(self.nx - 1 - i, j);
            }
        }
        MaterialGrid { values, ..*self }
    }

    /// Reflection `j -> ny - 1 - j`.
    pub fn mirrored_y(&self) -> Self {
        let mut values = Vec::with_capacity(self.values.len());
        for j in (0..self.ny).rev() {
            values.extend_from_slice(&self.values[j * self.nx..(j + 1) * self.nx]);
        }
        MaterialGrid { values, ..*self }
    }
}

#[derive(Debug, Clone, Copy)]
struct HoleRect {
    cx: f64,
    cy: f64,
    half_x: f64,
    half_y: f64,
    // d(half_x)/dw and d(half_y)/dw
    dhx: f64,
    dhy: f64,
}

fn holes(p: &GeometryParams) -> Vec<HoleRect> {
    match p.family.lattice() {
        Some(n) => {
            let pitch = 1.0 / n as f64;
            p.widths
                .iter()
                .enumerate()
                .map(|(h, &w)| {
                    let (row, col) = (h / n, h % n);
                    HoleRect {
                        cx: (col as f64 + 0.5) * pitch,
                        cy: (row as f64 + 0.5) * pitch,
                        half_x: 0.5 * w * pitch,
                        half_y: 0.5 * w * pitch,
                        dhx: 0.5 * pitch,
                        dhy: 0.5 * pitch,
                    }
                })
                .collect()
        }
        None => p
            .widths
            .iter()
            .enumerate()
            .map(|(k, &w)| HoleRect {
                cx: 0.5 * MAXWELL_PERIOD,
                cy: (k as f64 + 0.5) * MAXWELL_LAYER_PITCH,
                half_x: 0.5 * w * MAXWELL_PERIOD,
                half_y: 0.5 * MAXWELL_HOLE_HEIGHT,
                dhx: 0.5 * MAXWELL_PERIOD,
                dhy: 0.0,
            })
            .collect(),
    }
}

/// Overlap length of `[c - r, c + r]` with `[a, b]` and its derivative in `r`.
#[inline]
fn overlap_1d(c: f64, r: f64, a: f64, b: f64) -> (f64, f64) {
    let (lo, hi) = (c - r, c + r);
    let len = hi.min(b) - lo.max(a);
    if len <= 0.0 {
        return (0.0, 0.0);
    }
    let d = if hi < b { 1.0 } else { 0.0 } + if lo > a { 1.0 } else { 0.0 };
    (len, d)
}

fn pixel_range(lo: f64, hi: f64, h: f64, n: usize) -> core::ops::Range<usize> {
    let start = math::floor(lo / h).max(0.0) as usize;
    let end = (math::ceil(hi / h).max(0.0) as usize).min(n);
    start.min(n)..end
}

/// Sub-pixel-averaged rasterization: each pixel holds the exact area-weighted
/// mean of the two material coefficients over the pixel.
///
/// At high resolution this is the high-fidelity geometry; at the coarse
/// low-fidelity resolution it is the downsampled geometry.
pub fn rasterize(p: &GeometryParams, resolution: usize) -> Result<MaterialGrid> {
    p.validate()?;
    let shape = p.family.grid_shape(resolution)?;
    let (dx, dy) = (shape.cell_size_x, shape.cell_size_y);
    let mut frac = vec![0.0; shape.nx * shape.ny];
    let inv_area = 1.0 / (dx * dy);
    for hole in holes(p) {
        if hole.half_x <= 0.0 || hole.half_y <= 0.0 {
            continue;
        }
        for j in pixel_range(hole.cy - hole.half_y, hole.cy + hole.half_y, dy, shape.ny) {
            let (ly, _) = overlap_1d(hole.cy, hole.half_y, j as f64 * dy, (j + 1) as f64 * dy);
            if ly == 0.0 {
                continue;
            }
            for i in pixel_range(hole.cx - hole.half_x, hole.cx + hole.half_x, dx, shape.nx) {
                let (lx, _) = overlap_1d(hole.cx, hole.half_x, i as f64 * dx, (i + 1) as f64 * dx);
                frac[j * shape.nx + i] += lx * ly * inv_area;
            }
        }
    }
    let (hole_v, medium) = (p.family.hole_value(), p.family.medium_value());
    let (lo, hi) = p.family.material_bounds();
    let values = frac
        .into_iter()
        .map(|f| {
            let f = f.clamp(0.0, 1.0);
            (hole_v * f + medium * (1.0 - f)).clamp(lo, hi)
        })
        .collect();
    Ok(MaterialGrid::uniform(shape, 0.0).with_values(values))
}

/// Vector–Jacobian product of [`rasterize`] with respect to the widths.
///
/// Exact on each piece where no hole edge crosses a pixel boundary.
pub fn rasterize_vjp(p: &GeometryParams, resolution: usize, cotangent: &[f64]) -> Result<Vec<f64>> {
    p.validate()?;
    let shape = p.family.grid_shape(resolution)?;
    if cotangent.len() != shape.nx * shape.ny {
        return Err(Error::Shape(format!(
            "cotangent has {} entries, grid has {}",
            cotangent.len(),
            shape.nx * shape.ny
        )));
    }
    let (dx, dy) = (shape.cell_size_x, shape.cell_size_y);
    let scale = (p.family.hole_value() - p.family.medium_value()) / (dx * dy);
    let mut grad = vec![0.0; p.widths.len()];
    for (h, hole) in holes(p).into_iter().enumerate() {
        let mut acc = 0.0;
        for j in pixel_range(hole.cy - hole.half_y, hole.cy + hole.half_y, dy, shape.ny) {
            let (ly, dly) = overlap_1d(hole.cy, hole.half_y, j as f64 * dy, (j + 1) as f64 * dy);
            for i in pixel_range(hole.cx - hole.half_x, hole.cx + hole.half_x, dx, shape.nx) {
                let (lx, dlx) = overlap_1d(hole.cx, hole.half_x, i as f64 * dx, (i + 1) as f64 * dx);
                let d_area = dlx * hole.dhx * ly + lx * dly * hole.dhy;
                acc += cotangent[j * shape.nx + i] * d_area;
            }
        }
        grad[h] = scale * acc;
    }
    Ok(grad)
}

/// Constraints applied to the blended low-fidelity geometry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProjectionConfig {
    /// Enforce `g(x) = g(-x)` by averaging with the x-mirror image.
    pub mirror_x: bool,
    pub clamp_lo: f64,
    pub clamp_hi: f64,
}

impl ProjectionConfig {
    pub fn new(mirror_x: bool, clamp_lo: f64, clamp_hi: f64) -> Result<Self> {
        if !(clamp_lo < clamp_hi) {
            return Err(Error::Config(format!(
                "clamp bounds [{clamp_lo}, {clamp_hi}] are empty"
            )));
        }
        Ok(ProjectionConfig {
            mirror_x,
            clamp_lo,
            clamp_hi,
        })
    }

    /// Clamp to the family's material interval, no mirror symmetry.
    pub fn for_family(family: Family) -> Self {
        let (lo, hi) = family.material_bounds();
        ProjectionConfig {
            mirror_x: false,
            clamp_lo: lo,
            clamp_hi: hi,
        }
    }
}

fn symmetrize(g: &MaterialGrid) -> Vec<f64> {
    let mut out = g.values.clone();
    for j in 0..g.ny {
        for i in 0..g.nx {
            out[j * g.nx + i] = 0.5 * (g.at(i, j) + g.at(g.nx - 1 - i, j));
        }
    }
    out
}

/// `P[g]`: optional mirror averaging followed by clamping.
pub fn project(g: &MaterialGrid, cfg: &ProjectionConfig) -> MaterialGrid {
    let values = if cfg.mirror_x { symmetrize(g) } else { g.values.clone() };
    let values = values
        .into_iter()
        .map(|v| v.clamp(cfg.clamp_lo, cfg.clamp_hi))
        .collect();
    g.with_values(values)
}

/// Adjoint of [`project`] at the input `g`.
pub fn project_vjp(g: &MaterialGrid, cfg: &ProjectionConfig, cotangent: &[f64]) -> Vec<f64> {
    assert_eq!(cotangent.len(), g.len());
    let pre = if cfg.mirror_x { symmetrize(g) } else { g.values.clone() };
    let masked: Vec<f64> = pre
        .iter()
        .zip(cotangent)
        .map(|(&v, &c)| if v >= cfg.clamp_lo && v <= cfg.clamp_hi { c } else { 0.0 })
        .collect();
    if !cfg.mirror_x {
        return masked;
    }
    // Mirror averaging is symmetric, hence self-adjoint.
    symmetrize(&g.with_values(masked))
}

/// `G = w * gen + (1 - w) * down`
pub fn mix(gen: &MaterialGrid, down: &MaterialGrid, w: f64) -> Result<MaterialGrid> {
    if !gen.same_shape(down) {
        return Err(Error::Shape(format!(
            "generated grid is {}x{}, downsampled grid is {}x{}",
            gen.nx, gen.ny, down.nx, down.ny
        )));
    }
    if !(0.0..=1.0).contains(&w) {
        return Err(Error::Config(format!("mixing weight {w} outside [0, 1]")));
    }
    let values = gen
        .values
        .iter()
        .zip(&down.values)
        .map(|(&a, &b)| if a == b { b } else { w * a + (1.0 - w) * b })
        .collect();
    Ok(down.with_values(values))
}
