//! The composed surrogate
//! `f(p) = lf_solve(P[w·generator(p) + (1 − w)·downsample(p)])`, the NN-only
//! baseline, ensembles and the inclusion diagnostic.

use alloc::format;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::{mix, project, project_vjp, rasterize, Family, GeometryParams, MaterialGrid, ProjectionConfig};
use crate::math;
use crate::neural::{Mlp, OutputActivation, Trace};
use crate::solvers::{LowFidelity, Stencil};
use crate::{Error, Result};

pub const INITIAL_W: f64 = 0.05;
pub const SIGMA_FLOOR: f64 = 1e-6;
pub const ENSEMBLE_SIZE: usize = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub value: Vec<f64>,
    /// Predicted standard deviation from the σ-network.
    pub sigma: f64,
}

/// A sample with everything that does not depend on trainable weights
/// computed once.
#[derive(Debug, Clone, PartialEq)]
pub struct Prepared {
    pub params: GeometryParams,
    pub input: Vec<f64>,
    /// `downsample(p)` on the low-fidelity grid, for models that use it.
    pub coarse: Option<MaterialGrid>,
}

/// Anything the training loop can fit: a flat trainable parameter vector, a
/// prediction and a reverse pass.
pub trait Surrogate: Clone + Send + Sync {
    fn family(&self) -> Family;

    fn prepare(&self, p: &GeometryParams) -> Result<Prepared>;

    fn predict(&self, x: &Prepared) -> Result<Prediction>;

    fn n_params(&self) -> usize;

    fn gather(&self) -> Vec<f64>;

    fn scatter(&mut self, params: &[f64]) -> Result<()>;

    /// Evaluates the model, asks `seed` for the cotangents of the value and
    /// of σ, and adds the resulting parameter gradient to `grad`.
    fn backward<F>(&self, x: &Prepared, seed: F, grad: &mut [f64]) -> Result<Prediction>
    where
        F: FnOnce(&Prediction) -> (Vec<f64>, f64);

    /// Generator mixing weight, for models that have one.
    fn mixing_weight(&self) -> Option<f64> {
        None
    }
}

fn check_family(model: Family, p: &GeometryParams) -> Result<()> {
    if p.family != model {
        return Err(Error::InvalidParams(format!(
            "{} parameters given to a {model} model",
            p.family
        )));
    }
    p.validate()
}

fn scatter_into(dst: &mut [f64], src: &[f64]) -> Result<()> {
    if let Some(k) = src.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("parameter {k}")));
    }
    dst.copy_from_slice(src);
    Ok(())
}

fn sigma_net<R: Rng + ?Sized>(input: usize, hidden: &[usize], rng: &mut R) -> Result<Mlp> {
    let mut sizes = vec![input];
    sizes.extend_from_slice(hidden);
    sizes.push(1);
    Mlp::init(sizes, OutputActivation::Softplus { floor: SIGMA_FLOOR }, rng)
}

/// The optimiser sees `logit / LOGIT_SCALE`, so one Adam step moves the
/// logit this many times further than a network weight.
pub const LOGIT_SCALE: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MixWeight {
    /// `w = sigmoid(logit)`, trained.
    Learned { logit: f64 },
    Frozen { w: f64 },
}

impl MixWeight {
    pub fn learned(w: f64) -> Result<Self> {
        if !(w > 0.0 && w < 1.0) {
            return Err(Error::Config(format!("initial mixing weight {w} must lie in (0, 1)")));
        }
        Ok(MixWeight::Learned {
            logit: math::ln(w / (1.0 - w)),
        })
    }

    pub fn value(self) -> f64 {
        match self {
            MixWeight::Learned { logit } => math::sigmoid(logit),
            MixWeight::Frozen { w } => w,
        }
    }

    pub fn is_learned(self) -> bool {
        matches!(self, MixWeight::Learned { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PedsConfig {
    pub generator_hidden: Vec<usize>,
    pub sigma_hidden: Vec<usize>,
    /// Defaults to the family's low-fidelity resolution.
    pub lf_resolution: Option<usize>,
    pub lf_stencil: Stencil,
    pub initial_w: f64,
    /// Apply the clamp/mirror projection to the blended grid.
    pub projection: Option<ProjectionConfig>,
}

impl Default for PedsConfig {
    fn default() -> Self {
        PedsConfig {
            generator_hidden: vec![256, 256],
            sigma_hidden: vec![32, 32],
            lf_resolution: None,
            lf_stencil: Stencil::Second,
            initial_w: INITIAL_W,
            projection: None,
        }
    }
}

/// Serializable weights and configuration of a [`PedsModel`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PedsParams {
    pub family: Family,
    pub lf_resolution: usize,
    pub lf_stencil: Stencil,
    pub generator: Mlp,
    pub sigma_net: Mlp,
    pub mix: MixWeight,
    pub projection: Option<ProjectionConfig>,
}

#[derive(Debug, Clone)]
pub struct PedsModel {
    params: PedsParams,
    lf: Arc<LowFidelity>,
}

impl PedsModel {
    pub fn new<R: Rng + ?Sized>(family: Family, config: &PedsConfig, rng: &mut R) -> Result<Self> {
        let lf_resolution = config.lf_resolution.unwrap_or(family.default_lf_resolution());
        let shape = family.grid_shape(lf_resolution)?;
        let (lo, hi) = family.material_bounds();
        let mut sizes = vec![family.input_dim()];
        sizes.extend_from_slice(&config.generator_hidden);
        sizes.push(shape.nx * shape.ny);
        let generator = Mlp::init(sizes, OutputActivation::Bounded { lo, hi }, rng)?;
        let sigma = sigma_net(family.input_dim(), &config.sigma_hidden, rng)?;
        Self::from_params(PedsParams {
            family,
            lf_resolution,
            lf_stencil: config.lf_stencil,
            generator,
            sigma_net: sigma,
            mix: MixWeight::learned(config.initial_w)?,
            projection: config.projection,
        })
    }

    pub fn from_params(params: PedsParams) -> Result<Self> {
        let lf = LowFidelity::with_stencil(params.family, params.lf_resolution, params.lf_stencil)?;
        let shape = lf.shape();
        let fam = params.family;
        if params.generator.input_dim() != fam.input_dim() || params.sigma_net.input_dim() != fam.input_dim() {
            return Err(Error::Shape(format!("networks must take {} inputs", fam.input_dim())));
        }
        if params.generator.output_dim() != shape.nx * shape.ny || params.sigma_net.output_dim() != 1 {
            return Err(Error::Shape(format!(
                "generator must emit a {}x{} grid and the sigma net one value",
                shape.nx, shape.ny
            )));
        }
        let w = params.mix.value();
        if !(0.0..=1.0).contains(&w) || !w.is_finite() {
            return Err(Error::Config(format!("mixing weight {w} outside [0, 1]")));
        }
        Ok(PedsModel {
            params,
            lf: Arc::new(lf),
        })
    }

    pub fn params(&self) -> &PedsParams {
        &self.params
    }

    pub fn low_fidelity(&self) -> &LowFidelity {
        &self.lf
    }

    pub fn w(&self) -> f64 {
        self.params.mix.value()
    }

    /// Same weights with `w` pinned (and excluded from training).
    pub fn with_frozen_w(&self, w: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&w) {
            return Err(Error::Config(format!("mixing weight {w} outside [0, 1]")));
        }
        let mut m = self.clone();
        m.params.mix = MixWeight::Frozen { w };
        Ok(m)
    }

    /// `downsample(p)`: the geometry rasterized straight onto the coarse grid.
    pub fn downsample(&self, p: &GeometryParams) -> Result<MaterialGrid> {
        rasterize(p, self.params.lf_resolution)
    }

    /// The blended (and projected) coarse geometry fed to the solver.
    pub fn coarse_geometry(&self, x: &Prepared) -> Result<MaterialGrid> {
        let down = self.coarse_of(x)?;
        let gen = down.with_values(self.params.generator.forward(&x.input)?);
        let mixed = mix(&gen, down, self.w())?;
        Ok(match &self.params.projection {
            Some(cfg) => project(&mixed, cfg),
            None => mixed,
        })
    }

    fn coarse_of<'a>(&self, x: &'a Prepared) -> Result<&'a MaterialGrid> {
        x.coarse
            .as_ref()
            .filter(|g| g.shape() == self.lf.shape())
            .ok_or_else(|| Error::Shape("sample was not prepared for this model".into()))
    }

    fn sigma(&self, x: &Prepared) -> Result<(f64, Trace)> {
        let trace = self.params.sigma_net.forward_trace(&x.input)?;
        Ok((trace.output()[0], trace))
    }

    fn layout(&self) -> (usize, usize) {
        (self.params.generator.n_params(), self.params.sigma_net.n_params())
    }
}

impl Surrogate for PedsModel {
    fn family(&self) -> Family {
        self.params.family
    }

    fn prepare(&self, p: &GeometryParams) -> Result<Prepared> {
        check_family(self.params.family, p)?;
        Ok(Prepared {
            params: p.clone(),
            input: p.nn_input(),
            coarse: Some(self.downsample(p)?),
        })
    }

    fn predict(&self, x: &Prepared) -> Result<Prediction> {
        let grid = self.coarse_geometry(x)?;
        let value = self.lf.evaluate(&grid, x.params.freq_index)?;
        let sigma = self.params.sigma_net.forward(&x.input)?[0];
        Ok(Prediction { value, sigma })
    }

    fn n_params(&self) -> usize {
        let (g, s) = self.layout();
        g + s + usize::from(self.params.mix.is_learned())
    }

    fn gather(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.n_params());
        v.extend_from_slice(self.params.generator.params());
        v.extend_from_slice(self.params.sigma_net.params());
        if let MixWeight::Learned { logit } = self.params.mix {
            v.push(logit / LOGIT_SCALE);
        }
        v
    }

    fn scatter(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.n_params() {
            return Err(Error::Shape(format!(
                "model has {} parameters, got {}",
                self.n_params(),
                params.len()
            )));
        }
        let (g, s) = self.layout();
        scatter_into(self.params.generator.params_mut(), &params[..g])?;
        scatter_into(self.params.sigma_net.params_mut(), &params[g..g + s])?;
        if let MixWeight::Learned { logit } = &mut self.params.mix {
            let v = params[g + s];
            if !v.is_finite() {
                return Err(Error::NonFinite("mixing logit".into()));
            }
            *logit = v * LOGIT_SCALE;
        }
        Ok(())
    }

    fn backward<F>(&self, x: &Prepared, seed: F, grad: &mut [f64]) -> Result<Prediction>
    where
        F: FnOnce(&Prediction) -> (Vec<f64>, f64),
    {
        if grad.len() != self.n_params() {
            return Err(Error::Shape(format!(
                "gradient buffer has {} entries, model has {}",
                grad.len(),
                self.n_params()
            )));
        }
        let (ng, ns) = self.layout();
        let down = self.coarse_of(x)?;
        let gen_trace = self.params.generator.forward_trace(&x.input)?;
        let gen = down.with_values(gen_trace.output().to_vec());
        let w = self.w();
        let mixed = mix(&gen, down, w)?;
        let solved = match &self.params.projection {
            Some(cfg) => project(&mixed, cfg),
            None => mixed.clone(),
        };
        let (sigma, sigma_trace) = self.sigma(x)?;
        let mut sigma_cot = 0.0;
        let mut pred = None;
        let (_, g_grid) = self.lf.vjp_with(&solved, x.params.freq_index, |value| {
            let p = Prediction {
                value: value.to_vec(),
                sigma,
            };
            let (cv, cs) = seed(&p);
            sigma_cot = cs;
            pred = Some(p);
            cv
        })?;
        let pred = pred.ok_or_else(|| Error::NonFinite("solver returned no value".into()))?;
        let g_mixed = match &self.params.projection {
            Some(cfg) => project_vjp(&mixed, cfg, &g_grid),
            None => g_grid,
        };
        let (gen_grad, rest) = grad.split_at_mut(ng);
        let (sigma_grad, w_grad) = rest.split_at_mut(ns);
        let g_gen: Vec<f64> = g_mixed.iter().map(|g| w * g).collect();
        self.params.generator.backward_into(&gen_trace, &g_gen, gen_grad)?;
        if sigma_cot != 0.0 {
            self.params.sigma_net.backward_into(&sigma_trace, &[sigma_cot], sigma_grad)?;
        }
        if self.params.mix.is_learned() {
            let dw: f64 = g_mixed
                .iter()
                .zip(gen.values.iter().zip(&down.values))
                .map(|(g, (a, b))| g * (a - b))
                .sum();
            w_grad[0] += dw * w * (1.0 - w) * LOGIT_SCALE;
        }
        Ok(pred)
    }

    fn mixing_weight(&self) -> Option<f64> {
        Some(self.w())
    }
}

/// Baseline: the generator trunk plus one dense layer from the grid-sized
/// hidden vector straight to the target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NnOnlyModel {
    pub family: Family,
    pub net: Mlp,
    pub sigma_net: Mlp,
}

impl NnOnlyModel {
    pub fn new<R: Rng + ?Sized>(family: Family, config: &PedsConfig, rng: &mut R) -> Result<Self> {
        let lf_resolution = config.lf_resolution.unwrap_or(family.default_lf_resolution());
        let shape = family.grid_shape(lf_resolution)?;
        let mut sizes = vec![family.input_dim()];
        sizes.extend_from_slice(&config.generator_hidden);
        sizes.push(shape.nx * shape.ny);
        sizes.push(family.target_dim());
        let net = Mlp::init(sizes, OutputActivation::Identity, rng)?;
        let sigma = sigma_net(family.input_dim(), &config.sigma_hidden, rng)?;
        Self::from_parts(family, net, sigma)
    }

    pub fn from_parts(family: Family, net: Mlp, sigma_net: Mlp) -> Result<Self> {
        if net.input_dim() != family.input_dim()
            || sigma_net.input_dim() != family.input_dim()
            || net.output_dim() != family.target_dim()
            || sigma_net.output_dim() != 1
        {
            return Err(Error::Shape(format!("networks do not fit {family}")));
        }
        Ok(NnOnlyModel { family, net, sigma_net })
    }
}

impl Surrogate for NnOnlyModel {
    fn family(&self) -> Family {
        self.family
    }

    fn prepare(&self, p: &GeometryParams) -> Result<Prepared> {
        check_family(self.family, p)?;
        Ok(Prepared {
            params: p.clone(),
            input: p.nn_input(),
            coarse: None,
        })
    }

    fn predict(&self, x: &Prepared) -> Result<Prediction> {
        Ok(Prediction {
            value: self.net.forward(&x.input)?,
            sigma: self.sigma_net.forward(&x.input)?[0],
        })
    }

    fn n_params(&self) -> usize {
        self.net.n_params() + self.sigma_net.n_params()
    }

    fn gather(&self) -> Vec<f64> {
        let mut v = self.net.params().to_vec();
        v.extend_from_slice(self.sigma_net.params());
        v
    }

    fn scatter(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.n_params() {
            return Err(Error::Shape(format!(
                "model has {} parameters, got {}",
                self.n_params(),
                params.len()
            )));
        }
        let n = self.net.n_params();
        scatter_into(self.net.params_mut(), &params[..n])?;
        scatter_into(self.sigma_net.params_mut(), &params[n..])
    }

    fn backward<F>(&self, x: &Prepared, seed: F, grad: &mut [f64]) -> Result<Prediction>
    where
        F: FnOnce(&Prediction) -> (Vec<f64>, f64),
    {
        if grad.len() != self.n_params() {
            return Err(Error::Shape(format!(
                "gradient buffer has {} entries, model has {}",
                grad.len(),
                self.n_params()
            )));
        }
        let trace = self.net.forward_trace(&x.input)?;
        let sigma_trace = self.sigma_net.forward_trace(&x.input)?;
        let pred = Prediction {
            value: trace.output().to_vec(),
            sigma: sigma_trace.output()[0],
        };
        let (cv, cs) = seed(&pred);
        let (net_grad, sigma_grad) = grad.split_at_mut(self.net.n_params());
        self.net.backward_into(&trace, &cv, net_grad)?;
        if cs != 0.0 {
            self.sigma_net.backward_into(&sigma_trace, &[cs], sigma_grad)?;
        }
        Ok(pred)
    }
}

/// Mean prediction and total predictive variance of an ensemble:
/// `mean σᵢ² + mean μᵢ² − (mean μᵢ)²`, averaged over output components.
pub fn aggregate(members: &[Prediction]) -> Result<(Vec<f64>, f64)> {
    let first = members.first().ok_or(Error::EmptyEnsemble)?;
    let dim = first.value.len();
    if members.iter().any(|m| m.value.len() != dim) || dim == 0 {
        return Err(Error::Shape("ensemble members disagree on output length".into()));
    }
    let n = members.len() as f64;
    let mean_var = members.iter().map(|m| m.sigma * m.sigma).sum::<f64>() / n;
    let mut mean = vec![0.0; dim];
    let mut spread = 0.0;
    for (c, mc) in mean.iter_mut().enumerate() {
        let mu = members.iter().map(|m| m.value[c]).sum::<f64>() / n;
        let sq = members.iter().map(|m| m.value[c] * m.value[c]).sum::<f64>() / n;
        *mc = mu;
        spread += (sq - mu * mu).max(0.0);
    }
    Ok((mean, mean_var + spread / dim as f64))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble<M> {
    pub members: Vec<M>,
}

impl<M: Surrogate> Ensemble<M> {
    pub fn new(members: Vec<M>) -> Result<Self> {
        let first = members.first().ok_or(Error::EmptyEnsemble)?;
        if members.iter().any(|m| m.family() != first.family()) {
            return Err(Error::Config("ensemble members belong to different families".into()));
        }
        Ok(Ensemble { members })
    }

    pub fn family(&self) -> Family {
        self.members[0].family()
    }

    /// Each member prepares its own view of the sample.
    pub fn prepare(&self, p: &GeometryParams) -> Result<Vec<Prepared>> {
        self.members.iter().map(|m| m.prepare(p)).collect()
    }

    /// `(mean prediction, total variance)`.
    pub fn predict(&self, p: &GeometryParams) -> Result<(Vec<f64>, f64)> {
        let preds = self
            .members
            .iter()
            .map(|m| m.prepare(p).and_then(|x| m.predict(&x)))
            .collect::<Result<Vec<_>>>()?;
        aggregate(&preds)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InclusionReport {
    /// Per-component bounds of the sampled low-fidelity outputs.
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub lf_samples: usize,
    pub inside: usize,
    pub total: usize,
    pub fraction: f64,
}

/// Samples low-fidelity geometries (all medium, all hole, random pixel
/// values, random binary masks), evaluates their property range and counts
/// how many high-fidelity targets fall inside it.
pub fn check_inclusion(
    lf: &LowFidelity,
    targets: &[Vec<f64>],
    lf_samples: usize,
    seed: u64,
) -> Result<InclusionReport> {
    if targets.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let family = lf.family();
    let dim = family.target_dim();
    let (lo_m, hi_m) = family.material_bounds();
    let shape = lf.shape();
    let n = shape.nx * shape.ny;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let freqs: Vec<Option<usize>> = if family.is_maxwell() {
        (0..crate::geometry::MAXWELL_WAVELENGTHS.len()).map(Some).collect()
    } else {
        vec![None]
    };
    let mut lo = vec![f64::INFINITY; dim];
    let mut hi = vec![f64::NEG_INFINITY; dim];
    let mut count = 0;
    for k in 0..lf_samples.max(2) {
        let values: Vec<f64> = match k {
            0 => vec![hi_m; n],
            1 => vec![lo_m; n],
            k if k % 2 == 0 => (0..n).map(|_| rng.gen_range(lo_m..=hi_m)).collect(),
            _ => (0..n).map(|_| if rng.gen::<bool>() { hi_m } else { lo_m }).collect(),
        };
        let grid = MaterialGrid::uniform(shape, 0.0).with_values(values);
        for &f in &freqs {
            let v = lf.evaluate(&grid, f)?;
            for c in 0..dim {
                lo[c] = lo[c].min(v[c]);
                hi[c] = hi[c].max(v[c]);
            }
        }
        count += 1;
    }
    let inside = targets
        .iter()
        .filter(|t| t.len() == dim && t.iter().enumerate().all(|(c, v)| *v >= lo[c] && *v <= hi[c]))
        .count();
    Ok(InclusionReport {
        lo,
        hi,
        lf_samples: count,
        inside,
        total: targets.len(),
        fraction: inside as f64 / targets.len() as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> PedsConfig {
        PedsConfig {
            generator_hidden: vec![12, 10],
            sigma_hidden: vec![6],
            ..PedsConfig::default()
        }
    }

    fn model(family: Family, seed: u64) -> PedsModel {
        PedsModel::new(family, &small_config(), &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
    }

    #[test]
    fn zero_weight_reduces_to_low_fidelity_baseline() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for family in [Family::Fourier16, Family::Maxwell10] {
            let m = model(family, 2).with_frozen_w(0.0).unwrap();
            let p = GeometryParams::sample(family, &mut rng);
            let x = m.prepare(&p).unwrap();
            let direct = m.low_fidelity().evaluate(&m.downsample(&p).unwrap(), p.freq_index).unwrap();
            assert_eq!(m.predict(&x).unwrap().value, direct);
        }
    }

    #[test]
    fn generator_equal_to_downsample_makes_w_irrelevant() {
        let mut m = model(Family::Fourier16, 3);
        let p = GeometryParams::sample(Family::Fourier16, &mut ChaCha8Rng::seed_from_u64(4));
        let x = m.prepare(&p).unwrap();
        let down = m.downsample(&p).unwrap();
        // zero weights plus biases at the logits of the target values
        let gen = &mut m.params.generator;
        let n = gen.n_params();
        let nout = gen.output_dim();
        let params = gen.params_mut();
        for v in params.iter_mut() {
            *v = 0.0;
        }
        for (b, d) in params[n - nout..].iter_mut().zip(&down.values) {
            let s = (d - 0.1) / 0.9;
            *b = math::ln(s / (1.0 - s));
        }
        let gen_grid = m.params.generator.forward(&x.input).unwrap();
        for (a, b) in gen_grid.iter().zip(&down.values) {
            assert!((a - b).abs() < 1e-12);
        }
        let a = m.with_frozen_w(0.2).unwrap().predict(&x).unwrap().value[0];
        let b = m.with_frozen_w(0.9).unwrap().predict(&x).unwrap().value[0];
        assert!((a - b).abs() < 1e-10 * a.abs());
    }

    #[test]
    fn mixing_weight_stays_in_unit_interval() {
        let mut m = model(Family::Fourier16, 5);
        let mut params = m.gather();
        let last = params.len() - 1;
        params[last] = -40.0;
        m.scatter(&params).unwrap();
        // a large step in the negative direction
        params[last] -= 1e6;
        m.scatter(&params).unwrap();
        let w = m.w();
        assert!((0.0..=1.0).contains(&w), "{w}");
        assert!((model(Family::Fisher16, 1).w() - INITIAL_W).abs() < 1e-15);
    }

    fn loss_grad_fd(m: &PedsModel, p: &GeometryParams, coords: &[usize]) {
        let x = m.prepare(p).unwrap();
        let dim = m.family().target_dim();
        let cot: Vec<f64> = (0..dim).map(|c| 0.7 - 0.9 * c as f64).collect();
        let objective = |mm: &PedsModel| -> f64 {
            let pr = mm.predict(&x).unwrap();
            pr.value.iter().zip(&cot).map(|(a, b)| a * b).sum::<f64>() + 0.3 * pr.sigma
        };
        let mut grad = vec![0.0; m.n_params()];
        m.backward(&x, |_| (cot.clone(), 0.3), &mut grad).unwrap();
        let theta = m.gather();
        let h = 1e-5;
        for &k in coords {
            let mut plus = m.clone();
            let mut tp = theta.clone();
            tp[k] += h;
            plus.scatter(&tp).unwrap();
            let mut minus = m.clone();
            let mut tm = theta.clone();
            tm[k] -= h;
            minus.scatter(&tm).unwrap();
            let fd = (objective(&plus) - objective(&minus)) / (2.0 * h);
            let scale = grad.iter().fold(0.0f64, |a, g| a.max(g.abs()));
            assert!(
                (fd - grad[k]).abs() <= 1e-4 * fd.abs().max(1e-3 * scale),
                "coord {k}: {} vs {fd}",
                grad[k]
            );
        }
    }

    #[test]
    fn end_to_end_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for family in [Family::Fourier16, Family::Fisher25, Family::Maxwell10] {
            let m = model(family, 9);
            let p = GeometryParams::sample(family, &mut rng);
            let n = m.n_params();
            let mut coords: Vec<usize> = (0..15).map(|_| rng.gen_range(0..n - 1)).collect();
            coords.push(n - 1); // mixing logit
            coords.push(m.params.generator.n_params()); // first sigma weight
            loss_grad_fd(&m, &p, &coords);
        }
    }

    #[test]
    fn zero_cotangent_gives_zero_gradient() {
        let m = model(Family::Fourier25, 3);
        let p = GeometryParams::sample(Family::Fourier25, &mut ChaCha8Rng::seed_from_u64(0));
        let x = m.prepare(&p).unwrap();
        let mut grad = vec![0.0; m.n_params()];
        m.backward(&x, |_| (vec![0.0], 0.0), &mut grad).unwrap();
        assert!(grad.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn checkpoint_round_trip() {
        let m = model(Family::Maxwell10, 4);
        let json = serde_json::to_string(m.params()).unwrap();
        let back = PedsModel::from_params(serde_json::from_str(&json).unwrap()).unwrap();
        assert_eq!(back.params(), m.params());
    }

    #[test]
    fn nn_only_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let m = NnOnlyModel::new(Family::Maxwell10, &small_config(), &mut rng).unwrap();
        let p = GeometryParams::sample(Family::Maxwell10, &mut rng);
        let x = m.prepare(&p).unwrap();
        let mut grad = vec![0.0; m.n_params()];
        m.backward(&x, |_| (vec![1.0, -0.5], 0.2), &mut grad).unwrap();
        let theta = m.gather();
        let obj = |t: &[f64]| {
            let mut mm = m.clone();
            mm.scatter(t).unwrap();
            let pr = mm.predict(&x).unwrap();
            pr.value[0] - 0.5 * pr.value[1] + 0.2 * pr.sigma
        };
        for _ in 0..20 {
            let k = rng.gen_range(0..theta.len());
            let (mut a, mut b) = (theta.clone(), theta.clone());
            a[k] += 1e-5;
            b[k] -= 1e-5;
            let fd = (obj(&a) - obj(&b)) / 2e-5;
            assert!((fd - grad[k]).abs() <= 1e-5 * fd.abs().max(1e-3));
        }
    }

    #[test]
    fn aggregation_formula() {
        let p = |v: f64, s: f64| Prediction { value: vec![v], sigma: s };
        let (m, var) = aggregate(&[p(0.4, 0.2), p(0.4, 0.2), p(0.4, 0.2)]).unwrap();
        assert!((m[0] - 0.4).abs() < 1e-15 && (var - 0.04).abs() < 1e-15);
        let (m, var) = aggregate(&[p(1.0, 0.0), p(-1.0, 0.0)]).unwrap();
        assert_eq!((m[0], var), (0.0, 1.0));
        // five members, worked by hand:
        // mean μ = 0.3, mean μ² = 0.198, mean σ² = 0.022
        let members = [p(0.1, 0.1), p(0.2, 0.2), p(0.3, 0.1), p(0.4, 0.2), p(0.5, 0.1)];
        let (m, var) = aggregate(&members).unwrap();
        assert!((m[0] - 0.3).abs() < 1e-15);
        assert!((var - (0.022 + 0.11 - 0.09)).abs() < 1e-14, "{var}");
        assert_eq!(aggregate(&[]), Err(Error::EmptyEnsemble));
    }

    #[test]
    fn inclusion_counts_targets_inside_range() {
        let lf = LowFidelity::new(Family::Fourier16, 4).unwrap();
        let targets = vec![vec![0.5], vec![0.3], vec![0.9]];
        let r = check_inclusion(&lf, &targets, 20, 0).unwrap();
        assert_eq!(r.fraction, 1.0);
        assert!((r.hi[0] - 1.0).abs() < 1e-12 && (r.lo[0] - 0.1).abs() < 1e-12);
        let mut more = targets.clone();
        more.push(vec![1.5]);
        let r = check_inclusion(&lf, &more, 20, 0).unwrap();
        assert_eq!((r.inside, r.total), (3, 4));
    }
}
