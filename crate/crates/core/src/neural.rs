//! Fully connected networks with hand-written reverse mode, and Adam.
//!
//! Parameters live in one flat vector, layer by layer, each layer storing its
//! weight matrix row-major (`out × in`) followed by its bias. Hidden layers
//! use ReLU.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::math;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OutputActivation {
    Identity,
    /// `lo + (hi − lo)·sigmoid(z)`.
    Bounded { lo: f64, hi: f64 },
    /// `softplus(z) + floor`, strictly positive.
    Softplus { floor: f64 },
}

impl OutputActivation {
    fn validate(self) -> Result<()> {
        match self {
            OutputActivation::Bounded { lo, hi } if !(lo.is_finite() && hi.is_finite() && lo < hi) => {
                Err(Error::Config(format!("bounded output needs lo < hi, got [{lo}, {hi}]")))
            }
            OutputActivation::Softplus { floor } if !(floor.is_finite() && floor >= 0.0) => {
                Err(Error::Config(format!("softplus floor {floor} must be >= 0")))
            }
            _ => Ok(()),
        }
    }

    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            OutputActivation::Identity => z,
            OutputActivation::Bounded { lo, hi } => lo + (hi - lo) * math::sigmoid(z),
            OutputActivation::Softplus { floor } => math::softplus(z) + floor,
        }
    }

    #[inline]
    fn derivative(self, z: f64) -> f64 {
        match self {
            OutputActivation::Identity => 1.0,
            OutputActivation::Bounded { lo, hi } => {
                let s = math::sigmoid(z);
                (hi - lo) * s * (1.0 - s)
            }
            OutputActivation::Softplus { .. } => math::sigmoid(z),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MlpRepr")]
pub struct Mlp {
    sizes: Vec<usize>,
    output: OutputActivation,
    params: Vec<f64>,
}

#[derive(Deserialize)]
struct MlpRepr {
    sizes: Vec<usize>,
    output: OutputActivation,
    params: Vec<f64>,
}

impl TryFrom<MlpRepr> for Mlp {
    type Error = Error;

    fn try_from(r: MlpRepr) -> Result<Self> {
        Mlp::from_parts(r.sizes, r.output, r.params)
    }
}

fn param_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[1] * (w[0] + 1)).sum()
}

/// Intermediate values of one forward pass, kept for the backward pass.
#[derive(Debug, Clone)]
pub struct Trace {
    /// `activations[0]` is the input; `activations[l + 1]` the output of layer `l`.
    activations: Vec<Vec<f64>>,
    /// Pre-activation of the last layer.
    logits: Vec<f64>,
}

impl Trace {
    pub fn output(&self) -> &[f64] {
        self.activations.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

impl Mlp {
    /// Network with all parameters zero.
    pub fn zeros(sizes: Vec<usize>, output: OutputActivation) -> Result<Self> {
        let n = Self::check_sizes(&sizes)?;
        output.validate()?;
        Ok(Mlp {
            sizes,
            output,
            params: vec![0.0; n],
        })
    }

    /// He-uniform weights, zero biases.
    pub fn init<R: Rng + ?Sized>(sizes: Vec<usize>, output: OutputActivation, rng: &mut R) -> Result<Self> {
        let mut net = Self::zeros(sizes, output)?;
        let mut offset = 0;
        for l in 0..net.n_layers() {
            let (fan_in, fan_out) = (net.sizes[l], net.sizes[l + 1]);
            let limit = math::sqrt(6.0 / fan_in as f64);
            for w in &mut net.params[offset..offset + fan_in * fan_out] {
                *w = rng.gen_range(-limit..limit);
            }
            offset += fan_out * (fan_in + 1);
        }
        Ok(net)
    }

    pub fn from_parts(sizes: Vec<usize>, output: OutputActivation, params: Vec<f64>) -> Result<Self> {
        let n = Self::check_sizes(&sizes)?;
        output.validate()?;
        if params.len() != n {
            return Err(Error::Shape(format!(
                "layer sizes {sizes:?} need {n} parameters, got {}",
                params.len()
            )));
        }
        if let Some(k) = params.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("network parameter {k}")));
        }
        Ok(Mlp { sizes, output, params })
    }

    fn check_sizes(sizes: &[usize]) -> Result<usize> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::Config(format!("invalid layer sizes {sizes:?}")));
        }
        Ok(param_count(sizes))
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn n_layers(&self) -> usize {
        self.sizes.len() - 1
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        self.sizes[self.sizes.len() - 1]
    }

    pub fn output_activation(&self) -> OutputActivation {
        self.output
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::Shape(format!(
                "network expects {} inputs, got {}",
                self.input_dim(),
                x.len()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let mut a = x.to_vec();
        let mut offset = 0;
        let last = self.n_layers() - 1;
        for l in 0..self.n_layers() {
            let (z, next) = self.affine(l, offset, &a);
            offset = next;
            a = if l == last {
                z.into_iter().map(|v| self.output.apply(v)).collect()
            } else {
                z.into_iter().map(|v| v.max(0.0)).collect()
            };
        }
        Ok(a)
    }

    pub fn forward_trace(&self, x: &[f64]) -> Result<Trace> {
        self.check_input(x)?;
        let mut activations = Vec::with_capacity(self.sizes.len());
        activations.push(x.to_vec());
        let mut offset = 0;
        let last = self.n_layers() - 1;
        let mut logits = Vec::new();
        for l in 0..self.n_layers() {
            let (z, next) = self.affine(l, offset, &activations[l]);
            offset = next;
            if l == last {
                activations.push(z.iter().map(|&v| self.output.apply(v)).collect());
                logits = z;
            } else {
                activations.push(z.into_iter().map(|v| v.max(0.0)).collect());
            }
        }
        Ok(Trace { activations, logits })
    }

    fn affine(&self, l: usize, offset: usize, a: &[f64]) -> (Vec<f64>, usize) {
        let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
        let w = &self.params[offset..offset + n_in * n_out];
        let b = &self.params[offset + n_in * n_out..offset + n_out * (n_in + 1)];
        let z = w
            .chunks_exact(n_in)
            .zip(b)
            .map(|(row, &bi)| row.iter().zip(a).fold(bi, |acc, (wi, ai)| acc + wi * ai))
            .collect();
        (z, offset + n_out * (n_in + 1))
    }

    /// Adds the parameter gradient of `cotangent · output` to `grad` and
    /// returns the input gradient.
    pub fn backward_into(&self, trace: &Trace, cotangent: &[f64], grad: &mut [f64]) -> Result<Vec<f64>> {
        if cotangent.len() != self.output_dim() || grad.len() != self.n_params() {
            return Err(Error::Shape(format!(
                "backward got cotangent {} (want {}) and gradient buffer {} (want {})",
                cotangent.len(),
                self.output_dim(),
                grad.len(),
                self.n_params()
            )));
        }
        let mut delta: Vec<f64> = cotangent
            .iter()
            .zip(&trace.logits)
            .map(|(c, &z)| c * self.output.derivative(z))
            .collect();
        let mut end = self.n_params();
        for l in (0..self.n_layers()).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let start = end - n_out * (n_in + 1);
            let a = &trace.activations[l];
            let (gw, gb) = grad[start..end].split_at_mut(n_in * n_out);
            for ((row, g), &d) in gw.chunks_exact_mut(n_in).zip(gb.iter_mut()).zip(&delta) {
                *g += d;
                if d != 0.0 {
                    for (gi, ai) in row.iter_mut().zip(a) {
                        *gi += d * ai;
                    }
                }
            }
            let w = &self.params[start..start + n_in * n_out];
            let mut back = vec![0.0; n_in];
            for (row, &d) in w.chunks_exact(n_in).zip(&delta) {
                if d != 0.0 {
                    for (bi, wi) in back.iter_mut().zip(row) {
                        *bi += d * wi;
                    }
                }
            }
            if l > 0 {
                for (bi, &ai) in back.iter_mut().zip(a) {
                    if ai <= 0.0 {
                        *bi = 0.0;
                    }
                }
            }
            delta = back;
            end = start;
        }
        Ok(delta)
    }

    /// Gradients of `cotangent · forward(x)` with respect to the parameters
    /// and to `x`.
    pub fn backward(&self, x: &[f64], cotangent: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let trace = self.forward_trace(x)?;
        let mut grad = vec![0.0; self.n_params()];
        let gx = self.backward_into(&trace, cotangent, &mut grad)?;
        Ok((grad, gx))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub config: AdamConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
}

impl Adam {
    pub fn new(n: usize, config: AdamConfig) -> Self {
        Adam {
            config,
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn moments(&self) -> (&[f64], &[f64]) {
        (&self.m, &self.v)
    }

    /// One bias-corrected update. Parameters are left untouched when any
    /// gradient entry is non-finite.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::Shape(format!(
                "optimizer sized {} got {} parameters and {} gradients",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        if let Some((index, &value)) = grads.iter().enumerate().find(|(_, g)| !g.is_finite()) {
            return Err(Error::NonFiniteGradient { index, value });
        }
        let AdamConfig {
            learning_rate: lr,
            beta1: b1,
            beta2: b2,
            epsilon: eps,
        } = self.config;
        self.step += 1;
        let c1 = 1.0 - math::powf(b1, self.step as f64);
        let c2 = 1.0 - math::powf(b2, self.step as f64);
        for (((p, &g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            *p -= lr * (*m / c1) / (math::sqrt(*v / c2) + eps);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_network_outputs_zero() {
        let net = Mlp::zeros(vec![3, 5, 2], OutputActivation::Identity).unwrap();
        assert_eq!(net.forward(&[1.0, -2.0, 3.0]).unwrap(), vec![0.0, 0.0]);
        assert_eq!(net.n_params(), 5 * 4 + 2 * 6);
    }

    #[test]
    fn identity_layer_adds_bias() {
        let mut params = vec![1.0, 0.0, 0.0, 1.0];
        params.extend([0.5, -2.0]);
        let net = Mlp::from_parts(vec![2, 2], OutputActivation::Identity, params).unwrap();
        assert_eq!(net.forward(&[3.0, 4.0]).unwrap(), vec![3.5, 2.0]);
    }

    #[test]
    fn bounded_output_stays_in_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut net = Mlp::init(vec![4, 8, 6], OutputActivation::Bounded { lo: 0.1, hi: 1.0 }, &mut rng).unwrap();
        for p in net.params_mut() {
            *p *= 100.0;
        }
        for x in [[1e3, -1e3, 0.0, 5.0], [0.0; 4], [-1e6, 1e6, 3.0, -3.0]] {
            for v in net.forward(&x).unwrap() {
                assert!((0.1..=1.0).contains(&v), "{v}");
            }
        }
    }

    #[test]
    fn linear_network_input_gradient_is_transpose() {
        let w = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let mut params = w.to_vec();
        params.extend([0.0, 0.0]);
        let net = Mlp::from_parts(vec![3, 2], OutputActivation::Identity, params).unwrap();
        let (_, gx) = net.backward(&[0.3, 0.1, -0.2], &[1.0, -1.0]).unwrap();
        assert_eq!(gx, vec![1.0 - 4.0, 2.0 - 5.0, 3.0 - 6.0]);
    }

    #[test]
    fn zero_cotangent_gives_zero_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = Mlp::init(vec![3, 7, 2], OutputActivation::Identity, &mut rng).unwrap();
        let (g, gx) = net.backward(&[0.1, 0.2, 0.3], &[0.0, 0.0]).unwrap();
        assert!(g.iter().chain(&gx).all(|&v| v == 0.0));
    }

    fn fd_check(net: &Mlp, x: &[f64], cot: &[f64], rng: &mut ChaCha8Rng, tol: f64) {
        let (g, gx) = net.backward(x, cot).unwrap();
        let objective = |n: &Mlp, x: &[f64]| -> f64 {
            n.forward(x).unwrap().iter().zip(cot).map(|(a, b)| a * b).sum()
        };
        let h = 1e-5;
        for _ in 0..50 {
            let k = rng.gen_range(0..net.n_params());
            let mut plus = net.clone();
            plus.params_mut()[k] += h;
            let mut minus = net.clone();
            minus.params_mut()[k] -= h;
            let fd = (objective(&plus, x) - objective(&minus, x)) / (2.0 * h);
            let err = (fd - g[k]).abs() / fd.abs().max(1e-6);
            assert!(err <= tol, "param {k}: {} vs {fd}", g[k]);
        }
        for i in 0..x.len() {
            let mut xp = x.to_vec();
            xp[i] += h;
            let mut xm = x.to_vec();
            xm[i] -= h;
            let fd = (objective(net, &xp) - objective(net, &xm)) / (2.0 * h);
            assert!((fd - gx[i]).abs() / fd.abs().max(1e-6) <= tol);
        }
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let acts = [
            OutputActivation::Identity,
            OutputActivation::Bounded { lo: 0.1, hi: 1.0 },
            OutputActivation::Softplus { floor: 1e-6 },
        ];
        for act in acts {
            let net = Mlp::init(vec![5, 12, 9, 4], act, &mut rng).unwrap();
            let x: Vec<f64> = (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let cot: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
            fd_check(&net, &x, &cot, &mut rng, 1e-5);
        }
    }

    #[test]
    fn init_is_seeded() {
        let a = Mlp::init(vec![4, 6, 3], OutputActivation::Identity, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let b = Mlp::init(vec![4, 6, 3], OutputActivation::Identity, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert_eq!(a, b);
        // biases start at zero
        assert!(a.params()[24..30].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(Mlp::zeros(vec![3], OutputActivation::Identity).is_err());
        assert!(Mlp::zeros(vec![3, 0, 1], OutputActivation::Identity).is_err());
        assert!(Mlp::zeros(vec![1, 1], OutputActivation::Bounded { lo: 1.0, hi: 0.0 }).is_err());
        assert!(Mlp::from_parts(vec![2, 1], OutputActivation::Identity, vec![0.0; 2]).is_err());
        let net = Mlp::zeros(vec![2, 1], OutputActivation::Identity).unwrap();
        assert!(net.forward(&[1.0]).is_err());
    }

    #[test]
    fn adam_zero_gradient_from_rest_is_noop() {
        let mut p = vec![1.0, -2.0];
        let mut opt = Adam::new(2, AdamConfig::default());
        opt.step(&mut p, &[0.0, 0.0]).unwrap();
        assert_eq!(p, vec![1.0, -2.0]);
        assert_eq!(opt.step_count(), 1);
    }

    #[test]
    fn adam_zero_gradient_decays_moments() {
        let mut p = vec![0.0];
        let mut opt = Adam::new(1, AdamConfig::default());
        opt.step(&mut p, &[2.0]).unwrap();
        let (m, v) = (opt.moments().0[0], opt.moments().1[0]);
        opt.step(&mut p, &[0.0]).unwrap();
        assert_eq!(opt.moments().0[0], 0.9 * m);
        assert_eq!(opt.moments().1[0], 0.999 * v);
    }

    #[test]
    fn adam_first_step_by_hand() {
        // m = 0.1 g, v = 0.001 g², corrected by 0.1 and 0.001:
        // step = lr · g / (|g| + ε).
        let g = [0.5, -3.0];
        let mut p = vec![1.0, 1.0];
        let mut opt = Adam::new(
            2,
            AdamConfig {
                learning_rate: 0.01,
                ..AdamConfig::default()
            },
        );
        opt.step(&mut p, &g).unwrap();
        let expect = [1.0 - 0.01 * 0.5 / (0.5 + 1e-8), 1.0 + 0.01 * 3.0 / (3.0 + 1e-8)];
        for (a, b) in p.iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn adam_constant_gradient_moves_at_learning_rate() {
        let mut p = vec![0.0];
        let mut opt = Adam::new(1, AdamConfig::default());
        let mut last = 0.0;
        for _ in 0..2000 {
            last = p[0];
            opt.step(&mut p, &[0.37]).unwrap();
        }
        assert!(((last - p[0]) - 1e-3).abs() < 1e-6);
    }

    #[test]
    fn adam_rejects_non_finite_gradient() {
        let mut p = vec![0.0, 0.0];
        let mut opt = Adam::new(2, AdamConfig::default());
        let err = opt.step(&mut p, &[1.0, f64::NAN]).unwrap_err();
        assert!(matches!(err, Error::NonFiniteGradient { index: 1, .. }));
        assert_eq!(p, vec![0.0, 0.0]);
        assert_eq!(opt.step_count(), 0);
    }

    #[test]
    fn checkpoint_round_trip_validates() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = Mlp::init(vec![2, 3, 1], OutputActivation::Softplus { floor: 1e-6 }, &mut rng).unwrap();
        let json = serde_json::to_string(&net).unwrap();
        let back: Mlp = serde_json::from_str(&json).unwrap();
        assert_eq!(back, net);
        let broken = json.replace("\"sizes\":[2,3,1]", "\"sizes\":[2,4,1]");
        assert!(serde_json::from_str::<Mlp>(&broken).is_err());
    }
}
