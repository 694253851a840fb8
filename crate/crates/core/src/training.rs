//! Losses, the minibatch Adam loop, ensembles and active learning.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::exec::Executor;
use crate::geometry::{Family, GeometryParams};
use crate::math;
use crate::neural::{Adam, AdamConfig};
use crate::peds::{aggregate, Ensemble, Prediction, Prepared, Surrogate};
use crate::{Error, Result};

/// Number of samples whose gradients are summed together before the
/// per-chunk partial sums are added in order. Fixed so that results do not
/// depend on how the executor schedules work.
pub const CHUNK: usize = 16;

/// A parameter vector and its high-fidelity target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub params: GeometryParams,
    pub target: Vec<f64>,
}

pub fn huber(a: f64, delta: f64) -> f64 {
    if a.abs() <= delta {
        0.5 * a * a
    } else {
        delta * (a.abs() - 0.5 * delta)
    }
}

pub fn huber_grad(a: f64, delta: f64) -> f64 {
    a.clamp(-delta, delta)
}

/// `log σ + ‖target − pred‖² / (2σ²)`, one σ shared by all components.
pub fn gaussian_nll(pred: &[f64], sigma: f64, target: &[f64]) -> Result<f64> {
    gaussian_nll_grad(pred, sigma, target).map(|(l, _, _)| l)
}

/// Loss with its derivatives in `pred` and `sigma`.
pub fn gaussian_nll_grad(pred: &[f64], sigma: f64, target: &[f64]) -> Result<(f64, Vec<f64>, f64)> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::NonPositiveSigma(sigma));
    }
    check_len(pred, target)?;
    let s2 = sigma * sigma;
    let sse: f64 = pred.iter().zip(target).map(|(p, t)| (t - p) * (t - p)).sum();
    let loss = math::ln(sigma) + sse / (2.0 * s2);
    let dpred = pred.iter().zip(target).map(|(p, t)| (p - t) / s2).collect();
    let dsigma = 1.0 / sigma - sse / (s2 * sigma);
    Ok((loss, dpred, dsigma))
}

fn check_len(pred: &[f64], target: &[f64]) -> Result<()> {
    if pred.len() != target.len() {
        return Err(Error::Shape(format!(
            "prediction has {} components, target {}",
            pred.len(),
            target.len()
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LossConfig {
    Huber { delta: f64 },
    GaussianNll,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig::Huber { delta: 1e-3 }
    }
}

impl LossConfig {
    pub fn validate(self) -> Result<()> {
        match self {
            LossConfig::Huber { delta } if !(delta > 0.0 && delta.is_finite()) => {
                Err(Error::Config(format!("Huber delta {delta} must be positive")))
            }
            _ => Ok(()),
        }
    }

    /// Per-sample loss and its cotangents for the value and for σ.
    pub fn eval(self, pred: &Prediction, target: &[f64]) -> Result<(f64, Vec<f64>, f64)> {
        match self {
            LossConfig::Huber { delta } => {
                check_len(&pred.value, target)?;
                let mut loss = 0.0;
                let grad = pred
                    .value
                    .iter()
                    .zip(target)
                    .map(|(p, t)| {
                        loss += huber(p - t, delta);
                        huber_grad(p - t, delta)
                    })
                    .collect();
                Ok((loss, grad, 0.0))
            }
            LossConfig::GaussianNll => gaussian_nll_grad(&pred.value, pred.sigma, target),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub loss: LossConfig,
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    /// Learning-rate factor applied after every epoch.
    pub lr_decay: f64,
    pub validation_fraction: f64,
    /// Epochs without validation improvement before stopping; 0 disables.
    pub patience: usize,
    pub seed: u64,
    /// Fall back to the model's low-fidelity floor when training ends with a
    /// higher training loss than that floor.
    pub non_degradation: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            loss: LossConfig::default(),
            epochs: 200,
            batch_size: 64,
            adam: AdamConfig::default(),
            lr_decay: 1.0,
            validation_fraction: 0.1,
            patience: 50,
            seed: 0,
            non_degradation: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.loss.validate()?;
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(Error::Config(format!(
                "validation fraction {} outside [0, 1)",
                self.validation_fraction
            )));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return Err(Error::Config(format!("lr decay {} outside (0, 1]", self.lr_decay)));
        }
        if !(self.adam.learning_rate > 0.0) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub member: usize,
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    pub w: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TrainStatus {
    Completed,
    EarlyStopped,
    /// The monitor asked to stop.
    Interrupted,
    /// A non-finite loss or gradient; the last good checkpoint is returned.
    Aborted { reason: String },
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<M> {
    pub model: M,
    pub history: Vec<EpochRecord>,
    pub status: TrainStatus,
    pub best_epoch: Option<usize>,
    /// Training-split loss of the returned model.
    pub train_loss: f64,
    /// Training-split loss of the low-fidelity floor, when the model has one.
    pub floor_loss: Option<f64>,
    pub fell_back_to_floor: bool,
}

/// Observes training; returning `false` stops after the current epoch.
pub trait TrainMonitor: Sync {
    fn on_epoch(&self, record: &EpochRecord) -> bool;

    /// Called when a new model starts training, e.g. `"peds"`.
    fn on_stage(&self, _stage: &str) {}
}

impl TrainMonitor for () {
    fn on_epoch(&self, _: &EpochRecord) -> bool {
        true
    }
}

/// Models with a built-in fallback that training must never do worse than.
pub trait Floor: Surrogate {
    /// The same model reduced to its physics-only path (for PEDS, `w = 0`).
    fn floor(&self) -> Option<Self>;
}

impl Floor for crate::peds::PedsModel {
    fn floor(&self) -> Option<Self> {
        self.with_frozen_w(0.0).ok()
    }
}

impl Floor for crate::peds::NnOnlyModel {
    fn floor(&self) -> Option<Self> {
        None
    }
}

pub fn prepare_all<M: Surrogate, E: Executor>(model: &M, data: &[Sample], exec: &E) -> Result<Vec<Prepared>> {
    exec.map(data.len(), |i| model.prepare(&data[i].params))
        .into_iter()
        .collect()
}

pub fn predict_all<M: Surrogate, E: Executor>(model: &M, xs: &[Prepared], exec: &E) -> Result<Vec<Prediction>> {
    exec.map(xs.len(), |i| model.predict(&xs[i])).into_iter().collect()
}

/// Mean loss over the given samples.
pub fn mean_loss<M: Surrogate, E: Executor>(
    model: &M,
    xs: &[Prepared],
    targets: &[&[f64]],
    loss: LossConfig,
    exec: &E,
) -> Result<f64> {
    if xs.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let chunks = xs.len().div_ceil(CHUNK);
    let parts = exec.map(chunks, |c| -> Result<f64> {
        let mut s = 0.0;
        for i in c * CHUNK..((c + 1) * CHUNK).min(xs.len()) {
            let p = model.predict(&xs[i])?;
            s += loss.eval(&p, targets[i])?.0;
        }
        Ok(s)
    });
    let mut total = 0.0;
    for p in parts {
        total += p?;
    }
    Ok(total / xs.len() as f64)
}

// Loss sum and gradient sum over `idx`.
fn batch_gradient<M: Surrogate, E: Executor>(
    model: &M,
    xs: &[Prepared],
    targets: &[&[f64]],
    idx: &[usize],
    loss: LossConfig,
    exec: &E,
) -> Result<(f64, Vec<f64>)> {
    let n = model.n_params();
    let chunks = idx.len().div_ceil(CHUNK);
    let parts = exec.map(chunks, |c| -> Result<(f64, Vec<f64>)> {
        let mut grad = vec![0.0; n];
        let mut total = 0.0;
        for &i in &idx[c * CHUNK..((c + 1) * CHUNK).min(idx.len())] {
            let mut err = None;
            model.backward(
                &xs[i],
                |p| match loss.eval(p, targets[i]) {
                    Ok((l, cv, cs)) => {
                        total += l;
                        (cv, cs)
                    }
                    Err(e) => {
                        err = Some(e);
                        (vec![0.0; p.value.len()], 0.0)
                    }
                },
                &mut grad,
            )?;
            if let Some(e) = err {
                return Err(e);
            }
        }
        Ok((total, grad))
    });
    let mut grad = vec![0.0; n];
    let mut total = 0.0;
    for part in parts {
        let (l, g) = part?;
        total += l;
        for (a, b) in grad.iter_mut().zip(&g) {
            *a += b;
        }
    }
    Ok((total, grad))
}

/// Seeded split of `0..n` into (training, validation) index sets.
pub fn split_indices(n: usize, validation_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0f_5b11_7000));
    let n_val = if n >= 10 { math::round(n as f64 * validation_fraction) as usize } else { 0 };
    let val = idx.split_off(n - n_val);
    (idx, val)
}

fn is_numeric_failure(e: &Error) -> bool {
    matches!(e, Error::NonFinite(_) | Error::NonFiniteGradient { .. } | Error::NonPositiveSigma(_))
}

/// Minibatch Adam with a seeded validation split, best-on-validation
/// checkpointing, early stopping and the low-fidelity floor.
pub fn train<M: Floor, E: Executor, T: TrainMonitor + ?Sized>(
    model: M,
    data: &[Sample],
    cfg: &TrainConfig,
    exec: &E,
    monitor: &T,
) -> Result<TrainOutcome<M>> {
    train_member(model, data, cfg, exec, monitor, 0)
}

fn train_member<M: Floor, E: Executor, T: TrainMonitor + ?Sized>(
    mut model: M,
    data: &[Sample],
    cfg: &TrainConfig,
    exec: &E,
    monitor: &T,
    member: usize,
) -> Result<TrainOutcome<M>> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let dim = model.family().target_dim();
    if let Some(k) = data.iter().position(|s| s.target.len() != dim || s.params.family != model.family()) {
        return Err(Error::Shape(format!("sample {k} does not fit a {} model", model.family())));
    }
    let xs = prepare_all(&model, data, exec)?;
    let targets: Vec<&[f64]> = data.iter().map(|s| s.target.as_slice()).collect();
    let (train_idx, val_idx) = split_indices(data.len(), cfg.validation_fraction, cfg.seed);
    let pick = |idx: &[usize]| -> (Vec<Prepared>, Vec<&[f64]>) {
        (idx.iter().map(|&i| xs[i].clone()).collect(), idx.iter().map(|&i| targets[i]).collect())
    };
    let (tx, tt) = pick(&train_idx);
    let (vx, vt) = pick(&val_idx);
    let order: Vec<usize> = (0..tx.len()).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = Adam::new(model.n_params(), cfg.adam);
    let mut theta = model.gather();
    let mut best = (f64::INFINITY, theta.clone(), None);
    let mut history = Vec::new();
    let mut status = TrainStatus::Completed;
    let mut since_best = 0;

    'epochs: for epoch in 0..cfg.epochs {
        let mut order = order.clone();
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let step = batch_gradient(&model, &tx, &tt, batch, cfg.loss, exec).and_then(|(l, mut g)| {
                if !l.is_finite() {
                    return Err(Error::NonFinite(format!("batch loss {l}")));
                }
                let scale = 1.0 / batch.len() as f64;
                for v in &mut g {
                    *v *= scale;
                }
                adam.step(&mut theta, &g)?;
                model.scatter(&theta)?;
                Ok(l)
            });
            match step {
                Ok(l) => epoch_loss += l,
                Err(e) if is_numeric_failure(&e) => {
                    status = TrainStatus::Aborted { reason: e.to_string() };
                    break 'epochs;
                }
                Err(e) => return Err(e),
            }
        }
        let train_loss = epoch_loss / tx.len() as f64;
        let val_loss = if vx.is_empty() {
            None
        } else {
            match mean_loss(&model, &vx, &vt, cfg.loss, exec) {
                Ok(v) => Some(v),
                Err(e) if is_numeric_failure(&e) => {
                    status = TrainStatus::Aborted { reason: e.to_string() };
                    break 'epochs;
                }
                Err(e) => return Err(e),
            }
        };
        let record = EpochRecord {
            member,
            epoch,
            train_loss,
            val_loss,
            w: model.mixing_weight(),
        };
        let score = val_loss.unwrap_or(train_loss);
        if score.is_finite() && score < best.0 {
            best = (score, theta.clone(), Some(epoch));
            since_best = 0;
        } else {
            since_best += 1;
        }
        let keep_going = monitor.on_epoch(&record);
        history.push(record);
        if !keep_going {
            status = TrainStatus::Interrupted;
            break;
        }
        if cfg.patience > 0 && since_best >= cfg.patience {
            status = TrainStatus::EarlyStopped;
            break;
        }
        adam.config.learning_rate *= cfg.lr_decay;
    }

    if best.2.is_some() || cfg.epochs == 0 {
        model.scatter(&best.1)?;
    }
    let train_loss = mean_loss(&model, &tx, &tt, cfg.loss, exec).unwrap_or(f64::INFINITY);
    let mut outcome = TrainOutcome {
        floor_loss: None,
        fell_back_to_floor: false,
        train_loss,
        model,
        history,
        status,
        best_epoch: best.2,
    };
    if cfg.non_degradation {
        if let Some(floor) = outcome.model.floor() {
            let floor_loss = mean_loss(&floor, &tx, &tt, cfg.loss, exec)?;
            outcome.floor_loss = Some(floor_loss);
            if !(outcome.train_loss <= floor_loss) {
                outcome.model = floor;
                outcome.train_loss = floor_loss;
                outcome.fell_back_to_floor = true;
            }
        }
    }
    Ok(outcome)
}

/// Seed of ensemble member `k`.
pub fn member_seed(seed: u64, k: usize) -> u64 {
    seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(k as u64 + 1)
}

/// Trains every member on the same data with its own seed.
pub fn train_ensemble<M: Floor, E: Executor, T: TrainMonitor + ?Sized>(
    members: Vec<M>,
    data: &[Sample],
    cfg: &TrainConfig,
    exec: &E,
    monitor: &T,
) -> Result<Vec<TrainOutcome<M>>> {
    if members.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    let mut out = Vec::with_capacity(members.len());
    for (k, m) in members.into_iter().enumerate() {
        let member_cfg = TrainConfig {
            seed: member_seed(cfg.seed, k),
            ..cfg.clone()
        };
        out.push(train_member(m, data, &member_cfg, exec, monitor, k)?);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlConfig {
    pub n_init: usize,
    pub iterations: usize,
    /// Oversampling factor: `m·k` candidates per iteration.
    pub m: usize,
    pub k: usize,
    /// Continue from the previous weights instead of reinitializing.
    pub warm_start: bool,
    /// Epochs per retraining round; the initial fit uses the training config.
    pub retrain_epochs: Option<usize>,
    pub ensemble: usize,
    pub seed: u64,
}

impl Default for AlConfig {
    fn default() -> Self {
        AlConfig {
            n_init: 64,
            iterations: 4,
            m: 4,
            k: 32,
            warm_start: true,
            retrain_epochs: None,
            ensemble: crate::peds::ENSEMBLE_SIZE,
            seed: 0,
        }
    }
}

impl AlConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_init == 0 || self.m == 0 || self.k == 0 || self.ensemble == 0 {
            return Err(Error::Config("n_init, m, k and ensemble must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Acquisition {
    pub iteration: usize,
    pub params: GeometryParams,
    /// Ensemble standard deviation at selection time.
    pub sigma: f64,
    /// Position in the uncertainty ranking (0 = most uncertain).
    pub rank: usize,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct AlOutcome<M> {
    pub ensemble: Ensemble<M>,
    pub dataset: Vec<Sample>,
    pub log: Vec<Acquisition>,
    pub skipped: usize,
    pub histories: Vec<Vec<EpochRecord>>,
}

/// Indices of the `k` largest scores, largest first; ties keep index order.
pub fn select_most_uncertain(scores: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx.truncate(k);
    idx
}

fn sample_points(family: Family, n: usize, rng: &mut ChaCha8Rng) -> Vec<GeometryParams> {
    (0..n).map(|_| GeometryParams::sample(family, rng)).collect()
}

/// Evaluates the oracle on every point; failures are logged, not fatal.
fn acquire<O, E>(points: &[GeometryParams], oracle: &O, exec: &E) -> Vec<core::result::Result<Vec<f64>, String>>
where
    O: Fn(&GeometryParams) -> Result<Vec<f64>> + Sync,
    E: Executor,
{
    exec.map(points.len(), |i| oracle(&points[i]).map_err(|e| e.to_string()))
}

/// Ensemble uncertainty (standard deviation) of each candidate.
pub fn ensemble_uncertainty<M: Surrogate, E: Executor>(
    ensemble: &Ensemble<M>,
    points: &[GeometryParams],
    exec: &E,
) -> Result<Vec<f64>> {
    exec.map(points.len(), |i| ensemble.predict(&points[i]).map(|(_, v)| math::sqrt(v)))
        .into_iter()
        .collect()
}

/// Pool-free active learning: fit on `n_init` random points, then for each
/// iteration draw `m·k` uniform candidates, keep the `k` the ensemble is
/// least sure about, label them with the oracle and retrain.
pub fn active_learn<M, F, O, E, T>(
    family: Family,
    cfg: &AlConfig,
    factory: F,
    oracle: O,
    train_cfg: &TrainConfig,
    exec: &E,
    monitor: &T,
) -> Result<AlOutcome<M>>
where
    M: Floor,
    F: Fn(usize, u64) -> Result<M>,
    O: Fn(&GeometryParams) -> Result<Vec<f64>> + Sync,
    E: Executor,
    T: TrainMonitor + ?Sized,
{
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut log = Vec::new();
    let mut dataset = Vec::new();
    let init = sample_points(family, cfg.n_init, &mut rng);
    for (p, r) in init.iter().zip(acquire(&init, &oracle, exec)) {
        match r {
            Ok(target) => dataset.push(Sample {
                params: p.clone(),
                target,
            }),
            Err(e) => log.push(Acquisition {
                iteration: 0,
                params: p.clone(),
                sigma: f64::NAN,
                rank: 0,
                error: Some(e),
            }),
        }
    }
    let mut out = active_learn_from(family, cfg, dataset, factory, oracle, train_cfg, exec, monitor)?;
    out.skipped += log.len();
    log.append(&mut out.log);
    out.log = log;
    Ok(out)
}

/// Candidates are drawn from their own stream so they never replay the
/// draws that produced the initial data.
pub const CANDIDATE_STREAM: u64 = 7;

/// [`active_learn`] starting from an already labelled initial set.
#[allow(clippy::too_many_arguments)]
pub fn active_learn_from<M, F, O, E, T>(
    family: Family,
    cfg: &AlConfig,
    initial: Vec<Sample>,
    factory: F,
    oracle: O,
    train_cfg: &TrainConfig,
    exec: &E,
    monitor: &T,
) -> Result<AlOutcome<M>>
where
    M: Floor,
    F: Fn(usize, u64) -> Result<M>,
    O: Fn(&GeometryParams) -> Result<Vec<f64>> + Sync,
    E: Executor,
    T: TrainMonitor + ?Sized,
{
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(CANDIDATE_STREAM);
    let mut log = Vec::new();
    let mut skipped = 0;
    let mut dataset = initial;
    let fresh = |round: usize| -> Result<Vec<M>> {
        (0..cfg.ensemble)
            .map(|k| factory(k, member_seed(cfg.seed.wrapping_add(round as u64), k)))
            .collect()
    };
    let mut round_cfg = TrainConfig {
        seed: cfg.seed,
        ..train_cfg.clone()
    };
    monitor.on_stage("al-0");
    let outcomes = train_ensemble(fresh(0)?, &dataset, &round_cfg, exec, monitor)?;
    let mut histories: Vec<Vec<EpochRecord>> = outcomes.iter().map(|o| o.history.clone()).collect();
    let mut ensemble = Ensemble::new(outcomes.into_iter().map(|o| o.model).collect())?;

    for it in 1..=cfg.iterations {
        let candidates = sample_points(family, cfg.m * cfg.k, &mut rng);
        let sigma = ensemble_uncertainty(&ensemble, &candidates, exec)?;
        let chosen = select_most_uncertain(&sigma, cfg.k);
        let picked: Vec<GeometryParams> = chosen.iter().map(|&i| candidates[i].clone()).collect();
        for ((rank, &ci), r) in chosen.iter().enumerate().zip(acquire(&picked, &oracle, exec)) {
            let mut entry = Acquisition {
                iteration: it,
                params: candidates[ci].clone(),
                sigma: sigma[ci],
                rank,
                error: None,
            };
            match r {
                Ok(target) => dataset.push(Sample {
                    params: candidates[ci].clone(),
                    target,
                }),
                Err(e) => {
                    skipped += 1;
                    entry.error = Some(e);
                }
            }
            log.push(entry);
        }
        round_cfg.seed = cfg.seed.wrapping_add(it as u64);
        if let Some(e) = cfg.retrain_epochs {
            round_cfg.epochs = e;
        }
        let start = if cfg.warm_start { ensemble.members.clone() } else { fresh(it)? };
        monitor.on_stage(&format!("al-{it}"));
        let outcomes = train_ensemble(start, &dataset, &round_cfg, exec, monitor)?;
        for (h, o) in histories.iter_mut().zip(&outcomes) {
            h.extend(o.history.iter().cloned());
        }
        ensemble = Ensemble::new(outcomes.into_iter().map(|o| o.model).collect())?;
    }
    Ok(AlOutcome {
        ensemble,
        dataset,
        log,
        skipped,
        histories,
    })
}

/// Ensemble-mean predictions.
pub fn ensemble_predict_all<M: Surrogate, E: Executor>(
    ensemble: &Ensemble<M>,
    points: &[GeometryParams],
    exec: &E,
) -> Result<Vec<(Vec<f64>, f64)>> {
    exec.map(points.len(), |i| ensemble.predict(&points[i])).into_iter().collect()
}

/// Aggregate from already computed member predictions.
pub fn combine(members: &[Prediction]) -> Result<(Vec<f64>, f64)> {
    aggregate(members)
}
