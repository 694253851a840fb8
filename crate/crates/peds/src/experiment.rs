//! Shared train/test experiments: PEDS, the NN-only baseline and the
//! low-fidelity solver evaluated on the same split.

use std::path::PathBuf;
use std::time::Instant;

use peds_core::geometry::{rasterize, Family};
use peds_core::metrics::{fractional_error, mean_of};
use peds_core::peds::{Ensemble, NnOnlyModel, PedsConfig, PedsModel};
use peds_core::solvers::LowFidelity;
use peds_core::training::{member_seed, train_ensemble, Floor, LossConfig, TrainConfig, TrainMonitor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{load_or_generate, overlap, gen_data, Dataset, GenConfig, TEST_STREAM, TRAIN_STREAM};
use crate::exec::Rayon;
use crate::{Error, Result};

pub const FE_DEFINITION: &str = "mean over test samples of |pred - target|_2 / |target|_2; zero-norm targets excluded";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub family: Family,
    pub n_train: usize,
    pub n_test: usize,
    pub seed: u64,
    pub hf_resolution: usize,
    pub ensemble: usize,
    pub peds: PedsConfig,
    pub train: TrainConfig,
    /// Also train the NN-only baseline.
    pub nn_only: bool,
    pub workers: usize,
    /// Cache directory for generated datasets.
    #[serde(skip)]
    pub data_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn new(family: Family, seed: u64) -> Self {
        let loss = if family.is_maxwell() {
            LossConfig::GaussianNll
        } else {
            LossConfig::default()
        };
        ExperimentConfig {
            family,
            n_train: 1000,
            n_test: 200,
            seed,
            hf_resolution: family.default_hf_resolution(),
            ensemble: peds_core::peds::ENSEMBLE_SIZE,
            peds: PedsConfig::default(),
            train: TrainConfig {
                loss,
                seed,
                ..TrainConfig::default()
            },
            nn_only: true,
            workers: 0,
            data_dir: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_train == 0 || self.n_test == 0 || self.ensemble == 0 {
            return Err(Error::Input("n_train, n_test and ensemble must be positive".into()));
        }
        self.train.validate()?;
        Ok(())
    }

    pub fn gen_config(&self, n: usize, stream: u64) -> GenConfig {
        GenConfig {
            family: self.family,
            n,
            resolution: self.hf_resolution,
            seed: self.seed,
            stream,
            workers: self.workers,
        }
    }

    /// Training and test sets, from the cache when one is configured.
    pub fn datasets(&self) -> Result<(Dataset, Dataset)> {
        let get = |n, stream| {
            let cfg = self.gen_config(n, stream);
            match &self.data_dir {
                Some(dir) => {
                    let name = format!("{}-r{}-s{}-{}-n{}.jsonl", self.family, self.hf_resolution, self.seed, stream, n);
                    load_or_generate(&cfg, &dir.join(name))
                }
                None => gen_data(&cfg),
            }
        };
        Ok((get(self.n_train, TRAIN_STREAM)?, get(self.n_test, TEST_STREAM)?))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub hf_mean_seconds: f64,
    pub model_mean_seconds: f64,
    pub speedup: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model: String,
    pub family: Family,
    pub fe_definition: String,
    pub fe: f64,
    pub per_sample: Vec<Option<f64>>,
    pub excluded: usize,
    pub n_train: usize,
    pub n_test: usize,
    #[serde(default)]
    pub timing: Option<Timing>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemberSummary {
    pub model: String,
    pub member: usize,
    pub epochs: usize,
    pub best_epoch: Option<usize>,
    pub status: peds_core::training::TrainStatus,
    pub train_loss: f64,
    pub floor_loss: Option<f64>,
    pub fell_back_to_floor: bool,
    pub w: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageFailure {
    pub stage: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub fe_definition: String,
    pub test_set: String,
    pub train_test_overlap: usize,
    pub reports: Vec<EvalReport>,
    /// Low-fidelity FE divided by PEDS FE.
    pub improvement: Option<f64>,
    pub training: Vec<MemberSummary>,
    pub failures: Vec<StageFailure>,
}

impl ExperimentReport {
    pub fn report(&self, model: &str) -> Option<&EvalReport> {
        self.reports.iter().find(|r| r.model == model)
    }

    /// Improvement recomputed from the stored per-sample errors.
    pub fn recompute_improvement(&self) -> Option<f64> {
        let fe = |m| self.report(m).and_then(|r| mean_of(r.per_sample.clone()).ok()).map(|f| f.fe);
        Some(fe("low_fidelity")? / fe("peds")?)
    }

    /// Plain-text comparison table.
    pub fn table(&self) -> String {
        let mut s = format!(
            "family {}  n_train {}  n_test {}  seed {}\n{:<14}{:>10}{:>12}\n",
            self.config.family, self.config.n_train, self.config.n_test, self.config.seed, "model", "FE", "speedup"
        );
        for r in &self.reports {
            let sp = r.timing.as_ref().map_or("-".to_string(), |t| format!("{:.0}x", t.speedup));
            s += &format!("{:<14}{:>9.2}%{:>12}\n", r.model, 100.0 * r.fe, sp);
        }
        if let Some(i) = self.improvement {
            s += &format!("improvement over low fidelity: {i:.2}x\n");
        }
        for f in &self.failures {
            s += &format!("FAILED {}: {}\n", f.stage, f.error);
        }
        s
    }
}

/// Strips wall-clock fields so two reports can be compared for equality.
pub fn without_timing(v: &serde_json::Value) -> serde_json::Value {
    use serde_json::Value;
    match v {
        Value::Object(m) => Value::Object(
            m.iter()
                .filter(|(k, _)| k.as_str() != "timing")
                .map(|(k, v)| (k.clone(), without_timing(v)))
                .collect(),
        ),
        Value::Array(a) => Value::Array(a.iter().map(without_timing).collect()),
        other => other.clone(),
    }
}

/// Evaluates `predict` on every test sample, timing the calls.
pub fn evaluate<F>(model: &str, test: &Dataset, n_train: usize, hf_mean: Option<f64>, predict: F) -> Result<EvalReport>
where
    F: Fn(&peds_core::geometry::GeometryParams) -> peds_core::Result<Vec<f64>>,
{
    let t0 = Instant::now();
    let preds = test
        .samples
        .iter()
        .map(|s| predict(&s.params))
        .collect::<peds_core::Result<Vec<_>>>()?;
    let per_point = t0.elapsed().as_secs_f64() / test.len() as f64;
    let targets: Vec<Vec<f64>> = test.samples.iter().map(|s| s.target.clone()).collect();
    let fe = fractional_error(&preds, &targets)?;
    Ok(EvalReport {
        model: model.into(),
        family: test.family(),
        fe_definition: FE_DEFINITION.into(),
        fe: fe.fe,
        per_sample: fe.per_sample,
        excluded: fe.excluded,
        n_train,
        n_test: test.len(),
        timing: hf_mean.map(|h| Timing {
            hf_mean_seconds: h,
            model_mean_seconds: per_point,
            speedup: h / per_point,
        }),
    })
}

pub fn low_fidelity_predictor(family: Family, resolution: usize) -> Result<impl Fn(&peds_core::geometry::GeometryParams) -> peds_core::Result<Vec<f64>>> {
    let lf = LowFidelity::new(family, resolution)?;
    Ok(move |p: &peds_core::geometry::GeometryParams| lf.evaluate(&rasterize(p, lf.resolution())?, p.freq_index))
}

pub fn new_peds_members(family: Family, cfg: &PedsConfig, n: usize, seed: u64) -> peds_core::Result<Vec<PedsModel>> {
    (0..n)
        .map(|k| PedsModel::new(family, cfg, &mut ChaCha8Rng::seed_from_u64(member_seed(seed, k))))
        .collect()
}

pub fn new_nn_members(family: Family, cfg: &PedsConfig, n: usize, seed: u64) -> peds_core::Result<Vec<NnOnlyModel>> {
    (0..n)
        .map(|k| NnOnlyModel::new(family, cfg, &mut ChaCha8Rng::seed_from_u64(member_seed(seed, k) ^ 0xbead)))
        .collect()
}

/// Trains an ensemble and records one summary per member.
pub fn fit<M: Floor, T: TrainMonitor + ?Sized>(
    name: &str,
    members: Vec<M>,
    train: &Dataset,
    cfg: &TrainConfig,
    monitor: &T,
    summaries: &mut Vec<MemberSummary>,
) -> Result<Ensemble<M>> {
    monitor.on_stage(name);
    let outcomes = train_ensemble(members, &train.samples, cfg, &Rayon, monitor)?;
    for (k, o) in outcomes.iter().enumerate() {
        summaries.push(MemberSummary {
            model: name.into(),
            member: k,
            epochs: o.history.len(),
            best_epoch: o.best_epoch,
            status: o.status.clone(),
            train_loss: o.train_loss,
            floor_loss: o.floor_loss,
            fell_back_to_floor: o.fell_back_to_floor,
            w: o.model.mixing_weight(),
        });
    }
    Ok(Ensemble::new(outcomes.into_iter().map(|o| o.model).collect())?)
}

/// Runs the full comparison. Stage failures are recorded in the report
/// instead of aborting; only an invalid configuration is an error.
pub fn run_experiment<T: TrainMonitor + ?Sized>(cfg: &ExperimentConfig, monitor: &T) -> Result<ExperimentReport> {
    cfg.validate()?;
    let mut report = ExperimentReport {
        config: cfg.clone(),
        fe_definition: FE_DEFINITION.into(),
        test_set: format!("{} uniform points, seed {} stream {}", cfg.n_test, cfg.seed, TEST_STREAM),
        train_test_overlap: 0,
        reports: Vec::new(),
        improvement: None,
        training: Vec::new(),
        failures: Vec::new(),
    };
    let fail = |report: &mut ExperimentReport, stage: &str, e: Error| {
        report.failures.push(StageFailure {
            stage: stage.into(),
            error: e.to_string(),
        })
    };
    let (train, test) = match cfg.datasets() {
        Ok(d) => d,
        Err(e) => {
            fail(&mut report, "data", e);
            return Ok(report);
        }
    };
    report.train_test_overlap = overlap(&train.samples, &test.samples);
    let hf_mean = test.mean_timing().or(train.mean_timing());
    let n_train = train.len();

    let lf_res = cfg.peds.lf_resolution.unwrap_or(cfg.family.default_lf_resolution());
    match low_fidelity_predictor(cfg.family, lf_res).and_then(|f| evaluate("low_fidelity", &test, 0, hf_mean, f)) {
        Ok(r) => report.reports.push(r),
        Err(e) => fail(&mut report, "low_fidelity", e),
    }

    let peds = new_peds_members(cfg.family, &cfg.peds, cfg.ensemble, cfg.seed)
        .map_err(Error::from)
        .and_then(|m| fit("peds", m, &train, &cfg.train, monitor, &mut report.training))
        .and_then(|e| evaluate("peds", &test, n_train, hf_mean, |p| e.predict(p).map(|r| r.0)));
    match peds {
        Ok(r) => report.reports.push(r),
        Err(e) => fail(&mut report, "peds", e),
    }

    if cfg.nn_only {
        let nn = new_nn_members(cfg.family, &cfg.peds, cfg.ensemble, cfg.seed)
            .map_err(Error::from)
            .and_then(|m| fit("nn_only", m, &train, &cfg.train, monitor, &mut report.training))
            .and_then(|e| evaluate("nn_only", &test, n_train, hf_mean, |p| e.predict(p).map(|r| r.0)));
        match nn {
            Ok(r) => report.reports.push(r),
            Err(e) => fail(&mut report, "nn_only", e),
        }
    }
    report.improvement = report.recompute_improvement();
    Ok(report)
}
