//! Active learning against random sampling at equal labelling budget.
//!
//! For each seed the random arm labels `budget` uniform points. The active
//! arm starts from the first `n_init` of those and acquires the rest by
//! ensemble uncertainty. Both final ensembles are then fitted from scratch
//! with the same training configuration, so only the data differ.

use std::path::PathBuf;

use peds_core::geometry::Family;
use peds_core::peds::{PedsConfig, PedsModel};
use peds_core::solvers::HighFidelity;
use peds_core::training::{active_learn_from, AlConfig, LossConfig, TrainConfig, TrainMonitor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{load_or_generate, gen_data, Dataset, DatasetHeader, GenConfig, TEST_STREAM, TRAIN_STREAM};
use crate::exec::Rayon;
use crate::experiment::{evaluate, fit, new_nn_members, new_peds_members, EvalReport, MemberSummary, StageFailure};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlExperimentConfig {
    pub family: Family,
    pub seeds: Vec<u64>,
    pub budget: usize,
    pub al: AlConfig,
    pub n_test: usize,
    pub test_seed: u64,
    pub hf_resolution: usize,
    pub peds: PedsConfig,
    pub train: TrainConfig,
    pub workers: usize,
    #[serde(skip)]
    pub data_dir: Option<PathBuf>,
}

impl AlExperimentConfig {
    pub fn new(family: Family, seeds: Vec<u64>) -> Self {
        AlExperimentConfig {
            family,
            seeds,
            budget: 1000,
            al: AlConfig {
                n_init: 200,
                iterations: 4,
                m: 4,
                k: 200,
                warm_start: true,
                retrain_epochs: Some(10),
                ..AlConfig::default()
            },
            n_test: 200,
            test_seed: 1_000_003,
            hf_resolution: family.default_hf_resolution(),
            peds: PedsConfig::default(),
            train: TrainConfig {
                loss: LossConfig::GaussianNll,
                epochs: 100,
                patience: 20,
                ..TrainConfig::default()
            },
            workers: 0,
            data_dir: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.al.validate()?;
        self.train.validate()?;
        if self.seeds.is_empty() || self.n_test == 0 {
            return Err(Error::Input("need at least one seed and one test point".into()));
        }
        if self.al.n_init + self.al.iterations * self.al.k != self.budget {
            return Err(Error::Input(format!(
                "n_init + iterations * k = {} does not match the budget {}",
                self.al.n_init + self.al.iterations * self.al.k,
                self.budget
            )));
        }
        Ok(())
    }

    fn dataset(&self, n: usize, seed: u64, stream: u64) -> Result<Dataset> {
        let cfg = GenConfig {
            family: self.family,
            n,
            resolution: self.hf_resolution,
            seed,
            stream,
            workers: self.workers,
        };
        match &self.data_dir {
            Some(dir) => {
                let name = format!("{}-r{}-s{}-{}-n{}.jsonl", self.family, self.hf_resolution, seed, stream, n);
                load_or_generate(&cfg, &dir.join(name))
            }
            None => gen_data(&cfg),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    pub peds_al: Option<EvalReport>,
    pub peds_random: Option<EvalReport>,
    pub nn_only: Option<EvalReport>,
    pub al_dataset_size: usize,
    pub al_skipped: usize,
    pub training: Vec<MemberSummary>,
    pub failures: Vec<StageFailure>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlReport {
    pub config: AlExperimentConfig,
    pub seeds: Vec<SeedResult>,
    pub median_fe_al: Option<f64>,
    pub median_fe_random: Option<f64>,
    pub median_fe_nn_only: Option<f64>,
    pub failures: Vec<StageFailure>,
}

pub fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

impl AlReport {
    pub fn table(&self) -> String {
        let pct = |x: Option<&EvalReport>| x.map_or("failed".to_string(), |r| format!("{:.2}%", 100.0 * r.fe));
        let mut s = format!("{:<8}{:>12}{:>12}{:>12}\n", "seed", "peds+al", "peds+rand", "nn-only");
        for r in &self.seeds {
            s += &format!(
                "{:<8}{:>12}{:>12}{:>12}\n",
                r.seed,
                pct(r.peds_al.as_ref()),
                pct(r.peds_random.as_ref()),
                pct(r.nn_only.as_ref())
            );
        }
        let m = |x: Option<f64>| x.map_or("-".to_string(), |v| format!("{:.2}%", 100.0 * v));
        s += &format!(
            "{:<8}{:>12}{:>12}{:>12}\n",
            "median",
            m(self.median_fe_al),
            m(self.median_fe_random),
            m(self.median_fe_nn_only)
        );
        s
    }
}

fn run_seed<T: TrainMonitor + ?Sized>(
    cfg: &AlExperimentConfig,
    seed: u64,
    test: &Dataset,
    hf: &HighFidelity,
    monitor: &T,
) -> SeedResult {
    let mut r = SeedResult {
        seed,
        peds_al: None,
        peds_random: None,
        nn_only: None,
        al_dataset_size: 0,
        al_skipped: 0,
        training: Vec::new(),
        failures: Vec::new(),
    };
    let fail = |failures: &mut Vec<StageFailure>, stage: &str, e: Error| {
        failures.push(StageFailure {
            stage: format!("seed {seed}: {stage}"),
            error: e.to_string(),
        })
    };
    let random = match cfg.dataset(cfg.budget, seed, TRAIN_STREAM) {
        Ok(d) => d,
        Err(e) => {
            fail(&mut r.failures, "data", e);
            return r;
        }
    };
    let train_cfg = TrainConfig {
        seed,
        ..cfg.train.clone()
    };
    let hf_mean = test.mean_timing();
    let n = cfg.budget;

    let res = new_peds_members(cfg.family, &cfg.peds, cfg.al.ensemble, seed)
        .map_err(Error::from)
        .and_then(|m| fit("peds_random", m, &random, &train_cfg, monitor, &mut r.training))
        .and_then(|e| evaluate("peds_random", test, n, hf_mean, |p| e.predict(p).map(|x| x.0)));
    match res {
        Ok(e) => r.peds_random = Some(e),
        Err(e) => fail(&mut r.failures, "peds_random", e),
    }

    let res = new_nn_members(cfg.family, &cfg.peds, cfg.al.ensemble, seed)
        .map_err(Error::from)
        .and_then(|m| fit("nn_only", m, &random, &train_cfg, monitor, &mut r.training))
        .and_then(|e| evaluate("nn_only", test, n, hf_mean, |p| e.predict(p).map(|x| x.0)));
    match res {
        Ok(e) => r.nn_only = Some(e),
        Err(e) => fail(&mut r.failures, "nn_only", e),
    }

    let al_cfg = AlConfig {
        seed,
        ..cfg.al.clone()
    };
    let initial = random.samples[..cfg.al.n_init.min(random.len())].to_vec();
    let acquired = active_learn_from(
        cfg.family,
        &al_cfg,
        initial,
        |_, s| PedsModel::new(cfg.family, &cfg.peds, &mut ChaCha8Rng::seed_from_u64(s)),
        |p| hf.evaluate(p),
        &train_cfg,
        &Rayon,
        monitor,
    );
    let res = acquired.map_err(Error::from).and_then(|out| {
        r.al_dataset_size = out.dataset.len();
        r.al_skipped = out.skipped;
        let header = DatasetHeader {
            n_samples: out.dataset.len(),
            ..random.header.clone()
        };
        let al_data = Dataset::new(header, out.dataset, Vec::new())?;
        let members = new_peds_members(cfg.family, &cfg.peds, cfg.al.ensemble, seed)?;
        let e = fit("peds_al", members, &al_data, &train_cfg, monitor, &mut r.training)?;
        evaluate("peds_al", test, al_data.len(), hf_mean, |p| e.predict(p).map(|x| x.0))
    });
    match res {
        Ok(e) => r.peds_al = Some(e),
        Err(e) => fail(&mut r.failures, "peds_al", e),
    }
    r
}

pub fn run_al_experiment<T: TrainMonitor + ?Sized>(cfg: &AlExperimentConfig, monitor: &T) -> Result<AlReport> {
    cfg.validate()?;
    let mut report = AlReport {
        config: cfg.clone(),
        seeds: Vec::new(),
        median_fe_al: None,
        median_fe_random: None,
        median_fe_nn_only: None,
        failures: Vec::new(),
    };
    let test = match cfg.dataset(cfg.n_test, cfg.test_seed, TEST_STREAM) {
        Ok(d) => d,
        Err(e) => {
            report.failures.push(StageFailure {
                stage: "test data".into(),
                error: e.to_string(),
            });
            return Ok(report);
        }
    };
    let hf = HighFidelity::new(cfg.family, cfg.hf_resolution)?;
    for &seed in &cfg.seeds {
        let r = run_seed(cfg, seed, &test, &hf, monitor);
        report.failures.extend(r.failures.iter().cloned());
        report.seeds.push(r);
    }
    let col = |f: fn(&SeedResult) -> Option<&EvalReport>| {
        let v: Vec<f64> = report.seeds.iter().filter_map(|r| f(r).map(|e| e.fe)).collect();
        (v.len() == report.seeds.len()).then(|| median(v)).flatten()
    };
    report.median_fe_al = col(|r| r.peds_al.as_ref());
    report.median_fe_random = col(|r| r.peds_random.as_ref());
    report.median_fe_nn_only = col(|r| r.nn_only.as_ref());
    Ok(report)
}
