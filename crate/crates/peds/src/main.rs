use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use peds::al::{run_al_experiment, AlExperimentConfig};
use peds::checkpoint::Checkpoint;
use peds::dataset::{gen_data, Dataset, GenConfig, TRAIN_STREAM};
use peds::exec::{with_workers, Rayon};
use peds::experiment::{evaluate, new_nn_members, new_peds_members, run_experiment, ExperimentConfig};
use peds::trainlog::JsonlLog;
use peds::{Error, Result};
use peds_core::geometry::{Family, GeometryParams};
use peds_core::peds::{Ensemble, PedsConfig, PedsModel};
use peds_core::solvers::HighFidelity;
use peds_core::training::{active_learn, train_ensemble, AlConfig, LossConfig, TrainConfig, TrainMonitor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

#[derive(Parser)]
#[command(name = "peds", version, about = "Physics-enhanced deep surrogates")]
struct Cli {
    /// JSON object whose keys override the subcommand's flags.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Label uniform random geometries with the high-fidelity solver.
    GenData(GenDataArgs),
    /// Train a PEDS or NN-only ensemble on a dataset.
    Train(TrainArgs),
    /// Fractional error of a checkpoint on a dataset.
    Eval(EvalArgs),
    /// Grow a dataset by ensemble uncertainty and train on it.
    ActiveLearn(ActiveLearnArgs),
    /// Predict one geometry with a checkpoint.
    Predict(PredictArgs),
    /// Rerun a reference comparison end to end.
    Reproduce(ReproduceArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum ModelKind {
    Peds,
    NnOnly,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum LossKind {
    Huber,
    Nll,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum Table {
    Table2,
    Table3,
    Fig3,
}

fn parse_family(s: &str) -> std::result::Result<Family, String> {
    Family::parse(s).ok_or_else(|| {
        let names: Vec<_> = Family::ALL.iter().map(|f| f.name()).collect();
        format!("unknown family {s}; expected one of {}", names.join(", "))
    })
}

#[derive(clap::Args, Serialize, Deserialize)]
struct GenDataArgs {
    #[arg(long, value_parser = parse_family)]
    family: Family,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Defaults to 100 (diffusion families) or 40 (maxwell10).
    #[arg(long)]
    resolution: Option<usize>,
    #[arg(long, default_value_t = TRAIN_STREAM)]
    stream: u64,
    #[arg(long, default_value_t = 0)]
    workers: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(clap::Args, Serialize, Deserialize)]
struct TrainOpts {
    /// Defaults to huber for diffusion families and nll for maxwell10.
    #[arg(long, value_enum)]
    loss: Option<LossKind>,
    #[arg(long, default_value_t = 5)]
    ensemble: usize,
    #[arg(long, default_value_t = 200)]
    epochs: usize,
    #[arg(long, default_value_t = 64)]
    batch_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 50)]
    patience: usize,
    /// Comma-separated generator hidden widths.
    #[arg(long, default_value = "256,256", value_delimiter = ',')]
    hidden: Vec<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// JSON-lines training log.
    #[arg(long)]
    log: Option<PathBuf>,
}

impl TrainOpts {
    fn train_config(&self, family: Family) -> TrainConfig {
        let loss = match self.loss {
            Some(LossKind::Huber) => LossConfig::default(),
            Some(LossKind::Nll) => LossConfig::GaussianNll,
            None if family.is_maxwell() => LossConfig::GaussianNll,
            None => LossConfig::default(),
        };
        let mut cfg = TrainConfig {
            loss,
            epochs: self.epochs,
            batch_size: self.batch_size,
            patience: self.patience,
            seed: self.seed,
            ..TrainConfig::default()
        };
        cfg.adam.learning_rate = self.lr;
        cfg
    }

    fn peds_config(&self) -> PedsConfig {
        PedsConfig {
            generator_hidden: self.hidden.clone(),
            ..PedsConfig::default()
        }
    }

    fn monitor(&self) -> Result<Box<dyn TrainMonitor>> {
        Ok(match &self.log {
            Some(p) => Box::new(JsonlLog::create(p)?),
            None => Box::new(()),
        })
    }
}

#[derive(clap::Args, Serialize, Deserialize)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum, default_value = "peds")]
    model: ModelKind,
    #[command(flatten)]
    #[serde(flatten)]
    opts: TrainOpts,
    #[arg(long)]
    out: PathBuf,
}

#[derive(clap::Args, Serialize, Deserialize)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Where to write the JSON report; printed to stdout otherwise.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(clap::Args, Serialize, Deserialize)]
struct ActiveLearnArgs {
    #[arg(long, value_parser = parse_family)]
    family: Family,
    #[arg(long, default_value_t = 64)]
    n_init: usize,
    #[arg(long, default_value_t = 4)]
    iterations: usize,
    #[arg(long, default_value_t = 4)]
    m: usize,
    #[arg(long, default_value_t = 32)]
    k: usize,
    /// Epochs for every retraining round after the first fit.
    #[arg(long)]
    retrain_epochs: Option<usize>,
    /// Retrain each round from fresh weights.
    #[arg(long)]
    cold_start: bool,
    #[arg(long)]
    resolution: Option<usize>,
    #[command(flatten)]
    #[serde(flatten)]
    opts: TrainOpts,
    #[arg(long)]
    out: PathBuf,
    /// Also write the acquired dataset.
    #[arg(long)]
    data_out: Option<PathBuf>,
    /// Acquisition log (JSON).
    #[arg(long)]
    acquisitions: Option<PathBuf>,
}

#[derive(clap::Args, Serialize, Deserialize)]
struct PredictArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Comma-separated hole widths in [0, 1].
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    widths: Vec<f64>,
    /// Wavelength index for maxwell10 (0: 1.0, 1: 0.9, 2: 0.8).
    #[arg(long)]
    freq: Option<usize>,
}

#[derive(clap::Args, Serialize, Deserialize)]
struct ReproduceArgs {
    #[arg(value_enum)]
    table: Table,
    /// Defaults to fourier16 (table2), fisher16 (table3) or maxwell10 (fig3).
    #[arg(long, value_parser = parse_family)]
    family: Option<Family>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Training points (budget for fig3).
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    n_test: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    ensemble: Option<usize>,
    /// Seeds for fig3 (comma-separated).
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long, default_value_t = 0)]
    workers: usize,
    /// Reuse generated datasets from this directory.
    #[arg(long)]
    data_dir: Option<PathBuf>,
    #[arg(long)]
    log: Option<PathBuf>,
    /// Where to write the JSON report.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Applies `--config` overrides on top of the parsed flags.
fn merge<T: Serialize + DeserializeOwned>(args: T, config: Option<&Path>) -> Result<T> {
    let Some(path) = config else { return Ok(args) };
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let over: serde_json::Value = serde_json::from_str(&text).map_err(|e| Error::Parse {
        what: path.display().to_string(),
        line: e.line(),
        msg: e.to_string(),
    })?;
    let serde_json::Value::Object(over) = over else {
        return Err(Error::Input(format!("{} must hold a JSON object", path.display())));
    };
    let mut base = serde_json::to_value(args).expect("arguments serialize");
    let obj = base.as_object_mut().expect("arguments form an object");
    for (k, v) in over {
        let key = k.replace('-', "_");
        if !obj.contains_key(&key) {
            return Err(Error::Input(format!("unknown config key {k}")));
        }
        obj.insert(key, v);
    }
    serde_json::from_value(base).map_err(|e| Error::Input(format!("{}: {e}", path.display())))
}

fn write_json<T: Serialize>(value: &T, out: Option<&Path>) -> Result<()> {
    let json = serde_json::to_string_pretty(value).expect("report serializes");
    match out {
        Some(p) => fs::write(p, json + "\n").map_err(|e| Error::io(p, e)),
        None => {
            println!("{json}");
            Ok(())
        }
    }
}

fn cmd_gen_data(a: GenDataArgs) -> Result<()> {
    let cfg = GenConfig {
        resolution: a.resolution.unwrap_or(a.family.default_hf_resolution()),
        stream: a.stream,
        workers: a.workers,
        ..GenConfig::new(a.family, a.n, a.seed)
    };
    let d = gen_data(&cfg)?;
    d.write(&a.out)?;
    eprintln!(
        "wrote {} samples to {} ({} resampled, mean solve {:.1} ms)",
        d.len(),
        a.out.display(),
        d.header.resampled,
        1e3 * d.mean_timing().unwrap_or(0.0)
    );
    Ok(())
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    let data = Dataset::read(&a.data)?;
    let family = data.family();
    let cfg = a.opts.train_config(family);
    let peds_cfg = a.opts.peds_config();
    let monitor = a.opts.monitor()?;
    let ckpt = match a.model {
        ModelKind::Peds => {
            let members = new_peds_members(family, &peds_cfg, a.opts.ensemble, a.opts.seed)?;
            let out = train_ensemble(members, &data.samples, &cfg, &Rayon, monitor.as_ref())?;
            report_training(&out);
            Checkpoint::peds(&Ensemble::new(out.into_iter().map(|o| o.model).collect())?, &cfg)
        }
        ModelKind::NnOnly => {
            let members = new_nn_members(family, &peds_cfg, a.opts.ensemble, a.opts.seed)?;
            let out = train_ensemble(members, &data.samples, &cfg, &Rayon, monitor.as_ref())?;
            report_training(&out);
            Checkpoint::nn_only(&Ensemble::new(out.into_iter().map(|o| o.model).collect())?, &cfg)
        }
    };
    ckpt.write(&a.out)
}

fn report_training<M: peds_core::peds::Surrogate>(out: &[peds_core::training::TrainOutcome<M>]) {
    for (k, o) in out.iter().enumerate() {
        let w = o.model.mixing_weight().map_or(String::new(), |w| format!(" w {w:.3}"));
        eprintln!(
            "member {k}: {} epochs, train loss {:.3e}{w}, {:?}{}",
            o.history.len(),
            o.train_loss,
            o.status,
            if o.fell_back_to_floor { " (fell back to low fidelity)" } else { "" }
        );
    }
}

fn cmd_eval(a: EvalArgs) -> Result<()> {
    let model = Checkpoint::read(&a.checkpoint)?.load()?;
    let data = Dataset::read(&a.data)?;
    if data.family() != model.family() {
        return Err(Error::Input(format!(
            "checkpoint is for {}, dataset for {}",
            model.family(),
            data.family()
        )));
    }
    let name = match model {
        peds::checkpoint::Loaded::Peds(_) => "peds",
        peds::checkpoint::Loaded::NnOnly(_) => "nn_only",
    };
    let report = evaluate(name, &data, 0, data.mean_timing(), |p| model.predict(p).map(|r| r.0))?;
    eprintln!("FE {:.3}% over {} samples", 100.0 * report.fe, report.n_test);
    write_json(&report, a.out.as_deref())
}

fn cmd_active_learn(a: ActiveLearnArgs) -> Result<()> {
    let family = a.family;
    let hf = HighFidelity::new(family, a.resolution.unwrap_or(family.default_hf_resolution()))?;
    let cfg = a.opts.train_config(family);
    let peds_cfg = a.opts.peds_config();
    let al = AlConfig {
        n_init: a.n_init,
        iterations: a.iterations,
        m: a.m,
        k: a.k,
        warm_start: !a.cold_start,
        retrain_epochs: a.retrain_epochs,
        ensemble: a.opts.ensemble,
        seed: a.opts.seed,
    };
    let monitor = a.opts.monitor()?;
    let out = active_learn(
        family,
        &al,
        |_, s| PedsModel::new(family, &peds_cfg, &mut ChaCha8Rng::seed_from_u64(s)),
        |p| hf.evaluate(p),
        &cfg,
        &Rayon,
        monitor.as_ref(),
    )?;
    eprintln!("{} labelled points, {} oracle failures skipped", out.dataset.len(), out.skipped);
    Checkpoint::peds(&out.ensemble, &cfg).write(&a.out)?;
    if let Some(p) = &a.data_out {
        let header = peds::dataset::DatasetHeader {
            format: peds::dataset::FORMAT.into(),
            version: peds::dataset::FORMAT_VERSION,
            family,
            hf_resolution: hf.resolution(),
            seed: a.opts.seed,
            stream: TRAIN_STREAM,
            solver_version: peds::dataset::SOLVER_VERSION.into(),
            n_samples: out.dataset.len(),
            resampled: 0,
        };
        Dataset::new(header, out.dataset, Vec::new())?.write(p)?;
    }
    if let Some(p) = &a.acquisitions {
        write_json(&out.log, Some(p))?;
    }
    Ok(())
}

#[derive(Serialize)]
struct PredictOutput {
    mean: Vec<f64>,
    sigma: f64,
}

fn cmd_predict(a: PredictArgs) -> Result<()> {
    let model = Checkpoint::read(&a.checkpoint)?.load()?;
    let p = GeometryParams::new(model.family(), a.widths, a.freq)?;
    let (mean, var) = model.predict(&p)?;
    write_json(&PredictOutput { mean, sigma: var.sqrt() }, None)
}

fn cmd_reproduce(a: ReproduceArgs) -> Result<()> {
    let monitor: Box<dyn TrainMonitor> = match &a.log {
        Some(p) => Box::new(JsonlLog::create(p)?),
        None => Box::new(()),
    };
    match a.table {
        Table::Table2 | Table::Table3 => {
            let default = if matches!(a.table, Table::Table2) { Family::Fourier16 } else { Family::Fisher16 };
            let mut cfg = ExperimentConfig::new(a.family.unwrap_or(default), a.seed);
            if let Some(n) = a.n {
                cfg.n_train = n;
            }
            if let Some(n) = a.n_test {
                cfg.n_test = n;
            }
            if let Some(e) = a.epochs {
                cfg.train.epochs = e;
            }
            if let Some(e) = a.ensemble {
                cfg.ensemble = e;
            }
            cfg.workers = a.workers;
            cfg.data_dir = a.data_dir.clone();
            let report = run_experiment(&cfg, monitor.as_ref())?;
            eprint!("{}", report.table());
            write_json(&report, a.out.as_deref())?;
            if report.failures.is_empty() {
                Ok(())
            } else {
                Err(Error::Core(peds_core::Error::NonFinite(format!(
                    "{} experiment stage(s) failed",
                    report.failures.len()
                ))))
            }
        }
        Table::Fig3 => {
            let seeds = a.seeds.clone().unwrap_or_else(|| vec![a.seed, a.seed + 1, a.seed + 2]);
            let mut cfg = AlExperimentConfig::new(a.family.unwrap_or(Family::Maxwell10), seeds);
            if let Some(n) = a.n {
                cfg.budget = n;
                cfg.al.n_init = n / 5;
                cfg.al.k = (n - cfg.al.n_init) / cfg.al.iterations.max(1);
                cfg.al.n_init = n - cfg.al.k * cfg.al.iterations;
            }
            if let Some(n) = a.n_test {
                cfg.n_test = n;
            }
            if let Some(e) = a.epochs {
                cfg.train.epochs = e;
            }
            if let Some(e) = a.ensemble {
                cfg.al.ensemble = e;
            }
            cfg.workers = a.workers;
            cfg.data_dir = a.data_dir.clone();
            let report = run_al_experiment(&cfg, monitor.as_ref())?;
            eprint!("{}", report.table());
            write_json(&report, a.out.as_deref())
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let config = cli.config.as_deref();
    match cli.command {
        Command::GenData(a) => cmd_gen_data(merge(a, config)?),
        Command::Train(a) => cmd_train(merge(a, config)?),
        Command::Eval(a) => cmd_eval(merge(a, config)?),
        Command::ActiveLearn(a) => cmd_active_learn(merge(a, config)?),
        Command::Predict(a) => cmd_predict(merge(a, config)?),
        Command::Reproduce(a) => {
            let a = merge(a, config)?;
            with_workers(a.workers, || cmd_reproduce(a))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
