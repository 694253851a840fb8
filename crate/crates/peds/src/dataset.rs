//! JSON-lines datasets.
//!
//! Line 1 is a header object; every following line is one sample
//! `{"params": .., "target_re": [..], "target_im": [..]?, "meta": {"index": i}}`.
//! Wall-clock timings live in a `.timing.json` sidecar so the dataset itself
//! is reproducible byte for byte.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use peds_core::geometry::{Family, GeometryParams};
use peds_core::solvers::HighFidelity;
use peds_core::training::Sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::exec::with_workers;
use crate::{Error, Result};

pub const FORMAT: &str = "peds-dataset";
pub const FORMAT_VERSION: u32 = 1;
pub const SOLVER_VERSION: &str = concat!("peds-core ", env!("CARGO_PKG_VERSION"));

/// Parameter vectors closer than this (max-abs) count as duplicates.
pub const DUPLICATE_TOLERANCE: f64 = 1e-12;

/// Seed streams: training data and test data never share random draws.
pub const TRAIN_STREAM: u64 = 0;
pub const TEST_STREAM: u64 = 1;
const RESAMPLE_STREAM_OFFSET: u64 = 1 << 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub format: String,
    pub version: u32,
    pub family: Family,
    pub hf_resolution: usize,
    pub seed: u64,
    pub stream: u64,
    pub solver_version: String,
    pub n_samples: usize,
    /// Points replaced after a solver failure.
    pub resampled: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub header: DatasetHeader,
    pub samples: Vec<Sample>,
    /// Seconds per high-fidelity solve; empty when unknown.
    pub timings: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct Line {
    params: GeometryParams,
    target_re: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    target_im: Option<Vec<f64>>,
    meta: LineMeta,
}

#[derive(Serialize, Deserialize)]
struct LineMeta {
    index: usize,
}

fn split_target(family: Family, t: &[f64]) -> (Vec<f64>, Option<Vec<f64>>) {
    if family.is_maxwell() {
        (t.iter().step_by(2).copied().collect(), Some(t.iter().skip(1).step_by(2).copied().collect()))
    } else {
        (t.to_vec(), None)
    }
}

fn join_target(re: Vec<f64>, im: Option<Vec<f64>>) -> std::result::Result<Vec<f64>, String> {
    match im {
        None => Ok(re),
        Some(im) if im.len() == re.len() => Ok(re.iter().zip(&im).flat_map(|(a, b)| [*a, *b]).collect()),
        Some(_) => Err("target_re and target_im differ in length".into()),
    }
}

impl Dataset {
    pub fn new(header: DatasetHeader, samples: Vec<Sample>, timings: Vec<f64>) -> Result<Self> {
        let d = Dataset {
            header,
            samples,
            timings,
        };
        d.validate()?;
        Ok(d)
    }

    pub fn family(&self) -> Family {
        self.header.family
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn mean_timing(&self) -> Option<f64> {
        (!self.timings.is_empty()).then(|| self.timings.iter().sum::<f64>() / self.timings.len() as f64)
    }

    pub fn validate(&self) -> Result<()> {
        let fam = self.header.family;
        if self.header.n_samples != self.samples.len() {
            return Err(Error::Dataset(format!(
                "header announces {} samples, found {}",
                self.header.n_samples,
                self.samples.len()
            )));
        }
        for (i, s) in self.samples.iter().enumerate() {
            if s.params.family != fam {
                return Err(Error::Dataset(format!("sample {i} belongs to {}", s.params.family)));
            }
            s.params.validate()?;
            if s.target.len() != fam.target_dim() {
                return Err(Error::Dataset(format!("sample {i} has a target of length {}", s.target.len())));
            }
        }
        if let Some((i, j)) = find_duplicate(&self.samples) {
            return Err(Error::Dataset(format!("samples {i} and {j} have the same parameters")));
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = serde_json::to_string(&self.header).expect("header serializes");
        out.push('\n');
        for (index, s) in self.samples.iter().enumerate() {
            let (target_re, target_im) = split_target(self.header.family, &s.target);
            let line = Line {
                params: s.params.clone(),
                target_re,
                target_im,
                meta: LineMeta { index },
            };
            let _ = writeln!(out, "{}", serde_json::to_string(&line).expect("sample serializes"));
        }
        out
    }

    pub fn from_jsonl(text: &str, what: &str) -> Result<Self> {
        let parse_err = |line: usize, msg: String| Error::Parse {
            what: what.to_string(),
            line,
            msg,
        };
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, first) = lines.next().ok_or_else(|| parse_err(1, "missing header".into()))?;
        let header: DatasetHeader = serde_json::from_str(first).map_err(|e| parse_err(1, e.to_string()))?;
        if header.format != FORMAT || header.version != FORMAT_VERSION {
            return Err(parse_err(1, format!("unsupported format {} v{}", header.format, header.version)));
        }
        let mut samples = Vec::with_capacity(header.n_samples);
        for (k, l) in lines {
            let line: Line = serde_json::from_str(l).map_err(|e| parse_err(k + 1, e.to_string()))?;
            let target = join_target(line.target_re, line.target_im).map_err(|m| parse_err(k + 1, m))?;
            samples.push(Sample {
                params: line.params,
                target,
            });
        }
        Dataset::new(header, samples, Vec::new())
    }

    pub fn timing_path(path: &Path) -> PathBuf {
        let mut s = path.as_os_str().to_owned();
        s.push(".timing.json");
        PathBuf::from(s)
    }

    /// Writes the dataset and, when timings are known, the sidecar.
    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_jsonl()).map_err(|e| Error::io(path, e))?;
        if !self.timings.is_empty() {
            let tp = Self::timing_path(path);
            let json = serde_json::to_string(&self.timings).expect("timings serialize");
            fs::write(&tp, json).map_err(|e| Error::io(tp, e))?;
        }
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut d = Self::from_jsonl(&text, &path.display().to_string())?;
        let tp = Self::timing_path(path);
        if let Ok(t) = fs::read_to_string(&tp) {
            d.timings = serde_json::from_str(&t).map_err(|e| Error::Parse {
                what: tp.display().to_string(),
                line: 1,
                msg: e.to_string(),
            })?;
        }
        Ok(d)
    }
}

/// First pair of samples whose parameters coincide.
pub fn find_duplicate(samples: &[Sample]) -> Option<(usize, usize)> {
    for (i, a) in samples.iter().enumerate() {
        for (j, b) in samples.iter().enumerate().skip(i + 1) {
            if a.params.distance(&b.params).is_some_and(|d| d <= DUPLICATE_TOLERANCE) {
                return Some((i, j));
            }
        }
    }
    None
}

/// Number of test points that also appear in the training set.
pub fn overlap(train: &[Sample], test: &[Sample]) -> usize {
    test.iter()
        .filter(|t| {
            train
                .iter()
                .any(|s| s.params.distance(&t.params).is_some_and(|d| d <= DUPLICATE_TOLERANCE))
        })
        .count()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    pub family: Family,
    pub n: usize,
    pub resolution: usize,
    pub seed: u64,
    pub stream: u64,
    /// Worker threads; 0 uses every core.
    pub workers: usize,
}

impl GenConfig {
    pub fn new(family: Family, n: usize, seed: u64) -> Self {
        GenConfig {
            family,
            n,
            resolution: family.default_hf_resolution(),
            seed,
            stream: TRAIN_STREAM,
            workers: 0,
        }
    }
}

/// High-fidelity targets for the given points, evaluated in parallel.
/// Returns per-point results and timings in input order.
pub fn label(hf: &HighFidelity, points: &[GeometryParams]) -> Vec<(peds_core::Result<Vec<f64>>, f64)> {
    points
        .par_iter()
        .map(|p| {
            let t0 = Instant::now();
            let r = hf.evaluate(p);
            (r, t0.elapsed().as_secs_f64())
        })
        .collect()
}

const MAX_ATTEMPTS: usize = 10;

/// Draws `n` uniform points from the configured seed stream and labels them
/// with the high-fidelity solver. Points whose solve fails are replaced by
/// fresh draws from a separate stream, in index order.
pub fn gen_data(cfg: &GenConfig) -> Result<Dataset> {
    if cfg.n == 0 {
        return Err(Error::Input("need at least one sample".into()));
    }
    let hf = HighFidelity::new(cfg.family, cfg.resolution)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(cfg.stream);
    let mut spare = ChaCha8Rng::seed_from_u64(cfg.seed);
    spare.set_stream(cfg.stream + RESAMPLE_STREAM_OFFSET);
    let mut points: Vec<GeometryParams> = (0..cfg.n).map(|_| GeometryParams::sample(cfg.family, &mut rng)).collect();
    let mut targets: Vec<Option<Vec<f64>>> = vec![None; cfg.n];
    let mut timings = vec![0.0; cfg.n];
    let mut resampled = 0;
    let mut pending: Vec<usize> = (0..cfg.n).collect();
    for attempt in 0..MAX_ATTEMPTS {
        let batch: Vec<GeometryParams> = pending.iter().map(|&i| points[i].clone()).collect();
        let results = with_workers(cfg.workers, || label(&hf, &batch));
        let mut failed = Vec::new();
        let mut last_error = None;
        for (&i, (r, t)) in pending.iter().zip(results) {
            timings[i] += t;
            match r {
                Ok(v) => targets[i] = Some(v),
                Err(e) => {
                    failed.push(i);
                    last_error = Some(e);
                }
            }
        }
        if failed.is_empty() {
            break;
        }
        if attempt + 1 == MAX_ATTEMPTS {
            return Err(last_error.expect("a failure was recorded").into());
        }
        for &i in &failed {
            points[i] = GeometryParams::sample(cfg.family, &mut spare);
        }
        resampled += failed.len();
        pending = failed;
    }
    let samples = points
        .into_iter()
        .zip(targets)
        .map(|(params, t)| Sample {
            params,
            target: t.expect("every point labelled"),
        })
        .collect();
    let header = DatasetHeader {
        format: FORMAT.into(),
        version: FORMAT_VERSION,
        family: cfg.family,
        hf_resolution: cfg.resolution,
        seed: cfg.seed,
        stream: cfg.stream,
        solver_version: SOLVER_VERSION.into(),
        n_samples: cfg.n,
        resampled,
    };
    Dataset::new(header, samples, timings)
}

/// Loads `path` when it holds a dataset generated with `cfg`; otherwise
/// generates one and writes it there.
pub fn load_or_generate(cfg: &GenConfig, path: &Path) -> Result<Dataset> {
    if let Ok(d) = Dataset::read(path) {
        let h = &d.header;
        if h.family == cfg.family
            && h.n_samples == cfg.n
            && h.hf_resolution == cfg.resolution
            && h.seed == cfg.seed
            && h.stream == cfg.stream
            && h.solver_version == SOLVER_VERSION
        {
            return Ok(d);
        }
    }
    let d = gen_data(cfg)?;
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    d.write(path)?;
    Ok(d)
}
