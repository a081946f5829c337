//! Config-driven experiments: flat `key = value` config files, synthetic
//! data generation, paired method runs and their on-disk artifacts.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::classifier::{ClassifierModel, LrSchedule};
use crate::dataset::{
    default_partners, inject_noise, load_dataset, make_asymmetric_spec, make_gaussian_split, make_symmetric_spec,
    save_dataset, ClusterParams, LabeledDataset, NoiseSpec, Split,
};
use crate::dilution::DilutionParams;
use crate::error::{Error, Result};
use crate::metrics::{summarize_history, write_history_csv, EpochMetrics, Summary};
use crate::trainer::{self, Method, TrainConfig};

#[derive(Debug, Clone, PartialEq)]
pub enum NoiseSetting {
    None,
    Symmetric { rate: f64 },
    Asymmetric { rate: f64, partners: Vec<usize> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticData {
    pub clusters: ClusterParams,
    pub test_per_class: usize,
    pub noise: NoiseSetting,
    pub noise_seed: u64,
}

impl SyntheticData {
    pub fn noise_spec(&self) -> Result<Option<NoiseSpec>> {
        let c = self.clusters.num_classes;
        Ok(match &self.noise {
            NoiseSetting::None => None,
            NoiseSetting::Symmetric { rate } => Some(make_symmetric_spec(c, *rate, self.noise_seed)?),
            NoiseSetting::Asymmetric { rate, partners } => Some(make_asymmetric_spec(c, *rate, partners, self.noise_seed)?),
        })
    }

    /// Train split with injected noise, and a clean test split.
    pub fn generate(&self) -> Result<(LabeledDataset, LabeledDataset)> {
        let (train, test) = make_gaussian_split(&self.clusters, self.test_per_class)?;
        let train = match self.noise_spec()? {
            Some(spec) => inject_noise(&train, &spec)?,
            None => train,
        };
        Ok((train, test))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub synthetic: Option<SyntheticData>,
    pub train_data: Option<PathBuf>,
    pub test_data: Option<PathBuf>,
    /// Training settings; `method` is overridden per run.
    pub training: TrainConfig,
    pub methods: Vec<Method>,
    pub out_dir: PathBuf,
    pub store_snapshots: bool,
}

const KNOWN_KEYS: &[&str] = &[
    "classes", "per_class", "test_per_class", "dim", "separation", "spread", "data_seed",
    "noise", "noise_rate", "partners", "noise_seed",
    "train_data", "test_data",
    "epochs", "batch_size", "k", "alpha", "beta", "gamma", "iterations", "tol", "warmup_epochs",
    "lr", "lr_decay_epoch", "lr_decay_divisor", "momentum", "weight_decay", "hidden_dim", "seed",
    "epoch_momentum", "methods", "out_dir", "store_snapshots",
];

/// Splits `key = value` lines, dropping `#` comments and blank lines.
fn parse_pairs(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`, found {raw:?}", idx + 1)))?;
        let key = key.trim().to_string();
        if !KNOWN_KEYS.contains(&key.as_str()) {
            return Err(Error::Config(format!("line {}: unknown key {key:?}", idx + 1)));
        }
        if map.insert(key.clone(), value.trim().to_string()).is_some() {
            return Err(Error::Config(format!("line {}: duplicate key {key:?}", idx + 1)));
        }
    }
    Ok(map)
}

struct Values(BTreeMap<String, String>);

impl Values {
    fn get<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.0.get(key) {
            None => Ok(None),
            Some(v) => v.parse().map(Some).map_err(|_| Error::Config(format!("cannot parse {key} = {v:?}"))),
        }
    }

    fn or<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T> {
        Ok(self.get(key)?.unwrap_or(default))
    }

    fn has(&self, key: &str) -> bool {
        self.0.contains_key(key)
    }
}

impl ExperimentConfig {
    /// Parses a config file body. `seed_override` replaces the `seed` key;
    /// `data_seed` and `noise_seed` default to `seed` and `seed + 1`.
    pub fn parse(text: &str, seed_override: Option<u64>) -> Result<Self> {
        let v = Values(parse_pairs(text)?);
        let defaults = TrainConfig::default();
        let seed = match seed_override {
            Some(s) => s,
            None => v.or("seed", defaults.seed)?,
        };

        let synthetic = if v.has("classes") {
            let classes: usize = v.or("classes", 0)?;
            let noise_rate: f64 = v.or("noise_rate", 0.0)?;
            let noise = match v.or("noise", String::from("none"))?.as_str() {
                "none" => NoiseSetting::None,
                "symmetric" => NoiseSetting::Symmetric { rate: noise_rate },
                "asymmetric" => {
                    let partners = match v.0.get("partners") {
                        None => default_partners(classes),
                        Some(list) => list
                            .split(',')
                            .map(|p| p.trim().parse::<usize>().map_err(|_| Error::Config(format!("bad partner entry {p:?}"))))
                            .collect::<Result<_>>()?,
                    };
                    NoiseSetting::Asymmetric { rate: noise_rate, partners }
                }
                other => return Err(Error::Config(format!("noise must be none, symmetric or asymmetric, got {other:?}"))),
            };
            Some(SyntheticData {
                clusters: ClusterParams {
                    num_classes: classes,
                    per_class: v.or("per_class", 500)?,
                    dim: v.or("dim", 2)?,
                    separation: v.or("separation", 10.0)?,
                    spread: v.or("spread", 1.0)?,
                    seed: v.or("data_seed", seed)?,
                },
                test_per_class: v.or("test_per_class", 250)?,
                noise,
                noise_seed: v.or("noise_seed", seed.wrapping_add(1))?,
            })
        } else {
            None
        };

        let train_data: Option<PathBuf> = v.get::<String>("train_data")?.map(PathBuf::from);
        let test_data: Option<PathBuf> = v.get::<String>("test_data")?.map(PathBuf::from);
        if synthetic.is_none() && (train_data.is_none() || test_data.is_none()) {
            return Err(Error::Config("need either a synthetic block (classes = ...) or both train_data and test_data".into()));
        }

        let training = TrainConfig {
            method: Method::Lend,
            max_epochs: v.or("epochs", defaults.max_epochs)?,
            batch_size: v.or("batch_size", defaults.batch_size)?,
            k: v.or("k", defaults.k)?,
            gamma: v.or("gamma", defaults.gamma)?,
            dilution: DilutionParams {
                alpha: v.or("alpha", defaults.dilution.alpha)?,
                beta: v.or("beta", defaults.dilution.beta)?,
                iterations: v.or("iterations", defaults.dilution.iterations)?,
                tol: v.or("tol", defaults.dilution.tol)?,
            },
            warmup_epochs: v.or("warmup_epochs", defaults.warmup_epochs)?,
            schedule: LrSchedule {
                initial: v.or("lr", defaults.schedule.initial)?,
                decay_epoch: v.or("lr_decay_epoch", defaults.schedule.decay_epoch)?,
                divisor: v.or("lr_decay_divisor", defaults.schedule.divisor)?,
            },
            momentum: v.or("momentum", defaults.momentum)?,
            weight_decay: v.or("weight_decay", defaults.weight_decay)?,
            embedding_dim: v.or("hidden_dim", defaults.embedding_dim)?,
            seed,
            epoch_momentum: v.or("epoch_momentum", false)?,
        };
        training.validate().map_err(|e| Error::Config(e.to_string()))?;

        let methods = match v.0.get("methods") {
            None => vec![Method::Lend, Method::Standard],
            Some(list) => list.split(',').map(str::parse).collect::<Result<Vec<Method>>>()?,
        };
        if methods.is_empty() {
            return Err(Error::Config("methods list is empty".into()));
        }

        Ok(Self {
            synthetic,
            train_data,
            test_data,
            training,
            methods,
            out_dir: PathBuf::from(v.or("out_dir", String::from("lend-out"))?),
            store_snapshots: v.or("store_snapshots", false)?,
        })
    }

    pub fn load(path: impl AsRef<Path>, seed_override: Option<u64>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text, seed_override)
    }

    /// Generates the synthetic data when configured, otherwise loads the files.
    pub fn datasets(&self) -> Result<(LabeledDataset, LabeledDataset)> {
        match (&self.synthetic, &self.train_data, &self.test_data) {
            (Some(synth), _, _) => synth.generate(),
            (None, Some(train), Some(test)) => Ok((load_dataset(train, Split::Train)?, load_dataset(test, Split::Test)?)),
            _ => Err(Error::Config("no data source configured".into())),
        }
    }

    pub fn method_config(&self, method: Method) -> TrainConfig {
        TrainConfig { method, ..self.training.clone() }
    }
}

/// Writes the synthetic train/test pair. Paths come from `train_data` /
/// `test_data` when set, else `<out_dir>/train.ds` and `<out_dir>/test.ds`.
pub fn generate_datasets(config: &ExperimentConfig) -> Result<(PathBuf, PathBuf)> {
    let synth = config
        .synthetic
        .as_ref()
        .ok_or_else(|| Error::Config("gen needs a synthetic block (classes = ...)".into()))?;
    let (train, test) = synth.generate()?;
    let train_path = config.train_data.clone().unwrap_or_else(|| config.out_dir.join("train.ds"));
    let test_path = config.test_data.clone().unwrap_or_else(|| config.out_dir.join("test.ds"));
    for p in [&train_path, &test_path] {
        if let Some(parent) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    save_dataset(&train, &train_path)?;
    save_dataset(&test, &test_path)?;
    Ok((train_path, test_path))
}

#[derive(Debug, Clone)]
pub struct MethodReport {
    pub method: Method,
    pub history: Vec<EpochMetrics>,
    pub summary: Option<Summary>,
    pub metrics_path: PathBuf,
    pub checkpoint_path: PathBuf,
}

#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub reports: Vec<MethodReport>,
    pub noise_fraction: f64,
}

impl ExperimentReport {
    /// Best/Last table, in percent.
    pub fn summary_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "observed train noise: {:.2}%", 100.0 * self.noise_fraction);
        let _ = writeln!(out, "{:<10} {:>8} {:>8} {:>10}", "method", "best", "last", "best_epoch");
        for r in &self.reports {
            match r.summary {
                Some(s) => {
                    let _ = writeln!(out, "{:<10} {:>8.2} {:>8.2} {:>10}", r.method, 100.0 * s.best, 100.0 * s.last, s.best_epoch);
                }
                None => {
                    let _ = writeln!(out, "{:<10} {:>8} {:>8} {:>10}", r.method, "-", "-", "-");
                }
            }
        }
        out
    }
}

fn run_method(config: &ExperimentConfig, method: Method, train: &LabeledDataset, test: &LabeledDataset, out: &Path) -> Result<MethodReport> {
    let cfg = config.method_config(method);
    let snapshot_dir = out.join("store");
    let outcome = trainer::run_with_observer(train, test, &cfg, |metrics, _model, store| {
        if config.store_snapshots && method == Method::Lend {
            let path = snapshot_dir.join(format!("{method}_epoch_{:04}.csv", metrics.epoch));
            let mut buf = Vec::new();
            store.write_snapshot(&mut buf).map_err(|e| Error::io(&path, e))?;
            fs::write(&path, buf).map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    })?;
    let metrics_path = out.join(format!("{method}_metrics.csv"));
    let checkpoint_path = out.join(format!("{method}.ckpt"));
    write_history_csv(&outcome.history, &metrics_path)?;
    outcome.model.save_checkpoint(&checkpoint_path)?;
    Ok(MethodReport {
        method,
        summary: summarize_history(&outcome.history),
        history: outcome.history,
        metrics_path,
        checkpoint_path,
    })
}

/// Runs every configured method on the same data and writes
/// `<method>_metrics.csv`, `<method>.ckpt` and `summary.txt` under `out`.
pub fn run_experiment(config: &ExperimentConfig, out: &Path) -> Result<ExperimentReport> {
    let (train, test) = config.datasets()?;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    if config.store_snapshots {
        let dir = out.join("store");
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    }
    let reports = config
        .methods
        .par_iter()
        .map(|&m| run_method(config, m, &train, &test, out))
        .collect::<Result<Vec<_>>>()?;
    let report = ExperimentReport { reports, noise_fraction: train.noise_fraction() };
    let summary_path = out.join("summary.txt");
    fs::write(&summary_path, report.summary_table()).map_err(|e| Error::io(&summary_path, e))?;
    Ok(report)
}

/// Accuracy of a saved model against the clean labels of a dataset file.
pub fn evaluate_checkpoint(checkpoint: &Path, data: &Path) -> Result<f64> {
    let dataset = load_dataset(data, Split::Test)?;
    let model = ClassifierModel::load_checkpoint(checkpoint)?;
    if model.input_dim() != dataset.dim() || model.num_classes() != dataset.num_classes() {
        return Err(Error::CheckpointShape(format!(
            "model expects d_in={} c={}, data has d={} c={}",
            model.input_dim(),
            model.num_classes(),
            dataset.dim(),
            dataset.num_classes()
        )));
    }
    crate::metrics::predicted_accuracy(&model, &dataset)
}
