//! Flat `key = value` configuration.
//!
//! Training keys mirror the fields of [`TrainConfig`]; the remaining keys
//! describe the dataset. `#` starts a comment. Keys may appear in any order
//! but at most once.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use genksc_core::data::{self, Dataset};
use genksc_core::nn::Architecture;
use genksc_core::train::TrainConfig;

use crate::{idx, FormatError};

/// Training keys in canonical order.
pub const TRAIN_KEYS: &[&str] = &[
    "s",
    "k",
    "eta_rec",
    "eta_cl",
    "warmup_epochs",
    "epochs",
    "batch_size",
    "seed",
    "arch",
    "hidden",
    "channels",
    "feature_dim",
    "leaky_slope",
    "bounded_output",
    "align_at_warmup",
    "lr",
    "beta1",
    "beta2",
    "eps",
    "stiefel_lr",
    "stiefel_beta1",
    "stiefel_beta2",
    "stiefel_eps",
    "stiefel_q",
];

/// Dataset keys in canonical order.
pub const DATA_KEYS: &[&str] = &[
    "dataset",
    "images",
    "labels",
    "classes",
    "subsample",
    "subsample_seed",
    "gaussian_k",
    "gaussian_n_per",
    "gaussian_spread",
    "gaussian_radius",
    "gaussian_seed",
];

#[derive(Clone, Debug, PartialEq)]
pub enum DataSource {
    Idx { images: PathBuf, labels: Option<PathBuf> },
    Gaussians { k: usize, n_per: usize, spread: f64, radius: f64, seed: u64 },
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct DataSpec {
    pub source: Option<DataSource>,
    pub classes: Option<Vec<usize>>,
    pub subsample: Option<usize>,
    pub subsample_seed: u64,
}

impl DataSpec {
    pub fn load(&self) -> Result<Dataset, FormatError> {
        let mut ds = match &self.source {
            None => return Err(FormatError::Invalid("no dataset configured".into())),
            Some(DataSource::Idx { images, labels }) => idx::load_idx(images, labels.as_deref())?,
            Some(DataSource::Gaussians { k, n_per, spread, radius, seed }) => {
                data::synth_gaussians(&data::circle_centers(*k, *radius), *n_per, *spread, *seed)?
            }
        };
        if let Some(keep) = &self.classes {
            ds = ds.filter_classes(keep)?;
        }
        if let Some(n) = self.subsample {
            ds = ds.subsample(n, self.subsample_seed)?;
        }
        Ok(ds)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub data: DataSpec,
}

fn invalid(line: Option<usize>, msg: String) -> FormatError {
    match line {
        Some(l) => FormatError::Invalid(format!("line {l}: {msg}")),
        None => FormatError::Invalid(msg),
    }
}

fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, String> {
    v.parse().map_err(|_| format!("{key}: cannot parse {v:?}"))
}

fn list(key: &str, v: &str) -> Result<Vec<usize>, String> {
    if v.trim().is_empty() {
        return Ok(Vec::new());
    }
    v.split(',').map(|p| num(key, p.trim())).collect()
}

fn join(v: &[usize]) -> String {
    v.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
}

/// Parses `key = value` lines into a map, rejecting duplicates.
pub fn parse_pairs(text: &str) -> Result<BTreeMap<String, (String, usize)>, FormatError> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| invalid(Some(i + 1), format!("expected key = value, got {line:?}")))?;
        let key = k.trim().to_string();
        if out.insert(key.clone(), (v.trim().to_string(), i + 1)).is_some() {
            return Err(invalid(Some(i + 1), format!("duplicate key {key}")));
        }
    }
    Ok(out)
}

/// Applies one training key. `arch` must be applied before `hidden` and
/// `channels`, which canonical order guarantees.
pub fn apply_train_key(cfg: &mut TrainConfig, key: &str, v: &str) -> Result<(), String> {
    match key {
        "s" => cfg.s = num(key, v)?,
        "k" => cfg.k = num(key, v)?,
        "eta_rec" => cfg.eta_rec = num(key, v)?,
        "eta_cl" => cfg.eta_cl = num(key, v)?,
        "warmup_epochs" => cfg.warmup_epochs = num(key, v)?,
        "epochs" => cfg.epochs = num(key, v)?,
        "batch_size" => cfg.batch_size = num(key, v)?,
        "seed" => cfg.seed = num(key, v)?,
        "arch" => {
            cfg.arch = match v {
                "mlp" => match &cfg.arch {
                    a @ Architecture::Mlp { .. } => a.clone(),
                    _ => TrainConfig::default().arch,
                },
                "conv" => match &cfg.arch {
                    a @ Architecture::Conv { .. } => a.clone(),
                    _ => Architecture::default_conv(),
                },
                other => return Err(format!("arch: expected mlp or conv, got {other:?}")),
            }
        }
        "hidden" => match &mut cfg.arch {
            Architecture::Mlp { hidden } => *hidden = list(key, v)?,
            Architecture::Conv { hidden, .. } => *hidden = num(key, v)?,
        },
        "channels" => match &mut cfg.arch {
            Architecture::Conv { channels, .. } => {
                let l = list(key, v)?;
                *channels = l.try_into().map_err(|_| "channels: expected three widths".to_string())?;
            }
            Architecture::Mlp { .. } => return Err("channels only applies to arch = conv".into()),
        },
        "feature_dim" => cfg.feature_dim = num(key, v)?,
        "leaky_slope" => cfg.leaky_slope = num(key, v)?,
        "bounded_output" => cfg.bounded_output = num(key, v)?,
        "align_at_warmup" => cfg.align_at_warmup = num(key, v)?,
        "lr" => cfg.adam.lr = num(key, v)?,
        "beta1" => cfg.adam.beta1 = num(key, v)?,
        "beta2" => cfg.adam.beta2 = num(key, v)?,
        "eps" => cfg.adam.eps = num(key, v)?,
        "stiefel_lr" => cfg.stiefel.lr = num(key, v)?,
        "stiefel_beta1" => cfg.stiefel.beta1 = num(key, v)?,
        "stiefel_beta2" => cfg.stiefel.beta2 = num(key, v)?,
        "stiefel_eps" => cfg.stiefel.eps = num(key, v)?,
        "stiefel_q" => cfg.stiefel.q = num(key, v)?,
        other => return Err(format!("unknown key {other:?}")),
    }
    Ok(())
}

/// Training keys and values in canonical order. Floats use the shortest
/// representation that reads back exactly.
pub fn train_pairs(cfg: &TrainConfig) -> Vec<(&'static str, String)> {
    let (arch, hidden, channels) = match &cfg.arch {
        Architecture::Mlp { hidden } => ("mlp", join(hidden), None),
        Architecture::Conv { channels, hidden } => ("conv", hidden.to_string(), Some(join(channels))),
    };
    let mut out = vec![
        ("s", cfg.s.to_string()),
        ("k", cfg.k.to_string()),
        ("eta_rec", cfg.eta_rec.to_string()),
        ("eta_cl", cfg.eta_cl.to_string()),
        ("warmup_epochs", cfg.warmup_epochs.to_string()),
        ("epochs", cfg.epochs.to_string()),
        ("batch_size", cfg.batch_size.to_string()),
        ("seed", cfg.seed.to_string()),
        ("arch", arch.to_string()),
        ("hidden", hidden),
    ];
    if let Some(c) = channels {
        out.push(("channels", c));
    }
    out.extend([
        ("feature_dim", cfg.feature_dim.to_string()),
        ("leaky_slope", cfg.leaky_slope.to_string()),
        ("bounded_output", cfg.bounded_output.to_string()),
        ("align_at_warmup", cfg.align_at_warmup.to_string()),
        ("lr", cfg.adam.lr.to_string()),
        ("beta1", cfg.adam.beta1.to_string()),
        ("beta2", cfg.adam.beta2.to_string()),
        ("eps", cfg.adam.eps.to_string()),
        ("stiefel_lr", cfg.stiefel.lr.to_string()),
        ("stiefel_beta1", cfg.stiefel.beta1.to_string()),
        ("stiefel_beta2", cfg.stiefel.beta2.to_string()),
        ("stiefel_eps", cfg.stiefel.eps.to_string()),
        ("stiefel_q", cfg.stiefel.q.to_string()),
    ]);
    out
}

fn apply_data_key(spec: &mut DataSpec, pairs: &BTreeMap<String, (String, usize)>) -> Result<(), FormatError> {
    let get = |k: &str| pairs.get(k).map(|(v, l)| (v.as_str(), *l));
    let field = |k: &str, d: &str| get(k).map_or(d, |(v, _)| v).to_string();
    let wrap = |k: &str, e: String| invalid(get(k).map(|(_, l)| l), e);
    if let Some((kind, line)) = get("dataset") {
        spec.source = Some(match kind {
            "idx" => {
                let images = get("images").ok_or_else(|| invalid(Some(line), "dataset = idx needs images".into()))?.0;
                DataSource::Idx {
                    images: PathBuf::from(images),
                    labels: get("labels").map(|(v, _)| PathBuf::from(v)),
                }
            }
            "gaussians" => DataSource::Gaussians {
                k: num("gaussian_k", &field("gaussian_k", "3")).map_err(|e| wrap("gaussian_k", e))?,
                n_per: num("gaussian_n_per", &field("gaussian_n_per", "200")).map_err(|e| wrap("gaussian_n_per", e))?,
                spread: num("gaussian_spread", &field("gaussian_spread", "0.5")).map_err(|e| wrap("gaussian_spread", e))?,
                radius: num("gaussian_radius", &field("gaussian_radius", "3")).map_err(|e| wrap("gaussian_radius", e))?,
                seed: num("gaussian_seed", &field("gaussian_seed", "0")).map_err(|e| wrap("gaussian_seed", e))?,
            },
            other => return Err(invalid(Some(line), format!("dataset: expected idx or gaussians, got {other:?}"))),
        });
    } else if let Some((v, _)) = get("images") {
        spec.source = Some(DataSource::Idx {
            images: PathBuf::from(v),
            labels: get("labels").map(|(v, _)| PathBuf::from(v)),
        });
    }
    if let Some((v, _)) = get("classes") {
        spec.classes = Some(list("classes", v).map_err(|e| wrap("classes", e))?);
    }
    if let Some((v, _)) = get("subsample") {
        spec.subsample = Some(num("subsample", v).map_err(|e| wrap("subsample", e))?);
    }
    if let Some((v, _)) = get("subsample_seed") {
        spec.subsample_seed = num("subsample_seed", v).map_err(|e| wrap("subsample_seed", e))?;
    }
    Ok(())
}

impl RunConfig {
    /// Parses configuration text on top of the defaults.
    pub fn parse(text: &str) -> Result<Self, FormatError> {
        let pairs = parse_pairs(text)?;
        Self::from_pairs(TrainConfig::default(), DataSpec::default(), &pairs)
    }

    /// Applies `pairs` on top of an existing configuration.
    pub fn from_pairs(mut train: TrainConfig, mut data: DataSpec, pairs: &BTreeMap<String, (String, usize)>) -> Result<Self, FormatError> {
        for (k, (_, line)) in pairs {
            if !TRAIN_KEYS.contains(&k.as_str()) && !DATA_KEYS.contains(&k.as_str()) {
                return Err(invalid(Some(*line), format!("unknown key {k:?}")));
            }
        }
        for key in TRAIN_KEYS {
            if let Some((v, line)) = pairs.get(*key) {
                apply_train_key(&mut train, key, v).map_err(|e| invalid(Some(*line), e))?;
            }
        }
        apply_data_key(&mut data, pairs)?;
        Ok(Self { train, data })
    }

    pub fn load(path: &Path) -> Result<Self, FormatError> {
        let text = std::fs::read_to_string(path).map_err(|e| FormatError::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in train_pairs(&self.train) {
            writeln!(out, "{k} = {v}").expect("string write");
        }
        match &self.data.source {
            Some(DataSource::Idx { images, labels }) => {
                writeln!(out, "dataset = idx\nimages = {}", images.display()).expect("string write");
                if let Some(l) = labels {
                    writeln!(out, "labels = {}", l.display()).expect("string write");
                }
            }
            Some(DataSource::Gaussians { k, n_per, spread, radius, seed }) => {
                writeln!(
                    out,
                    "dataset = gaussians\ngaussian_k = {k}\ngaussian_n_per = {n_per}\ngaussian_spread = {spread}\ngaussian_radius = {radius}\ngaussian_seed = {seed}"
                )
                .expect("string write");
            }
            None => {}
        }
        if let Some(c) = &self.data.classes {
            writeln!(out, "classes = {}", join(c)).expect("string write");
        }
        if let Some(n) = self.data.subsample {
            writeln!(out, "subsample = {n}\nsubsample_seed = {}", self.data.subsample_seed).expect("string write");
        }
        out
    }
}

/// Training configuration from its canonical text (as stored in checkpoints).
pub fn train_config_from_text(text: &str) -> Result<TrainConfig, FormatError> {
    let rc = RunConfig::parse(text)?;
    if rc.data.source.is_some() {
        return Err(FormatError::Invalid("unexpected dataset keys in training configuration".into()));
    }
    Ok(rc.train)
}

pub fn train_config_to_text(cfg: &TrainConfig) -> String {
    train_pairs(cfg).into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
}
