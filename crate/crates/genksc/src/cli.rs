//! The `genksc` command line tool.
//!
//! Exit codes: 0 on success, 1 when work fails at runtime, 2 for usage
//! errors (bad flags, unreadable or invalid inputs detected before work
//! starts).

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use genksc_core::data::Dataset;
use genksc_core::objective::{self, Direction};
use genksc_core::train::{self, TrainConfig, TrainState};
use genksc_core::{ksc, metrics, Tensor};

use crate::config::{DataSource, DataSpec, RunConfig};
use crate::grid::{render_grid, ImageGrid};
use crate::{checkpoint, report};

/// Largest dataset the dense-kernel baseline accepts.
pub const BASELINE_MAX_SAMPLES: usize = 5000;

#[derive(Debug, Parser)]
#[command(name = "genksc", version, about = "Kernel spectral clustering with a learned encoder and decoder")]
pub struct Cli {
    /// Log progress (-v) or debug detail (-vv) to stderr.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model; writes checkpoint.bin, report.txt and timing.txt.
    Train(TrainArgs),
    /// Score a checkpoint on a dataset.
    Eval(EvalArgs),
    /// Classical kernel spectral clustering with an RBF kernel.
    Baseline(BaselineArgs),
    /// Render decoded points along cluster rays or latent components.
    Traverse(TraverseArgs),
    /// Decode one explicit latent vector.
    Generate(GenerateArgs),
    /// Train over a grid of loss weights and rank the runs by AMS.
    Gridsearch(GridArgs),
}

#[derive(Debug, Default, Args)]
pub struct DataArgs {
    /// IDX image file.
    #[arg(long)]
    pub images: Option<PathBuf>,
    /// IDX label file.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Comma-separated labels to keep.
    #[arg(long)]
    pub classes: Option<String>,
    /// Seeded subsample size.
    #[arg(long)]
    pub subsample: Option<String>,
    #[arg(long)]
    pub subsample_seed: Option<String>,
}

/// One flag per training configuration key.
#[derive(Debug, Default, Args)]
pub struct Overrides {
    #[arg(long)]
    pub s: Option<String>,
    #[arg(long)]
    pub k: Option<String>,
    #[arg(long)]
    pub eta_rec: Option<String>,
    #[arg(long)]
    pub eta_cl: Option<String>,
    #[arg(long)]
    pub warmup_epochs: Option<String>,
    #[arg(long)]
    pub epochs: Option<String>,
    #[arg(long)]
    pub batch_size: Option<String>,
    #[arg(long)]
    pub seed: Option<String>,
    #[arg(long)]
    pub arch: Option<String>,
    #[arg(long)]
    pub hidden: Option<String>,
    #[arg(long)]
    pub channels: Option<String>,
    #[arg(long)]
    pub feature_dim: Option<String>,
    #[arg(long)]
    pub leaky_slope: Option<String>,
    #[arg(long)]
    pub bounded_output: Option<String>,
    #[arg(long)]
    pub align_at_warmup: Option<String>,
    #[arg(long)]
    pub lr: Option<String>,
    #[arg(long)]
    pub beta1: Option<String>,
    #[arg(long)]
    pub beta2: Option<String>,
    #[arg(long)]
    pub eps: Option<String>,
    #[arg(long)]
    pub stiefel_lr: Option<String>,
    #[arg(long)]
    pub stiefel_beta1: Option<String>,
    #[arg(long)]
    pub stiefel_beta2: Option<String>,
    #[arg(long)]
    pub stiefel_eps: Option<String>,
    #[arg(long)]
    pub stiefel_q: Option<String>,
}

impl Overrides {
    fn pairs(&self) -> Vec<(&'static str, &str)> {
        let all = [
            ("s", &self.s),
            ("k", &self.k),
            ("eta_rec", &self.eta_rec),
            ("eta_cl", &self.eta_cl),
            ("warmup_epochs", &self.warmup_epochs),
            ("epochs", &self.epochs),
            ("batch_size", &self.batch_size),
            ("seed", &self.seed),
            ("arch", &self.arch),
            ("hidden", &self.hidden),
            ("channels", &self.channels),
            ("feature_dim", &self.feature_dim),
            ("leaky_slope", &self.leaky_slope),
            ("bounded_output", &self.bounded_output),
            ("align_at_warmup", &self.align_at_warmup),
            ("lr", &self.lr),
            ("beta1", &self.beta1),
            ("beta2", &self.beta2),
            ("eps", &self.eps),
            ("stiefel_lr", &self.stiefel_lr),
            ("stiefel_beta1", &self.stiefel_beta1),
            ("stiefel_beta2", &self.stiefel_beta2),
            ("stiefel_eps", &self.stiefel_eps),
            ("stiefel_q", &self.stiefel_q),
        ];
        all.into_iter().filter_map(|(k, v)| v.as_deref().map(|v| (k, v))).collect()
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub overrides: Overrides,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Continue from a checkpoint written by an earlier run of the same
    /// configuration (only `epochs` may differ).
    #[arg(long)]
    pub resume: Option<PathBuf>,
    /// Also write `checkpoint-epochNNNN.bin` every N epochs.
    #[arg(long)]
    pub checkpoint_every: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Config whose dataset keys describe the data.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub data: DataArgs,
    /// Write the metrics line here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BaselineArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub data: DataArgs,
    /// RBF bandwidth; defaults to the median pairwise distance.
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub k: usize,
    /// Eigenvectors kept; defaults to k.
    #[arg(long)]
    pub s: Option<usize>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TraverseArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Cluster index or `all`.
    #[arg(long, default_value = "all")]
    pub cluster: String,
    /// Comma-separated radii.
    #[arg(long, allow_hyphen_values = true)]
    pub radii: String,
    /// `cluster` for the code direction or a latent index `j ≥ k − 1`.
    #[arg(long, default_value = "cluster")]
    pub component: String,
    /// Multiply radii by each cluster's anchor radius.
    #[arg(long)]
    pub relative: bool,
    /// Output image (`.png` for PNG, otherwise PGM).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Comma-separated latent vector of length s.
    #[arg(long, allow_hyphen_values = true)]
    pub latent: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct GridArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub overrides: Overrides,
    /// Comma-separated reconstruction weights.
    #[arg(long)]
    pub grid_eta_rec: String,
    /// Comma-separated cluster weights.
    #[arg(long)]
    pub grid_eta_cl: String,
    /// Ranked table (tab-separated).
    #[arg(long)]
    pub out: PathBuf,
    /// Runs trained concurrently; results do not depend on it.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Usage(_) => 2,
            Self::Runtime(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Usage(m) => write!(f, "usage error: {m}"),
            Self::Runtime(e) => write!(f, "error: {e:#}"),
        }
    }
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        Self::Runtime(e)
    }
}

type CliResult<T> = Result<T, CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn require_file(path: &Path, what: &str) -> CliResult<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(usage(format!("{what} {} does not exist", path.display())))
    }
}

fn parse_list<T: std::str::FromStr>(text: &str, what: &str) -> CliResult<Vec<T>> {
    let items: Result<Vec<T>, _> = text.split(',').map(|p| p.trim().parse()).collect();
    match items {
        Ok(v) if !v.is_empty() => Ok(v),
        _ => Err(usage(format!("{what}: expected a comma-separated list, got {text:?}"))),
    }
}

/// Config file (if any) plus data flags and overrides.
fn resolve_config(path: Option<&Path>, data: &DataArgs, overrides: &Overrides) -> CliResult<RunConfig> {
    let base = match path {
        Some(p) => {
            require_file(p, "config")?;
            RunConfig::load(p).map_err(|e| usage(format!("{}: {e}", p.display())))?
        }
        None => RunConfig {
            train: TrainConfig::default(),
            data: DataSpec::default(),
        },
    };
    let mut pairs = BTreeMap::new();
    for (k, v) in overrides.pairs() {
        pairs.insert(k.to_string(), (v.to_string(), 0));
    }
    let mut rc = RunConfig::from_pairs(base.train, base.data, &pairs).map_err(|e| usage(format!("flag {e}")))?;
    if let Some(images) = &data.images {
        rc.data.source = Some(DataSource::Idx {
            images: images.clone(),
            labels: data.labels.clone(),
        });
    } else if data.labels.is_some() {
        return Err(usage("--labels needs --images"));
    }
    if let Some(c) = &data.classes {
        rc.data.classes = Some(parse_list(c, "--classes")?);
    }
    if let Some(n) = &data.subsample {
        rc.data.subsample = Some(n.parse().map_err(|_| usage(format!("--subsample: bad count {n:?}")))?);
    }
    if let Some(s) = &data.subsample_seed {
        rc.data.subsample_seed = s.parse().map_err(|_| usage(format!("--subsample-seed: bad seed {s:?}")))?;
    }
    if let Some(DataSource::Idx { images, labels }) = &rc.data.source {
        require_file(images, "image file")?;
        if let Some(l) = labels {
            require_file(l, "label file")?;
        }
    }
    Ok(rc)
}

fn load_data(spec: &DataSpec) -> CliResult<Dataset> {
    if spec.source.is_none() {
        return Err(usage("no dataset: pass --images or set dataset in the config"));
    }
    Ok(spec.load().context("loading dataset")?)
}

fn load_checkpoint(path: &Path) -> CliResult<TrainState> {
    require_file(path, "checkpoint")?;
    Ok(checkpoint::load(path).with_context(|| format!("reading {}", path.display()))?)
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> CliResult<()> {
    Ok(fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))?)
}

fn ensure_dir(dir: &Path) -> CliResult<()> {
    Ok(fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?)
}

pub fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Train(a) => cmd_train(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::Baseline(a) => cmd_baseline(&a),
        Command::Traverse(a) => cmd_traverse(&a),
        Command::Generate(a) => cmd_generate(&a),
        Command::Gridsearch(a) => cmd_gridsearch(&a),
    }
}

pub fn cmd_train(a: &TrainArgs) -> CliResult<()> {
    let rc = resolve_config(Some(&a.config), &a.data, &a.overrides)?;
    rc.train.validate().map_err(|e| usage(format!("config: {e}")))?;
    let resumed = match &a.resume {
        Some(p) => {
            let st = load_checkpoint(p)?;
            let expected = TrainConfig {
                epochs: rc.train.epochs,
                ..st.config.clone()
            };
            if expected != rc.train {
                return Err(usage("--resume: checkpoint was written with a different configuration"));
            }
            Some(st)
        }
        None => None,
    };
    let data = load_data(&rc.data)?;
    ensure_dir(&a.out)?;
    let started = Instant::now();
    let mut state = match resumed {
        Some(mut st) => {
            st.config.epochs = rc.train.epochs;
            st
        }
        None => TrainState::new(rc.train.clone(), data.sample_shape()).context("initializing model")?,
    };
    while state.epoch < state.config.epochs {
        state.run_epoch(&data).context("training")?;
        if let Some(every) = a.checkpoint_every.filter(|&n| n > 0) {
            if state.epoch % every == 0 {
                let p = a.out.join(format!("checkpoint-epoch{:04}.bin", state.epoch));
                checkpoint::save(&state, &p).context("writing checkpoint")?;
            }
        }
    }
    let result = state.finish(&data).context("evaluating")?;
    checkpoint::save(&state, &a.out.join("checkpoint.bin")).context("writing checkpoint")?;
    let text = report::render(&state.config, &result, &data.provenance, Some("checkpoint.bin"));
    write(&a.out.join("report.txt"), &text)?;
    write(&a.out.join("timing.txt"), format!("wall_clock seconds={}\n", started.elapsed().as_secs_f64()))?;
    if let Some(m) = &result.metrics {
        println!("{}", report::metrics_line(m));
    }
    Ok(())
}

pub fn cmd_eval(a: &EvalArgs) -> CliResult<()> {
    let st = load_checkpoint(&a.checkpoint)?;
    let rc = resolve_config(a.config.as_deref(), &a.data, &Overrides::default())?;
    let data = load_data(&rc.data)?;
    let m = train::evaluate(&st.model, &data).context("evaluating")?;
    let line = report::metrics_line(&m) + "\n";
    match &a.out {
        Some(p) => write(p, line),
        None => {
            print!("{line}");
            Ok(())
        }
    }
}

pub fn cmd_baseline(a: &BaselineArgs) -> CliResult<()> {
    let rc = resolve_config(a.config.as_deref(), &a.data, &Overrides::default())?;
    let s = a.s.unwrap_or(a.k);
    if a.k < 2 || s == 0 {
        return Err(usage("baseline needs k ≥ 2 and s ≥ 1"));
    }
    if let Some(sigma) = a.sigma {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(usage(format!("--sigma must be positive, got {sigma}")));
        }
    }
    let data = load_data(&rc.data)?;
    let n = data.len();
    if n > BASELINE_MAX_SAMPLES {
        return Err(usage(format!(
            "baseline builds a dense {n}×{n} kernel; refusing more than {BASELINE_MAX_SAMPLES} samples (use --subsample)"
        )));
    }
    if s >= n {
        return Err(usage(format!("s = {s} must be smaller than the {n} samples")));
    }
    let x = data.samples.reshape(&[n, data.samples.len() / n]).map_err(anyhow::Error::from)?;
    let sigma = match a.sigma {
        Some(v) => v,
        None => ksc::median_bandwidth(&x).context("choosing a bandwidth")?,
    };
    let b = ksc::baseline(&x, sigma, a.k, s).context("solving the eigenproblem")?;
    ensure_dir(&a.out)?;
    let mut emb = String::new();
    for i in 0..n {
        let row: Vec<String> = b.embedding.vectors.row(i).iter().map(f64::to_string).collect();
        writeln!(emb, "{}\t{}", b.labels[i], row.join("\t")).expect("string write");
    }
    write(&a.out.join("embedding.tsv"), emb)?;
    let mut line = format!("baseline n={n} k={} s={s} sigma={sigma}", a.k);
    if let Some(l) = &data.labels {
        let ari = metrics::adjusted_rand_index(l, &b.labels).map_err(anyhow::Error::from)?;
        let nmi = metrics::normalized_mutual_information(l, &b.labels).map_err(anyhow::Error::from)?;
        write!(line, " ari={ari} nmi={nmi}").expect("string write");
    }
    line.push('\n');
    write(&a.out.join("metrics.txt"), &line)?;
    print!("{line}");
    Ok(())
}

fn tile_extents(shape: &[usize]) -> (usize, usize) {
    match shape {
        [.., h, w] if shape.len() >= 2 => (*h * shape[..shape.len() - 2].iter().product::<usize>(), *w),
        [d] => (1, *d),
        _ => (1, 1),
    }
}

/// Decoded traversal tiles, one row per cluster and one column per radius.
pub fn traversal_grid(st: &TrainState, clusters: &[usize], radii: &[f64], direction: Direction, relative: bool) -> CliResult<ImageGrid> {
    let model = &st.model;
    let s = model.latent_dim();
    let mut tiles = Vec::new();
    for &c in clusters {
        let anchor = model.anchors[c];
        let scaled: Vec<f64> = match (relative, direction) {
            (true, Direction::Cluster) => radii.iter().map(|r| r * anchor).collect(),
            _ => radii.to_vec(),
        };
        let latents = objective::traversal_latents(&model.codes, s, c, &scaled, direction, anchor).map_err(|e| usage(e.to_string()))?;
        for e in latents {
            tiles.push(objective::decode_latent(model, &e).map_err(anyhow::Error::from)?.into_data());
        }
    }
    let (h, w) = tile_extents(model.input_shape());
    let caption = format!("clusters {clusters:?} radii {radii:?} direction {direction:?} relative {relative}");
    Ok(ImageGrid::new(clusters.len(), radii.len(), h, w, tiles, caption).map_err(anyhow::Error::from)?)
}

pub fn cmd_traverse(a: &TraverseArgs) -> CliResult<()> {
    let radii: Vec<f64> = parse_list(&a.radii, "--radii")?;
    if radii.iter().any(|r| !r.is_finite()) {
        return Err(usage("--radii must be finite"));
    }
    let st = load_checkpoint(&a.checkpoint)?;
    let k = st.model.k();
    let clusters: Vec<usize> = if a.cluster == "all" {
        (0..k).collect()
    } else {
        parse_list(&a.cluster, "--cluster")?
    };
    if let Some(c) = clusters.iter().find(|&&c| c >= k) {
        return Err(usage(format!("--cluster {c} out of range for k = {k}")));
    }
    let direction = match a.component.as_str() {
        "cluster" => Direction::Cluster,
        j => Direction::Component(j.parse().map_err(|_| usage(format!("--component: expected cluster or an index, got {j:?}")))?),
    };
    let grid = traversal_grid(&st, &clusters, &radii, direction, a.relative)?;
    Ok(render_grid(&grid, &a.out).map_err(anyhow::Error::from)?)
}

pub fn cmd_generate(a: &GenerateArgs) -> CliResult<()> {
    let latent: Vec<f64> = parse_list(&a.latent, "--latent")?;
    let st = load_checkpoint(&a.checkpoint)?;
    let s = st.model.latent_dim();
    if latent.len() != s {
        return Err(usage(format!("--latent has {} values but s = {s}", latent.len())));
    }
    let img = objective::decode_latent(&st.model, &Tensor::vector(latent.clone())).map_err(anyhow::Error::from)?;
    let (h, w) = tile_extents(st.model.input_shape());
    let grid = ImageGrid::new(1, 1, h, w, vec![img.into_data()], format!("latent {latent:?}")).map_err(anyhow::Error::from)?;
    Ok(render_grid(&grid, &a.out).map_err(anyhow::Error::from)?)
}

/// One trained grid point.
#[derive(Clone, Debug, PartialEq)]
pub struct GridRow {
    pub eta_rec: f64,
    pub eta_cl: f64,
    pub ams: f64,
    pub ari: Option<f64>,
    pub nmi: Option<f64>,
    pub final_loss: Option<f64>,
}

/// Distinct `(η_rec, η_cl)` pairs in first-seen order.
pub fn grid_points(eta_rec: &[f64], eta_cl: &[f64]) -> Vec<(f64, f64)> {
    let mut seen = std::collections::BTreeSet::new();
    let mut out = Vec::new();
    for &r in eta_rec {
        for &c in eta_cl {
            if seen.insert((r.to_bits(), c.to_bits())) {
                out.push((r, c));
            }
        }
    }
    out
}

/// Trains every grid point and ranks by AMS, highest first; ties keep grid
/// order.
pub fn run_grid(base: &TrainConfig, data: &Dataset, points: &[(f64, f64)], jobs: usize) -> anyhow::Result<Vec<GridRow>> {
    let run_one = |&(eta_rec, eta_cl): &(f64, f64)| -> anyhow::Result<GridRow> {
        let cfg = TrainConfig {
            eta_rec,
            eta_cl,
            ..base.clone()
        };
        let (_, rep) = train::train(cfg, data).with_context(|| format!("eta_rec={eta_rec} eta_cl={eta_cl}"))?;
        let m = rep.metrics.as_ref().ok_or_else(|| anyhow!("no metrics for an empty dataset"))?;
        Ok(GridRow {
            eta_rec,
            eta_cl,
            ams: m.ams,
            ari: m.ari,
            nmi: m.nmi,
            final_loss: rep.final_loss(),
        })
    };
    let mut rows: Vec<GridRow> = if jobs <= 1 {
        points.iter().map(run_one).collect::<anyhow::Result<_>>()?
    } else {
        let mut out = Vec::with_capacity(points.len());
        for chunk in points.chunks(jobs) {
            let results: Vec<anyhow::Result<GridRow>> = std::thread::scope(|scope| {
                let handles: Vec<_> = chunk.iter().map(|p| scope.spawn(move || run_one(p))).collect();
                handles.into_iter().map(|h| h.join().expect("grid worker panicked")).collect()
            });
            for r in results {
                out.push(r?);
            }
        }
        out
    };
    rows.sort_by(|a, b| b.ams.total_cmp(&a.ams));
    Ok(rows)
}

pub fn grid_table(rows: &[GridRow]) -> String {
    let opt = |v: Option<f64>| v.map_or_else(|| "none".into(), |x| x.to_string());
    let mut out = String::from("eta_rec\teta_cl\tams\tari\tnmi\tfinal_loss\n");
    for r in rows {
        writeln!(out, "{}\t{}\t{}\t{}\t{}\t{}", r.eta_rec, r.eta_cl, r.ams, opt(r.ari), opt(r.nmi), opt(r.final_loss)).expect("string write");
    }
    out
}

pub fn cmd_gridsearch(a: &GridArgs) -> CliResult<()> {
    let rc = resolve_config(Some(&a.config), &a.data, &a.overrides)?;
    let er: Vec<f64> = parse_list(&a.grid_eta_rec, "--grid-eta-rec")?;
    let ec: Vec<f64> = parse_list(&a.grid_eta_cl, "--grid-eta-cl")?;
    let points = grid_points(&er, &ec);
    for &(r, c) in &points {
        TrainConfig {
            eta_rec: r,
            eta_cl: c,
            ..rc.train.clone()
        }
        .validate()
        .map_err(|e| usage(format!("grid point ({r}, {c}): {e}")))?;
    }
    let data = load_data(&rc.data)?;
    let rows = run_grid(&rc.train, &data, &points, a.jobs)?;
    write(&a.out, grid_table(&rows))?;
    let best = &rows[0];
    println!("# best: eta_rec={} eta_cl={} ams={}", best.eta_rec, best.eta_cl, best.ams);
    print!(
        "{}",
        RunConfig {
            train: TrainConfig {
                eta_rec: best.eta_rec,
                eta_cl: best.eta_cl,
                ..rc.train
            },
            data: rc.data,
        }
        .to_text()
    );
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_points_deduplicate() {
        assert_eq!(grid_points(&[1.0, 1.0], &[0.5]), vec![(1.0, 0.5)]);
        assert_eq!(grid_points(&[1.0, 2.0], &[0.5, 0.5, 0.1]).len(), 4);
    }

    #[test]
    fn lists() {
        assert_eq!(parse_list::<f64>("-1, 0,2.5", "r").unwrap(), vec![-1.0, 0.0, 2.5]);
        assert!(parse_list::<f64>("", "r").is_err());
        assert!(parse_list::<usize>("1,x", "r").is_err());
    }

    #[test]
    fn tiles() {
        assert_eq!(tile_extents(&[1, 28, 28]), (28, 28));
        assert_eq!(tile_extents(&[2]), (1, 2));
    }
}
