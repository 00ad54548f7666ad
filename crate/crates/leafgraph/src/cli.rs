//! `leafgraph` subcommands.
//!
//! Every subcommand loads the optional `--config` file, applies its flags on
//! top, resolves the seed and writes the result to
//! `<out_dir>/effective_config.toml` before doing any work. Machine-readable
//! results go to files under the output directory and to stdout; logs go to
//! stderr.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use leafgraph_core::dataset::{self, FeatureStore, Split, SplitFractions};
use leafgraph_core::eval::Averaging;
use leafgraph_core::explain::{self, CamMethod, ClassScore};
use leafgraph_core::image::{raw_pixel_features, RawImage};
use leafgraph_core::model::{self, AblationRow, Arch, ModelInputs, SageModel, SplitData};
use leafgraph_core::nn::Aggregator;
use leafgraph_core::Rng;
use serde_json::json;

use crate::config::{PipelineConfig, SEED_ENV};
use crate::error::{AppError, Result};
use crate::{io, parallel, service};

pub const MANIFEST_FILE: &str = "manifest.csv";
pub const FEATURES_FILE: &str = "features.lgfs";
pub const SPATIAL_FILE: &str = "spatial.lgfs";
pub const RAW_PIXELS_FILE: &str = "raw_pixels.lgfs";
pub const GRAPH_FILE: &str = "graph.lggr";
pub const GRAPH_IDS_FILE: &str = "graph.ids.csv";
pub const CHECKPOINT_FILE: &str = "model.lgck";

#[derive(Debug, Parser)]
#[command(name = "leafgraph", version, about = "Graph-based plant disease classification pipeline")]
pub struct Cli {
    /// TOML pipeline configuration; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Seed override (falls back to the config file, then LEAFGRAPH_SEED).
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic manifest and pooled feature store.
    Synth(SynthArgs),
    /// Assign stratified train/val/test splits.
    Split(SplitArgs),
    /// Build and cache the similarity graph over the training rows.
    BuildGraph(GraphArgs),
    /// Train a model and write its checkpoint.
    Train(TrainArgs),
    /// Evaluate a checkpoint on one split.
    Eval(EvalArgs),
    /// Train and evaluate every architecture with one seed and budget.
    Ablate(AblateArgs),
    /// Grad-CAM or Eigen-CAM heatmaps for listed samples.
    Explain(ExplainArgs),
    /// Parameter-count report.
    Params(ParamsArgs),
    /// Serve predictions over HTTP.
    Serve(ServeArgs),
}

#[derive(Debug, Default, Args)]
pub struct PathArgs {
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Pooled feature store (`.lgfs`, with its `.ids.csv`).
    #[arg(long)]
    pub features: Option<PathBuf>,
    /// Raw-pixel feature store for `gnn_only`.
    #[arg(long)]
    pub raw_pixels: Option<PathBuf>,
}

fn parse_arch(s: &str) -> std::result::Result<Arch, String> {
    Arch::parse(s).map_err(|e| e.to_string())
}

fn parse_split(s: &str) -> std::result::Result<Split, String> {
    Split::parse(s).map_err(|e| e.to_string())
}

fn parse_averaging(s: &str) -> std::result::Result<Averaging, String> {
    Averaging::parse(s).map_err(|e| e.to_string())
}

fn parse_aggregator(s: &str) -> std::result::Result<Aggregator, String> {
    match s {
        "mean" => Ok(Aggregator::Mean),
        "maxpool" => Ok(Aggregator::MaxPool),
        other => Err(format!("unknown aggregator '{other}' (mean, maxpool)")),
    }
}

fn parse_method(s: &str) -> std::result::Result<CamMethod, String> {
    CamMethod::parse(s).map_err(|e| e.to_string())
}

fn parse_grid(s: &str) -> std::result::Result<(usize, usize), String> {
    let (h, w) = s.split_once('x').ok_or_else(|| format!("expected HxW, got '{s}'"))?;
    let p = |v: &str| v.parse::<usize>().map_err(|e| format!("'{s}': {e}"));
    Ok((p(h)?, p(w)?))
}

#[derive(Debug, Default, Args)]
pub struct ModelArgs {
    #[arg(long, value_parser = parse_arch)]
    pub arch: Option<Arch>,
    /// Hidden widths, e.g. `64,64`; also sets the layer count.
    #[arg(long, value_delimiter = ',')]
    pub hidden: Option<Vec<usize>>,
    /// Per-layer fan-outs, target hop first.
    #[arg(long, value_delimiter = ',')]
    pub fan_outs: Option<Vec<usize>>,
    #[arg(long, value_parser = parse_aggregator)]
    pub aggregator: Option<Aggregator>,
    #[arg(long)]
    pub dropout: Option<f64>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    pub theta: Option<f64>,
    #[arg(long)]
    pub min_degree: Option<usize>,
    #[arg(long)]
    pub l2_normalize: bool,
    #[arg(long)]
    pub no_bias: bool,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub classes: Option<usize>,
    #[arg(long)]
    pub per_class: Option<usize>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Also write spatial maps of this grid, e.g. `7x7`.
    #[arg(long, value_parser = parse_grid)]
    pub spatial: Option<(usize, usize)>,
    /// Also write grayscale images and the raw-pixel store.
    #[arg(long)]
    pub images: bool,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub train: Option<f64>,
    #[arg(long)]
    pub val: Option<f64>,
    #[arg(long)]
    pub test: Option<f64>,
}

#[derive(Debug, Args)]
pub struct GraphArgs {
    #[command(flatten)]
    pub paths: PathArgs,
    #[arg(long, allow_hyphen_values = true)]
    pub theta: Option<f64>,
    #[arg(long)]
    pub min_degree: Option<usize>,
    /// Worker threads for the similarity matrix (default: all cores).
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub paths: PathArgs,
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub paths: PathArgs,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, default_value = "test", value_parser = parse_split)]
    pub split: Split,
    #[arg(long, default_value = "weighted", value_parser = parse_averaging)]
    pub averaging: Averaging,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[command(flatten)]
    pub paths: PathArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Subset of architectures (default: all those with inputs available).
    #[arg(long, value_delimiter = ',', value_parser = parse_arch)]
    pub archs: Option<Vec<Arch>>,
    #[arg(long, default_value = "test", value_parser = parse_split)]
    pub split: Split,
    #[arg(long, default_value = "weighted", value_parser = parse_averaging)]
    pub averaging: Averaging,
}

#[derive(Debug, Args)]
pub struct ExplainArgs {
    #[arg(long, value_parser = parse_method)]
    pub method: CamMethod,
    /// Spatial feature store (`H'×W'×C'` per sample).
    #[arg(long)]
    pub spatial: Option<PathBuf>,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Sample ids; defaults to the test split of `--manifest`.
    #[arg(long, value_delimiter = ',')]
    pub ids: Option<Vec<String>>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Class index to explain (default: the predicted class).
    #[arg(long)]
    pub class: Option<usize>,
    /// Directory of `<id>.pgm` / `<id>.ppm` base images for overlays.
    #[arg(long)]
    pub image_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ParamsArgs {
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub input_dim: Option<usize>,
    #[arg(long)]
    pub classes: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Graph cache to check against the checkpoint's training rows.
    #[arg(long)]
    pub graph: Option<PathBuf>,
    #[arg(long)]
    pub host: Option<String>,
    #[arg(long)]
    pub port: Option<u16>,
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn set_path(slot: &mut Option<PathBuf>, value: Option<PathBuf>) {
    if value.is_some() {
        *slot = value;
    }
}

impl PathArgs {
    fn apply(self, cfg: &mut PipelineConfig) {
        set_path(&mut cfg.paths.manifest, self.manifest);
        set_path(&mut cfg.paths.features, self.features);
        set_path(&mut cfg.paths.raw_pixels, self.raw_pixels);
    }
}

impl ModelArgs {
    fn apply(self, cfg: &mut PipelineConfig) {
        let m = &mut cfg.model;
        set(&mut m.arch, self.arch);
        if let Some(h) = self.hidden {
            m.layers = h.len();
            m.hidden_dims = h;
            if self.fan_outs.is_none() && m.fan_outs.len() != m.layers {
                let f = m.fan_outs.first().copied().unwrap_or(10);
                m.fan_outs = vec![f; m.layers];
            }
        }
        set(&mut m.fan_outs, self.fan_outs);
        set(&mut m.aggregator, self.aggregator);
        set(&mut m.dropout, self.dropout);
        set(&mut m.lr, self.lr);
        set(&mut m.batch_size, self.batch_size);
        set(&mut m.epochs, self.epochs);
        set(&mut m.theta, self.theta);
        set(&mut m.min_degree, self.min_degree);
        if self.l2_normalize {
            m.l2_normalize = true;
        }
        if self.no_bias {
            m.use_bias = false;
        }
    }
}

/// Runs one parsed command line.
pub fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    set(&mut cfg.paths.out_dir, cli.out);
    let seed = cli.seed;
    match cli.command {
        Command::Synth(a) => synth(cfg, a, seed),
        Command::Split(a) => split(cfg, a, seed),
        Command::BuildGraph(a) => build_graph(cfg, a, seed),
        Command::Train(a) => train(cfg, a, seed),
        Command::Eval(a) => eval(cfg, a, seed),
        Command::Ablate(a) => ablate(cfg, a, seed),
        Command::Explain(a) => explain(cfg, a, seed),
        Command::Params(a) => params(cfg, a, seed),
        Command::Serve(a) => serve(cfg, a, seed),
    }
}

/// Resolves the seed and echoes the effective configuration.
fn finalize(cfg: &mut PipelineConfig, seed: Option<u64>) -> Result<u64> {
    let env = std::env::var(SEED_ENV).ok();
    let seed = cfg.resolve_seed(seed, env.as_deref())?;
    let path = cfg.echo()?;
    log::info!("seed {seed}; effective config in {}", path.display());
    Ok(seed)
}

fn out(cfg: &PipelineConfig, name: &str) -> PathBuf {
    cfg.paths.out_dir.join(name)
}

fn print_json(value: &serde_json::Value) {
    println!("{}", serde_json::to_string_pretty(value).expect("json value"));
}

fn synth(mut cfg: PipelineConfig, a: SynthArgs, seed: Option<u64>) -> Result<()> {
    let s = &mut cfg.synth;
    set(&mut s.classes, a.classes);
    set(&mut s.per_class, a.per_class);
    set(&mut s.dim, a.dim);
    set(&mut s.sigma, a.sigma);
    if let Some((h, w)) = a.spatial {
        s.spatial = vec![h, w];
    }
    s.images |= a.images;
    if !(s.spatial.is_empty() || s.spatial.len() == 2) {
        return Err(AppError::Usage("[synth] spatial must be [height, width]".into()));
    }
    let seed = finalize(&mut cfg, seed)?;
    let s = &cfg.synth;
    let (manifest, store) = dataset::synth_dataset(s.classes, s.per_class, s.dim, s.sigma, &mut Rng::named(seed, "synth"))?;

    let manifest_path = out(&cfg, MANIFEST_FILE);
    let features_path = out(&cfg, FEATURES_FILE);
    io::write_manifest(&manifest_path, &manifest)?;
    io::write_feature_store(&features_path, &store)?;
    let mut report = json!({
        "samples": manifest.len(),
        "classes": manifest.class_table().len(),
        "manifest": manifest_path,
        "features": features_path,
    });
    if let [h, w] = s.spatial[..] {
        let spatial = dataset::synth_spatial(&store, h, w, &mut Rng::named(seed, "spatial"))?;
        let p = out(&cfg, SPATIAL_FILE);
        io::write_feature_store(&p, &spatial)?;
        report["spatial"] = json!(p);
    }
    if s.images {
        let spec = dataset::SynthImageSpec {
            side: s.image_side,
            pixel_noise: s.pixel_noise,
            augment: cfg.augment.clone(),
            ..dataset::SynthImageSpec::default()
        };
        let images = dataset::synth_images(&manifest, &spec, &mut Rng::named(seed, "images"))?;
        let dir = cfg.paths.image_dir.clone().unwrap_or_else(|| out(&cfg, "images"));
        let mut rows = Vec::with_capacity(images.len());
        for (e, img) in manifest.entries().iter().zip(&images) {
            io::write_image(&dir.join(format!("{}.pgm", e.sample_id)), img)?;
            rows.push(raw_pixel_features(img)?);
        }
        let raw = FeatureStore::pooled_from_rows(&rows, store.ids().to_vec())?;
        let p = out(&cfg, RAW_PIXELS_FILE);
        io::write_feature_store(&p, &raw)?;
        report["images"] = json!(dir);
        report["raw_pixels"] = json!(p);
    }
    print_json(&report);
    Ok(())
}

fn split(mut cfg: PipelineConfig, a: SplitArgs, seed: Option<u64>) -> Result<()> {
    set_path(&mut cfg.paths.manifest, a.manifest);
    set(&mut cfg.split.train, a.train);
    set(&mut cfg.split.val, a.val);
    set(&mut cfg.split.test, a.test);
    let fractions = SplitFractions::new(cfg.split.train, cfg.split.val, cfg.split.test)
        .map_err(|e| AppError::Usage(e.to_string()))?;
    let seed = finalize(&mut cfg, seed)?;
    let manifest = io::read_manifest(cfg.require(&cfg.paths.manifest, "manifest")?)?;
    let split = dataset::split(&manifest, fractions, &mut Rng::named(seed, "split"))?;
    let p = out(&cfg, MANIFEST_FILE);
    io::write_manifest(&p, &split)?;
    print_json(&json!({
        "manifest": p,
        "train": split.indices_in(Split::Train).len(),
        "val": split.indices_in(Split::Val).len(),
        "test": split.indices_in(Split::Test).len(),
    }));
    Ok(())
}

fn build_graph(mut cfg: PipelineConfig, a: GraphArgs, seed: Option<u64>) -> Result<()> {
    a.paths.apply(&mut cfg);
    set(&mut cfg.model.theta, a.theta);
    set(&mut cfg.model.min_degree, a.min_degree);
    if !(-1.0..1.0).contains(&cfg.model.theta) {
        return Err(AppError::Usage(format!("theta {} outside [-1, 1)", cfg.model.theta)));
    }
    finalize(&mut cfg, seed)?;
    let store = io::read_feature_store(cfg.require(&cfg.paths.features, "features")?)?;
    // with a manifest, the graph spans the training rows in manifest order,
    // exactly as training builds it
    let (ids, features) = match &cfg.paths.manifest {
        Some(p) => {
            let d = SplitData::gather(&store, &io::read_manifest(p)?, Split::Train)?;
            (d.ids, d.features)
        }
        None => {
            let ids: Vec<&str> = store.ids().iter().map(String::as_str).collect();
            (store.ids().to_vec(), store.gather(&ids)?)
        }
    };
    let threads = a.threads.unwrap_or_else(parallel::available_threads);
    let graph = parallel::build_graph(&features, cfg.model.theta, cfg.model.min_degree, threads)?;
    let p = out(&cfg, GRAPH_FILE);
    io::write_graph(&p, &graph)?;
    io::write_id_index(&out(&cfg, GRAPH_IDS_FILE), &ids)?;
    print_json(&json!({
        "graph": p,
        "nodes": graph.n(),
        "edge_slots": graph.edge_slots(),
        "max_degree": graph.max_degree(),
        "theta": graph.theta(),
    }));
    Ok(())
}

struct Stores {
    pooled: Option<FeatureStore>,
    raw: Option<FeatureStore>,
}

impl Stores {
    fn load(cfg: &PipelineConfig, need_pooled: bool, need_raw: bool) -> Result<Self> {
        let load = |p: &Option<PathBuf>, need: bool, what: &str| -> Result<Option<FeatureStore>> {
            match p {
                Some(p) => Ok(Some(io::read_feature_store(p)?)),
                None if need => Err(AppError::Usage(format!("missing path: {what}"))),
                None => Ok(None),
            }
        };
        Ok(Self {
            pooled: load(&cfg.paths.features, need_pooled, "features")?,
            raw: load(&cfg.paths.raw_pixels, need_raw, "raw_pixels")?,
        })
    }

    fn inputs(&self) -> ModelInputs<'_> {
        ModelInputs {
            pooled: self.pooled.as_ref(),
            raw_pixels: self.raw.as_ref(),
        }
    }
}

fn train(mut cfg: PipelineConfig, a: TrainArgs, seed: Option<u64>) -> Result<()> {
    a.paths.apply(&mut cfg);
    a.model.apply(&mut cfg);
    cfg.model.validate().map_err(|e| AppError::Usage(e.to_string()))?;
    finalize(&mut cfg, seed)?;
    let raw = cfg.model.arch.uses_raw_pixels();
    let stores = Stores::load(&cfg, !raw, raw)?;
    let manifest = io::read_manifest(cfg.require(&cfg.paths.manifest, "manifest")?)?;
    let (model, report) = model::train(&cfg.model, stores.inputs(), &manifest)?;
    let p = cfg.paths.checkpoint.clone().unwrap_or_else(|| out(&cfg, CHECKPOINT_FILE));
    io::write_checkpoint(&p, &model)?;
    io::write_json(&out(&cfg, "training_report.json"), &report)?;
    if let Some(last) = report.epochs.last() {
        log::info!("epoch {}: loss {:.4}, val accuracy {:?}", last.epoch, last.loss, last.val_accuracy);
    }
    print_json(&json!({
        "checkpoint": p,
        "arch": model.arch().as_str(),
        "param_count": model.count_parameters(),
        "report": report,
    }));
    Ok(())
}

fn eval(mut cfg: PipelineConfig, a: EvalArgs, seed: Option<u64>) -> Result<()> {
    a.paths.apply(&mut cfg);
    set_path(&mut cfg.paths.checkpoint, a.checkpoint);
    finalize(&mut cfg, seed)?;
    let model = io::read_checkpoint(cfg.require(&cfg.paths.checkpoint, "checkpoint")?)?;
    let raw = model.arch().uses_raw_pixels();
    let stores = Stores::load(&cfg, !raw, raw)?;
    let manifest = io::read_manifest(cfg.require(&cfg.paths.manifest, "manifest")?)?;
    let (cm, report) = model::evaluate(&model, stores.inputs(), &manifest, a.split, a.averaging)?;
    let value = json!({
        "split": a.split,
        "arch": model.arch().as_str(),
        "metrics": report,
        "confusion": cm,
    });
    io::write_json(&out(&cfg, "metrics.json"), &value)?;
    io::write_bytes(&out(&cfg, "metrics.txt"), report.to_text().as_bytes())?;
    print_json(&value);
    Ok(())
}

/// Aligned text table of an ablation run.
pub fn ablation_table(rows: &[AblationRow]) -> String {
    let mut s = format!(
        "{:<12} {:>10} {:>9} {:>9} {:>9} {:>9}\n",
        "arch", "params", "accuracy", "precision", "recall", "f1"
    );
    for r in rows {
        let m = &r.metrics;
        s.push_str(&format!(
            "{:<12} {:>10} {:>9.4} {:>9.4} {:>9.4} {:>9.4}\n",
            r.arch.as_str(),
            r.parameters,
            m.accuracy,
            m.precision,
            m.recall,
            m.f1
        ));
    }
    s
}

fn ablate(mut cfg: PipelineConfig, a: AblateArgs, seed: Option<u64>) -> Result<()> {
    a.paths.apply(&mut cfg);
    a.model.apply(&mut cfg);
    cfg.model.validate().map_err(|e| AppError::Usage(e.to_string()))?;
    finalize(&mut cfg, seed)?;
    let stores = Stores::load(&cfg, true, false)?;
    let archs = a.archs.unwrap_or_else(|| {
        let mut all = Arch::ALL.to_vec();
        if stores.raw.is_none() {
            log::warn!("no raw-pixel store; skipping gnn_only");
            all.retain(|a| !a.uses_raw_pixels());
        }
        all
    });
    let manifest = io::read_manifest(cfg.require(&cfg.paths.manifest, "manifest")?)?;
    let rows = model::ablate(stores.inputs(), &manifest, &cfg.model, &archs, a.split, a.averaging)?;
    let table = ablation_table(&rows);
    io::write_json(&out(&cfg, "ablation.json"), &rows)?;
    io::write_bytes(&out(&cfg, "ablation.txt"), table.as_bytes())?;
    print!("{table}");
    Ok(())
}

fn explain(mut cfg: PipelineConfig, a: ExplainArgs, seed: Option<u64>) -> Result<()> {
    set_path(&mut cfg.paths.spatial, a.spatial);
    set_path(&mut cfg.paths.checkpoint, a.checkpoint);
    set_path(&mut cfg.paths.manifest, a.manifest);
    set_path(&mut cfg.paths.image_dir, a.image_dir);
    finalize(&mut cfg, seed)?;
    let spatial = io::read_feature_store(cfg.require(&cfg.paths.spatial, "spatial")?)?;
    let model = match a.method {
        CamMethod::GradCam => Some(io::read_checkpoint(cfg.require(&cfg.paths.checkpoint, "checkpoint")?)?),
        CamMethod::EigenCam => None,
    };
    let ids = match a.ids {
        Some(ids) => ids,
        None => {
            let m = io::read_manifest(cfg.require(&cfg.paths.manifest, "manifest (or --ids)")?)?;
            m.indices_in(Split::Test)
                .into_iter()
                .map(|i| m.entries()[i].sample_id.clone())
                .collect()
        }
    };
    let method = match a.method {
        CamMethod::GradCam => "gradcam",
        CamMethod::EigenCam => "eigencam",
    };
    let dir = out(&cfg, "heatmaps");
    let mut summary = Vec::with_capacity(ids.len());
    for id in &ids {
        let row = spatial
            .row_of(id)
            .ok_or_else(|| AppError::Data(format!("sample '{id}' not in the spatial store")))?;
        let map = spatial.tensor(row);
        let (heatmap, class) = match &model {
            Some(m) => {
                let class = match a.class {
                    Some(k) => k,
                    None => {
                        let logits = ClassScore::logits(m, &explain::global_average(&map)?)?;
                        argmax(&logits)
                    }
                };
                (explain::grad_cam(m, &map, Some(class))?, Some(class))
            }
            None => (explain::eigen_cam(&map)?, None),
        };
        let heatmap = heatmap.with_sample_id(id.as_str());
        let base: Option<RawImage> = match cfg.paths.image_dir.as_deref().and_then(|d| io::find_image(d, id)) {
            Some(p) => Some(io::read_image(&p)?),
            None => None,
        };
        let pgm = dir.join(format!("{id}.{method}.pgm"));
        io::write_image(&pgm, &explain::render_gray(&heatmap, base.as_ref())?)?;
        let montage = match &base {
            Some(b) => {
                let p = dir.join(format!("{id}.{method}.montage.ppm"));
                io::write_image(&p, &explain::render_montage(&heatmap, b)?)?;
                Some(p)
            }
            None => None,
        };
        if heatmap.degenerate {
            log::warn!("{id}: degenerate heatmap");
        }
        summary.push(json!({
            "sample_id": id,
            "method": method,
            "class": class,
            "degenerate": heatmap.degenerate,
            "pgm": pgm,
            "montage": montage,
        }));
    }
    let value = serde_json::Value::Array(summary);
    io::write_json(&out(&cfg, "heatmaps.json"), &value)?;
    print_json(&value);
    Ok(())
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Per-layer parameter report of `model`.
pub fn params_report(model: &SageModel) -> serde_json::Value {
    let layers: Vec<_> = model
        .params()
        .iter()
        .map(|p| {
            json!({
                "name": p.name,
                "weight": p.weight.shape(),
                "bias": p.bias.as_ref().map(|b| b.len()),
                "count": p.parameter_count(),
            })
        })
        .collect();
    json!({
        "arch": model.arch().as_str(),
        "input_dim": model.input_dim(),
        "classes": model.class_table().len(),
        "total": model.count_parameters(),
        "layers": layers,
    })
}

fn params(mut cfg: PipelineConfig, a: ParamsArgs, seed: Option<u64>) -> Result<()> {
    set_path(&mut cfg.paths.checkpoint, a.checkpoint);
    a.model.apply(&mut cfg);
    finalize(&mut cfg, seed)?;
    let model = match &cfg.paths.checkpoint {
        Some(p) => io::read_checkpoint(p)?,
        None => {
            let d = a
                .input_dim
                .ok_or_else(|| AppError::Usage("params needs --checkpoint or --input-dim and --classes".into()))?;
            let k = a
                .classes
                .ok_or_else(|| AppError::Usage("params needs --checkpoint or --input-dim and --classes".into()))?;
            let classes = (0..k).map(dataset::class_label).collect();
            SageModel::build(cfg.model.clone(), d, classes)?
        }
    };
    let value = params_report(&model);
    io::write_json(&out(&cfg, "params.json"), &value)?;
    print_json(&value);
    Ok(())
}

fn serve(mut cfg: PipelineConfig, a: ServeArgs, seed: Option<u64>) -> Result<()> {
    set_path(&mut cfg.paths.checkpoint, a.checkpoint);
    set_path(&mut cfg.paths.graph, a.graph);
    set(&mut cfg.service.host, a.host);
    set(&mut cfg.service.port, a.port);
    finalize(&mut cfg, seed)?;
    let model = io::read_checkpoint(cfg.require(&cfg.paths.checkpoint, "checkpoint")?)?;
    if let Some(p) = &cfg.paths.graph {
        check_graph_cache(&model, p)?;
    }
    let addr: SocketAddr = format!("{}:{}", cfg.service.host, cfg.service.port)
        .parse()
        .map_err(|e| AppError::Usage(format!("bad listen address: {e}")))?;
    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| AppError::Runtime(e.to_string()))?;
    rt.block_on(service::serve(model, addr))
}

/// The cached graph must be the one the checkpoint's training rows induce.
pub fn check_graph_cache(model: &SageModel, path: &Path) -> Result<()> {
    let cached = io::read_graph(path)?;
    let tg = model
        .train_graph()
        .ok_or_else(|| AppError::Data(format!("{} model has no training graph", model.arch())))?;
    if cached.offsets() != tg.graph.offsets() || cached.csr_neighbors() != tg.graph.csr_neighbors() {
        return Err(AppError::Data(format!(
            "{}: graph cache does not match the checkpoint's training rows",
            path.display()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn command_line_parses() {
        let cli = Cli::try_parse_from([
            "leafgraph",
            "train",
            "--features",
            "f.lgfs",
            "--hidden",
            "32,16",
            "--theta=-1",
            "--seed",
            "3",
        ])
        .unwrap();
        assert_eq!(cli.seed, Some(3));
        let Command::Train(a) = cli.command else { panic!() };
        let mut cfg = PipelineConfig::default();
        a.model.apply(&mut cfg);
        assert_eq!(cfg.model.hidden_dims, vec![32, 16]);
        assert_eq!(cfg.model.layers, 2);
        assert_eq!(cfg.model.fan_outs.len(), 2);
        assert_eq!(cfg.model.theta, -1.0);
    }

    #[test]
    fn bad_arch_is_a_parse_error() {
        assert!(Cli::try_parse_from(["leafgraph", "train", "--arch", "gat"]).is_err());
        assert!(Cli::try_parse_from(["leafgraph", "frobnicate"]).is_err());
    }

    #[test]
    fn grid_parser() {
        assert_eq!(parse_grid("7x5"), Ok((7, 5)));
        assert!(parse_grid("7").is_err());
    }
}
