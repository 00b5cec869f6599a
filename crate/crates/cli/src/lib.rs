//! Command implementations for the `lai` binary.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use lai_core::dataset::{self, AnnotationRecord, BoundingBox, LabeledSample, PlantCrop};
use lai_core::eval::{self, TableFormat};
use lai_core::featfile;
use lai_core::features::{self, embed, Extractor, FeatureConfig};
use lai_core::regress::{self, ModelBundle, ModelKind, RegressorParams};
use lai_core::synthetic;

/// Bad invocation or configuration; maps to exit code 1.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// 1 for usage errors, 3 for numerical or model failures, 2 for anything
/// wrong with the data.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    if err.downcast_ref::<UsageError>().is_some() {
        return 1;
    }
    let computational = err
        .chain()
        .filter_map(|e| e.downcast_ref::<lai_core::Error>())
        .any(lai_core::Error::is_computational);
    if computational {
        3
    } else {
        2
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub annotations: Option<PathBuf>,
    pub image_root: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
    /// Precomputed embeddings (EMB1 binary or CSV).
    pub embedding_file: Option<PathBuf>,
    /// ONNX feature-extractor graph, used when no embedding file is given.
    pub model_file: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub test_fraction: f64,
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self { test_fraction: 0.2, seed: 42 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub paths: Paths,
    pub features: FeatureConfig,
    pub regressors: RegressorParams,
    pub split: SplitConfig,
    pub extractors: Vec<Extractor>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            paths: Paths::default(),
            features: FeatureConfig::default(),
            regressors: RegressorParams::default(),
            split: SplitConfig::default(),
            extractors: Extractor::ALL.to_vec(),
        }
    }
}

impl PipelineConfig {
    /// Reads a TOML config; relative paths resolve against its directory.
    pub fn load(file: &Path) -> Result<Self> {
        let text = fs::read_to_string(file)
            .map_err(|e| usage(format!("cannot read config {}: {e}", file.display())))?;
        let mut cfg: PipelineConfig = toml::from_str(&text)
            .map_err(|e| usage(format!("invalid config {}: {e}", file.display())))?;
        let base = file.parent().unwrap_or(Path::new(""));
        let p = &mut cfg.paths;
        for slot in [
            &mut p.annotations,
            &mut p.image_root,
            &mut p.output_dir,
            &mut p.embedding_file,
            &mut p.model_file,
        ] {
            if let Some(path) = slot.as_mut() {
                if path.is_relative() {
                    *path = base.join(&*path);
                }
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.extractors.is_empty() {
            return Err(usage("config lists no extractors"));
        }
        let mut seen = self.extractors.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.extractors.len() {
            return Err(usage("config lists an extractor twice"));
        }
        let f = self.split.test_fraction;
        if !(f > 0.0 && f < 1.0) {
            return Err(usage(format!("split.test_fraction must be in (0, 1), got {f}")));
        }
        self.features.green.validate().map_err(|e| usage(e.to_string()))?;
        Ok(())
    }
}

#[derive(Debug, Parser)]
#[command(name = "lai", version, about = "Leaf area index estimation from plant crops")]
pub struct Cli {
    /// TOML pipeline configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the split and forest seeds.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Annotation CSV (`image,x,y,w,h,lai`).
    #[arg(long)]
    pub annotations: Option<PathBuf>,
    /// Directory that annotation image paths are relative to.
    #[arg(long)]
    pub image_root: Option<PathBuf>,
    /// Precomputed embedding file.
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// ONNX feature-extractor graph.
    #[arg(long)]
    pub onnx: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compute one extractor's features and write `features_<name>.csv`.
    Extract {
        #[arg(long)]
        extractor: Extractor,
        #[command(flatten)]
        data: DataArgs,
        /// Also save every crop as PNG here.
        #[arg(long)]
        crops_dir: Option<PathBuf>,
    },
    /// Fit a regressor on a feature table and save it.
    Train {
        /// Feature table written by `extract`.
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        model: ModelKind,
        /// Defaults to the name in `features_<name>.csv`.
        #[arg(long)]
        extractor: Option<Extractor>,
        /// Model file to write; defaults to `<out>/model_<extractor>_<model>.laim`.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Fit and score every extractor x model cell on a holdout split.
    Evaluate {
        #[command(flatten)]
        data: DataArgs,
        /// Read `features_<name>.csv` from the output directory when present.
        #[arg(long)]
        reuse_features: bool,
    },
    /// Predict the LAI of one box in one image.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        image: PathBuf,
        /// `x,y,w,h` in pixels.
        #[arg(long, value_parser = parse_bbox)]
        bbox: BoundingBox,
        /// ONNX graph for embedding models.
        #[arg(long)]
        onnx: Option<PathBuf>,
    },
    /// Write a seeded synthetic dataset.
    Synth {
        #[arg(long, default_value_t = 200)]
        count: usize,
    },
}

fn parse_bbox(s: &str) -> std::result::Result<BoundingBox, String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != 4 {
        return Err(format!("expected x,y,w,h, got `{s}`"));
    }
    let x = parts[0].parse::<i64>().map_err(|e| format!("x: {e}"))?;
    let y = parts[1].parse::<i64>().map_err(|e| format!("y: {e}"))?;
    let w = parts[2].parse::<u32>().map_err(|e| format!("w: {e}"))?;
    let h = parts[3].parse::<u32>().map_err(|e| format!("h: {e}"))?;
    BoundingBox::new(x, y, w, h).map_err(|e| e.to_string())
}

struct Session {
    cfg: PipelineConfig,
    out: PathBuf,
}

fn setup(cli: &Cli) -> Result<Session> {
    let mut cfg = match &cli.config {
        Some(file) => PipelineConfig::load(file)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.split.seed = seed;
        cfg.regressors.forest.seed = seed;
    }
    cfg.validate()?;
    let out = cli
        .out
        .clone()
        .or_else(|| cfg.paths.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("lai-out"));
    Ok(Session { cfg, out })
}

fn apply_data_args(cfg: &mut PipelineConfig, data: &DataArgs) {
    let p = &mut cfg.paths;
    if data.annotations.is_some() {
        p.annotations = data.annotations.clone();
    }
    if data.image_root.is_some() {
        p.image_root = data.image_root.clone();
    }
    if data.embeddings.is_some() {
        p.embedding_file = data.embeddings.clone();
    }
    if data.onnx.is_some() {
        p.model_file = data.onnx.clone();
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))
}

pub fn run(cli: Cli) -> Result<()> {
    let mut ctx = setup(&cli)?;
    match &cli.command {
        Command::Extract { extractor, data, crops_dir } => {
            apply_data_args(&mut ctx.cfg, data);
            extract(&ctx, *extractor, crops_dir.as_deref())
        }
        Command::Train { features, model, extractor, output } => {
            train(&ctx, features, *model, *extractor, output.as_deref())
        }
        Command::Evaluate { data, reuse_features } => {
            apply_data_args(&mut ctx.cfg, data);
            evaluate(&ctx, *reuse_features)
        }
        Command::Predict { model, image, bbox, onnx } => {
            if onnx.is_some() {
                ctx.cfg.paths.model_file = onnx.clone();
            }
            predict(&ctx, model, image, bbox)
        }
        Command::Synth { count } => {
            create_dir(&ctx.out)?;
            let records = synthetic::write_synthetic_dataset(&ctx.out, *count, ctx.cfg.split.seed)?;
            println!(
                "wrote {} crops to {}",
                records.len(),
                ctx.out.join("annotations.csv").display()
            );
            Ok(())
        }
    }
}

/// Annotation records, plus crops when an image-based extractor needs them.
struct Inputs {
    records: Vec<AnnotationRecord>,
    image_root: PathBuf,
}

fn load_inputs(cfg: &PipelineConfig, needed: &[Extractor]) -> Result<Inputs> {
    let mut missing = Vec::new();
    let p = &cfg.paths;
    if p.annotations.is_none() {
        missing.push("annotations file (paths.annotations or --annotations)".to_string());
    }
    let needs_images = needed.iter().any(|e| *e != Extractor::Embed)
        || (needed.contains(&Extractor::Embed) && p.embedding_file.is_none());
    if needs_images && p.image_root.is_none() {
        missing.push("image directory (paths.image_root or --image-root)".to_string());
    }
    if needed.contains(&Extractor::Embed) && p.embedding_file.is_none() && p.model_file.is_none() {
        missing.push(
            "extractor `embed` needs an embedding file (paths.embedding_file or --embeddings) \
             or an ONNX graph (paths.model_file or --onnx)"
                .to_string(),
        );
    }
    if !missing.is_empty() {
        return Err(usage(format!("missing inputs:\n  - {}", missing.join("\n  - "))));
    }
    let records = dataset::parse_annotations(p.annotations.as_deref().unwrap())?;
    if records.is_empty() {
        bail!(lai_core::Error::InvalidArgument("annotation file has no records".into()));
    }
    Ok(Inputs {
        records,
        image_root: p.image_root.clone().unwrap_or_default(),
    })
}

fn samples_for(
    cfg: &PipelineConfig,
    inputs: &Inputs,
    crops: &mut Option<Vec<PlantCrop>>,
    extractor: Extractor,
) -> Result<Vec<LabeledSample>> {
    if extractor == Extractor::Embed {
        if let Some(file) = &cfg.paths.embedding_file {
            let store = embed::load_embeddings(file)?;
            return Ok(embed::embeddings_to_samples(&store, &inputs.records)?);
        }
    }
    if crops.is_none() {
        *crops = Some(dataset::extract_crops(&inputs.records, &inputs.image_root)?);
    }
    let crops = crops.as_ref().unwrap();
    if extractor == Extractor::Embed {
        let graph = cfg.paths.model_file.as_deref().expect("checked by load_inputs");
        let store = embed::run_embedding_model(crops, graph, &cfg.features.embed)?;
        return Ok(embed::embeddings_to_samples(&store, &inputs.records)?);
    }
    Ok(features::extract_samples(crops, extractor, &cfg.features)?)
}

fn features_path(out: &Path, extractor: Extractor) -> PathBuf {
    out.join(format!("features_{}.csv", extractor.name()))
}

fn extract(ctx: &Session, extractor: Extractor, crops_dir: Option<&Path>) -> Result<()> {
    let inputs = load_inputs(&ctx.cfg, &[extractor])?;
    let mut crops = None;
    if let Some(dir) = crops_dir {
        let all = dataset::extract_crops(&inputs.records, &inputs.image_root)?;
        create_dir(dir)?;
        for c in &all {
            let file = dir.join(format!("{}.png", c.id.replace(['/', '\\'], "_")));
            c.to_image()
                .save(&file)
                .with_context(|| format!("cannot write {}", file.display()))?;
        }
        crops = Some(all);
    }
    let samples = samples_for(&ctx.cfg, &inputs, &mut crops, extractor)?;
    create_dir(&ctx.out)?;
    let path = features_path(&ctx.out, extractor);
    featfile::write_features(&samples, &path)?;
    println!(
        "wrote {} rows x {} features to {}",
        samples.len(),
        samples[0].features.len(),
        path.display()
    );
    Ok(())
}

fn extractor_from_file(path: &Path) -> Option<Extractor> {
    let stem = path.file_stem()?.to_str()?;
    stem.strip_prefix("features_")?.parse().ok()
}

fn train(
    ctx: &Session,
    features: &Path,
    model: ModelKind,
    extractor: Option<Extractor>,
    output: Option<&Path>,
) -> Result<()> {
    let extractor = extractor.or_else(|| extractor_from_file(features)).ok_or_else(|| {
        usage(format!(
            "cannot tell the extractor of {}; pass --extractor",
            features.display()
        ))
    })?;
    let samples = featfile::read_features(features)?;
    if samples.len() < 2 {
        bail!(lai_core::Error::InvalidArgument(format!(
            "{} has {} row(s); training needs at least 2",
            features.display(),
            samples.len()
        )));
    }
    let fitted = regress::fit(model, &samples, &ctx.cfg.regressors)?;
    let truth: Vec<f64> = samples.iter().map(|s| s.lai).collect();
    let pred = samples
        .iter()
        .map(|s| fitted.predict(&s.features))
        .collect::<lai_core::Result<Vec<_>>>()?;
    let m = eval::compute_metrics(&truth, &pred)?;

    let file = match output {
        Some(p) => p.to_path_buf(),
        None => {
            create_dir(&ctx.out)?;
            ctx.out.join(format!("model_{}_{}.laim", extractor.name(), model.name()))
        }
    };
    regress::save_model(&ModelBundle { extractor: Some(extractor), model: fitted }, &file)?;
    println!(
        "trained {} on {} ({} rows): train MSE {:.4}, MAE {:.4}, MAPE {:.1}%",
        model.display_name(),
        extractor.display_name(),
        samples.len(),
        m.mse,
        m.mae,
        m.mape
    );
    println!("saved {}", file.display());
    Ok(())
}

fn evaluate(ctx: &Session, reuse: bool) -> Result<()> {
    let cfg = &ctx.cfg;
    let mut datasets: BTreeMap<Extractor, Vec<LabeledSample>> = BTreeMap::new();
    let mut to_compute = Vec::new();
    for &e in &cfg.extractors {
        let path = features_path(&ctx.out, e);
        if reuse && path.is_file() {
            datasets.insert(e, featfile::read_features(&path)?);
        } else {
            to_compute.push(e);
        }
    }
    if !to_compute.is_empty() {
        let inputs = load_inputs(cfg, &to_compute)?;
        let mut crops = None;
        for e in to_compute {
            let samples = samples_for(cfg, &inputs, &mut crops, e)
                .with_context(|| format!("extractor `{e}`"))?;
            datasets.insert(e, samples);
        }
    }

    let reference = &datasets[&cfg.extractors[0]];
    let split = dataset::split_dataset(reference, cfg.split.test_fraction, cfg.split.seed)?;
    let table = eval::run_matrix(&datasets, &cfg.extractors, &split, &cfg.regressors)?;

    create_dir(&ctx.out)?;
    for (name, format) in [
        ("results.txt", TableFormat::Text),
        ("results.csv", TableFormat::Csv),
        ("results.json", TableFormat::Json),
    ] {
        let path = ctx.out.join(name);
        fs::write(&path, eval::render_table(&table, format))
            .with_context(|| format!("cannot write {}", path.display()))?;
    }
    print!("{}", eval::render_table(&table, TableFormat::Text));
    println!(
        "{} train / {} test crops; results in {}",
        split.train_indices.len(),
        split.test_indices.len(),
        ctx.out.display()
    );
    Ok(())
}

fn predict(ctx: &Session, model: &Path, image: &Path, bbox: &BoundingBox) -> Result<()> {
    let bundle = regress::load_model(model)?;
    let extractor = bundle.extractor.ok_or_else(|| {
        usage(format!("{} does not record its extractor", model.display()))
    })?;
    let img = dataset::load_rgb(image)?;
    let crop = dataset::crop_image(&img, bbox, "query", 0)?;
    let features: Vec<f64> = match extractor {
        Extractor::Embed => {
            let graph = ctx.cfg.paths.model_file.as_deref().ok_or_else(|| {
                usage("an embedding model needs an ONNX graph (--onnx or paths.model_file)")
            })?;
            let mut m = embed::EmbeddingModel::load(graph, ctx.cfg.features.embed.clone())?;
            m.embed(std::slice::from_ref(&crop))?
                .remove(0)
                .into_iter()
                .map(f64::from)
                .collect()
        }
        e => features::crop_features(&crop, e, &ctx.cfg.features)?,
    };
    println!("{}", bundle.model.predict(&features)?);
    Ok(())
}
