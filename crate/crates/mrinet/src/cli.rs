//! Command-line surface: dataset scanning/splitting, training, evaluation,
//! prediction, model inspection, and augmentation preview.
//!
//! Exit codes are a stable contract: 0 success, 1 validation error,
//! 2 runtime/data error. Every artifact is written atomically, so a failed
//! command never leaves a partially written file behind.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::Serialize;

use crate::arch::{model_summary, ModelKind};
use crate::data::index::atomic_write;
use crate::data::{
    augment_sample, class_name, decode_image, save_png, scan_dataset, stratified_split,
    AugmentParams, DatasetIndex, NUM_CLASSES,
};
use crate::error::{Error, Result};
use crate::graph::NetworkGraph;
use crate::training::{
    evaluate, fmt_sig6, load_checkpoint, predict, train_model, TrainConfig,
};

#[derive(Parser, Debug)]
#[command(name = "mrinet", version, about = "CNN engine and training pipeline for 5-class brain-MRI classification")]
pub struct Cli {
    /// Force strictly single-threaded kernels. The engine always runs
    /// single-threaded, so this only marks reports; it exists as a stable
    /// interface for determinism-sensitive runs.
    #[arg(long, global = true)]
    pub strict_deterministic: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Scan a dataset root and write stratified train/val manifests
    Split {
        /// Dataset root with the five class subdirectories
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 0.8)]
        train_frac: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output directory for train.tsv and val.tsv
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model from a JSON run configuration
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the seed in the configuration file
        #[arg(long)]
        seed: Option<u64>,
        /// Resume from a checkpoint written by an earlier run
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Evaluate a checkpoint against a manifest
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        /// Dataset root the manifest paths are relative to; defaults to the
        /// manifest's parent directory
        #[arg(long)]
        data: Option<PathBuf>,
        /// Report path; defaults to eval_report.json next to the checkpoint
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the layer table and audit counts for a model
    Inspect {
        /// resnet50, mobilenetv2, or tinycnn
        #[arg(long)]
        model: String,
    },
    /// Classify one image with a trained checkpoint
    Predict {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        image: PathBuf,
    },
    /// Write augmented copies of dataset images plus the exact draws applied
    AugmentPreview {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 8)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 15.0)]
        rotation_max_deg: f64,
        #[arg(long, default_value_t = 0.10)]
        shift_max_frac: f64,
        #[arg(long, default_value_t = 0.10)]
        zoom_max_frac: f64,
        #[arg(long, default_value_t = 0.5)]
        hflip_prob: f64,
    },
}

/// Exit-code classification. Validation problems (bad flags, bad config,
/// impossible model construction) exit 1; data and runtime failures exit 2.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config { .. } | Error::Construction { .. } => 1,
        _ => 2,
    }
}

/// Run a parsed command, mapping errors to the exit-code contract.
pub fn run(cli: Cli) -> i32 {
    match dispatch(cli) {
        Ok(()) => 0,
        Err(err) => {
            eprintln!("error: {err}");
            exit_code(&err)
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Split { data, train_frac, seed, out } => cmd_split(&data, train_frac, seed, &out),
        Command::Train { config, seed, resume } => cmd_train(&config, seed, resume.as_deref()),
        Command::Eval { ckpt, manifest, data, out } => {
            cmd_eval(&ckpt, &manifest, data.as_deref(), out.as_deref())
        }
        Command::Inspect { model } => cmd_inspect(&model),
        Command::Predict { ckpt, image } => cmd_predict(&ckpt, &image),
        Command::AugmentPreview {
            data,
            n,
            seed,
            out,
            rotation_max_deg,
            shift_max_frac,
            zoom_max_frac,
            hflip_prob,
        } => {
            let params = AugmentParams {
                rotation_max_deg,
                shift_max_frac,
                zoom_max_frac,
                hflip_prob,
            };
            cmd_augment_preview(&data, n, seed, &out, &params)
        }
    }
}

// ---------------------------------------------------------------------------
// split
// ---------------------------------------------------------------------------

fn cmd_split(data: &Path, train_frac: f64, seed: u64, out: &Path) -> Result<()> {
    let (index, report) = scan_dataset(data)?;
    for warning in &report.skipped {
        eprintln!("warning: skipped {warning}");
    }
    let (train, val) = stratified_split(&index, train_frac, seed)?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(format!("creating {}", out.display()), e))?;
    train.write_manifest(&out.join("train.tsv"))?;
    val.write_manifest(&out.join("val.tsv"))?;

    println!("scanned {} images under {}", index.len(), data.display());
    println!("{:<12} {:>8} {:>8} {:>8}", "class", "total", "train", "val");
    let (tc, vc) = (train.per_class_counts(), val.per_class_counts());
    for (id, name) in crate::data::CLASS_NAMES.iter().enumerate() {
        println!("{:<12} {:>8} {:>8} {:>8}", name, tc[id] + vc[id], tc[id], vc[id]);
    }
    println!("{:<12} {:>8} {:>8} {:>8}", "total", index.len(), train.len(), val.len());
    println!("wrote {} and {}", out.join("train.tsv").display(), out.join("val.tsv").display());
    Ok(())
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

/// The JSON run configuration: every `TrainConfig` field (flat, unknown keys
/// rejected) plus the dataset/workspace paths.
#[derive(Debug, Clone)]
pub struct RunConfigFile {
    pub train: TrainConfig,
    pub data_root: PathBuf,
    pub train_manifest: PathBuf,
    pub val_manifest: PathBuf,
    pub out_dir: PathBuf,
}

impl RunConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        let mut value: serde_json::Value = serde_json::from_str(text)
            .map_err(|e| Error::Config { what: format!("config is not valid JSON: {e}") })?;
        let obj = value
            .as_object_mut()
            .ok_or_else(|| Error::Config { what: "config must be a JSON object".into() })?;
        let mut take_path = |key: &str| -> Result<PathBuf> {
            match obj.remove(key) {
                Some(serde_json::Value::String(s)) => Ok(PathBuf::from(s)),
                Some(_) => Err(Error::Config { what: format!("{key} must be a string path") }),
                None => Err(Error::Config { what: format!("missing required key {key}") }),
            }
        };
        let data_root = take_path("data_root")?;
        let train_manifest = take_path("train_manifest")?;
        let val_manifest = take_path("val_manifest")?;
        let out_dir = take_path("out_dir")?;
        let train: TrainConfig = serde_json::from_value(value)
            .map_err(|e| Error::Config { what: format!("bad training configuration: {e}") })?;
        Ok(RunConfigFile { train, data_root, train_manifest, val_manifest, out_dir })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(format!("reading config {}", path.display()), e))?;
        Self::parse(&text)
    }

    /// JSON echo with defaults filled, written next to the run outputs.
    pub fn echo_json(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Echo<'a> {
            #[serde(flatten)]
            train: &'a TrainConfig,
            data_root: &'a Path,
            train_manifest: &'a Path,
            val_manifest: &'a Path,
            out_dir: &'a Path,
        }
        let effective = self.train.effective();
        serde_json::to_string_pretty(&Echo {
            train: &effective,
            data_root: &self.data_root,
            train_manifest: &self.train_manifest,
            val_manifest: &self.val_manifest,
            out_dir: &self.out_dir,
        })
        .map_err(|e| Error::Config { what: format!("config echo: {e}") })
    }
}

fn cmd_train(config_path: &Path, seed_override: Option<u64>, resume: Option<&Path>) -> Result<()> {
    let mut run_config = RunConfigFile::load(config_path)?;
    if let Some(seed) = seed_override {
        run_config.train.seed = seed;
    }
    run_config.train.validate()?;

    let train_index =
        DatasetIndex::load_manifest(&run_config.data_root, &run_config.train_manifest)?;
    let val_index = DatasetIndex::load_manifest(&run_config.data_root, &run_config.val_manifest)?;

    std::fs::create_dir_all(&run_config.out_dir)
        .map_err(|e| Error::io(format!("creating {}", run_config.out_dir.display()), e))?;
    atomic_write(&run_config.out_dir.join("config_echo.json"), run_config.echo_json()?.as_bytes())?;

    let output = train_model(
        &run_config.train,
        &train_index,
        &val_index,
        Some(&run_config.out_dir),
        resume,
    )?;
    output.history.write_csv(&run_config.out_dir.join("history.csv"))?;

    for row in &output.history.rows {
        println!(
            "epoch {:>3}: train_loss {} train_acc {} val_loss {} val_acc {} ({:.1}s)",
            row.epoch,
            fmt_sig6(row.train_loss),
            fmt_sig6(row.train_acc),
            fmt_sig6(row.val_loss),
            fmt_sig6(row.val_acc),
            row.seconds
        );
    }
    if let Some(path) = &output.final_checkpoint {
        println!("final checkpoint: {}", path.display());
    }
    println!("history: {}", run_config.out_dir.join("history.csv").display());
    Ok(())
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

fn graph_from_checkpoint(ckpt_path: &Path) -> Result<(NetworkGraph, TrainConfig)> {
    let ckpt = load_checkpoint(ckpt_path)?;
    let config: TrainConfig = serde_json::from_value(ckpt.config.clone()).map_err(|e| {
        Error::Checkpoint { what: format!("checkpoint carries no usable config echo: {e}") }
    })?;
    let (h, w) = config.input_size;
    let kind = ModelKind::from_id(&ckpt.model_id)?;
    let mut graph = kind.build((h, w, 3), NUM_CLASSES)?;
    graph.init_params(config.seed);
    ckpt.install(&mut graph)?;
    Ok((graph, config))
}

#[derive(Serialize)]
struct EvalReport<'a> {
    accuracy: f64,
    checkpoint: &'a str,
    confusion: [[usize; NUM_CLASSES]; NUM_CLASSES],
    loss: f64,
    manifest: &'a str,
    model_id: &'a str,
    samples: usize,
}

fn cmd_eval(
    ckpt_path: &Path,
    manifest: &Path,
    data: Option<&Path>,
    out: Option<&Path>,
) -> Result<()> {
    let (graph, config) = graph_from_checkpoint(ckpt_path)?;
    let root = match data {
        Some(d) => d.to_path_buf(),
        None => manifest.parent().unwrap_or_else(|| Path::new(".")).to_path_buf(),
    };
    let index = DatasetIndex::load_manifest(&root, manifest)?;
    if index.is_empty() {
        return Err(Error::EmptyIndex { what: "evaluation" });
    }
    let eval = evaluate(&graph, &index, &config)?;

    println!("samples:  {}", index.len());
    println!("loss:     {}", fmt_sig6(eval.loss));
    println!("accuracy: {}", fmt_sig6(eval.accuracy));
    println!("confusion matrix (rows = true class):");
    print!("{:<12}", "");
    for name in crate::data::CLASS_NAMES {
        print!("{name:>10}");
    }
    println!();
    for (i, row) in eval.confusion.iter().enumerate() {
        print!("{:<12}", class_name(i).unwrap_or("?"));
        for v in row {
            print!("{v:>10}");
        }
        println!();
    }

    let report = EvalReport {
        accuracy: eval.accuracy,
        checkpoint: &ckpt_path.to_string_lossy(),
        confusion: eval.confusion,
        loss: eval.loss,
        manifest: &manifest.to_string_lossy(),
        model_id: graph.model_id(),
        samples: index.len(),
    };
    let report_path = match out {
        Some(p) => p.to_path_buf(),
        None => ckpt_path.parent().unwrap_or_else(|| Path::new(".")).join("eval_report.json"),
    };
    let body = serde_json::to_string_pretty(&report)
        .map_err(|e| Error::Config { what: format!("report serialization: {e}") })?;
    atomic_write(&report_path, body.as_bytes())?;
    println!("report: {}", report_path.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// inspect
// ---------------------------------------------------------------------------

fn cmd_inspect(model: &str) -> Result<()> {
    let kind = ModelKind::from_id(model)?;
    let graph = kind.build((50, 50, 3), NUM_CLASSES)?;
    let summary = model_summary(&graph)?;

    println!("model: {}", summary.model_id);
    println!("{:<24} {:<26} {:<18} {:>12}", "layer", "kind", "output shape", "params");
    for row in &summary.rows {
        let shape = format!("{:?}", row.output_shape);
        println!("{:<24} {:<26} {:<18} {:>12}", row.name, row.kind, shape, row.params);
    }
    println!();
    println!("stages: {}", summary.stage_names.join(", "));
    println!("conv layers (all kernels):  {}", summary.conv_layers);
    println!("conv layers (main path):    {}", summary.main_path_conv_layers);
    println!("dense layers:               {}", summary.dense_layers);
    println!("bottleneck blocks:          {}", summary.bottleneck_blocks);
    println!("feature width:              {}", summary.feature_width);
    println!("parameters (total):         {}", summary.parameter_count);
    println!("parameters (trainable):     {}", summary.trainable_parameter_count);
    println!("parameters (backbone):      {}", summary.backbone_parameter_count);
    println!("parameters (head):          {}", summary.head_parameter_count);
    println!("multiply-adds per image:    {}", summary.multiply_adds);
    for note in &summary.notes {
        println!("note: {note}");
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// predict
// ---------------------------------------------------------------------------

fn cmd_predict(ckpt_path: &Path, image: &Path) -> Result<()> {
    let (graph, config) = graph_from_checkpoint(ckpt_path)?;
    let ranked = predict(&graph, image, &config)?;
    for (name, prob) in ranked {
        println!("{name} {prob:.6}");
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// augment preview
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct PreviewEntry {
    angle_deg: f64,
    flip: bool,
    index: usize,
    output: String,
    shift_x_frac: f64,
    shift_y_frac: f64,
    source: String,
    zoom: f64,
}

fn cmd_augment_preview(
    data: &Path,
    n: usize,
    seed: u64,
    out: &Path,
    params: &AugmentParams,
) -> Result<()> {
    params.validate()?;
    let (index, report) = scan_dataset(data)?;
    for warning in &report.skipped {
        eprintln!("warning: skipped {warning}");
    }
    if index.is_empty() {
        return Err(Error::EmptyIndex { what: "augmentation preview" });
    }
    std::fs::create_dir_all(out).map_err(|e| Error::io(format!("creating {}", out.display()), e))?;

    let mut log = Vec::new();
    for (i, record) in index.records().iter().take(n).enumerate() {
        let image = decode_image(&index.abs_path(record))?;
        let draw = params.draw(AugmentParams::stream_seed(seed, 0, i as u64));
        let augmented = augment_sample(&image, &draw);
        let file_name = format!(
            "{i:03}_{}_{}.png",
            class_name(record.class_id).unwrap_or("?"),
            Path::new(&record.rel_path).file_stem().unwrap_or_default().to_string_lossy()
        );
        let out_path = out.join(&file_name);
        save_png(&augmented, &out_path)?;
        log.push(PreviewEntry {
            angle_deg: draw.angle_deg,
            flip: draw.flip,
            index: i,
            output: file_name,
            shift_x_frac: draw.shift_x_frac,
            shift_y_frac: draw.shift_y_frac,
            source: record.rel_path.clone(),
            zoom: draw.zoom,
        });
    }
    let body = serde_json::to_string_pretty(&log)
        .map_err(|e| Error::Config { what: format!("log serialization: {e}") })?;
    atomic_write(&out.join("augment_log.json"), body.as_bytes())?;
    println!("wrote {} previews and augment_log.json to {}", log.len(), out.display());
    Ok(())
}
