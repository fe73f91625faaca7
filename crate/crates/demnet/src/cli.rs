//! Command-line frontend: prepare, augment, train, evaluate, predict,
//! inspect.
//!
//! Exit codes: 0 success, 1 I/O or file-format failure, 2 configuration or
//! validation failure, 3 numeric failure during training. Every command is
//! deterministic given `--seed`, and nothing overwrites existing outputs
//! unless `--force` is passed. `--threads N` caps internal parallelism;
//! any N produces bitwise-identical outputs.

use crate::augment::{augment_dataset, AugmentPlan, Transform};
use crate::dataset::{
    codec, load_directory, resize, split, split_manifest_csv, to_batches, ImageSample,
    SplitDataset, CLASS_NAMES, NUM_CLASSES,
};
use crate::error::{Error, Result};
use crate::model::{
    build_model, count_parameters, evaluate, export_metrics, load_checkpoint, predict_probs,
    save_checkpoint, train, ModelConfig, TrainState,
};
use clap::{Args, Parser, Subcommand};
use std::path::{Path, PathBuf};

#[derive(Debug, Parser)]
#[command(
    name = "demnet",
    version,
    about = "Train and run a small CNN that stages dementia from brain MRI slices"
)]
struct Cli {
    /// Cap internal parallelism at N worker threads (default: all cores).
    /// Results are identical for every N.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate the bundled synthetic 4-class dataset as PGM files.
    Prepare(PrepareArgs),
    /// Expand a dataset with label-preserving transforms.
    Augment(AugmentArgs),
    /// Train on a class-directory dataset and write metrics + checkpoints.
    Train(TrainArgs),
    /// Evaluate a checkpoint on one split of a dataset.
    Evaluate(EvaluateArgs),
    /// Classify individual image files with a checkpoint.
    Predict(PredictArgs),
    /// Print the architecture and parameter counts of a config or checkpoint.
    Inspect(InspectArgs),
}

#[derive(Debug, Args)]
struct PrepareArgs {
    /// Directory to create the class subdirectories in.
    #[arg(long)]
    out: PathBuf,
    /// Images per class.
    #[arg(long, default_value_t = 50)]
    per_class: usize,
    /// Image height in pixels.
    #[arg(long, default_value_t = crate::synth::SYNTH_HEIGHT)]
    height: usize,
    /// Image width in pixels.
    #[arg(long, default_value_t = crate::synth::SYNTH_WIDTH)]
    width: usize,
    /// Master seed for the generated pixels.
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Overwrite existing outputs.
    #[arg(long)]
    force: bool,
}

#[derive(Debug, Args)]
struct AugmentArgs {
    /// Dataset root with the four class directories.
    #[arg(long)]
    data: PathBuf,
    /// Output directory for originals plus augmented copies.
    #[arg(long)]
    out: PathBuf,
    /// Comma-separated transforms (rotate_ccw, rotate_cw, hflip, vflip,
    /// blur, noise) or "all".
    #[arg(long, default_value = "all")]
    transforms: String,
    /// Master seed for the stochastic transforms.
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Overwrite existing outputs.
    #[arg(long)]
    force: bool,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Dataset root with the four class directories.
    #[arg(long)]
    data: PathBuf,
    /// Model/training config JSON; defaults to the built-in architecture.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for metrics.csv, split_manifest.csv, best.ckpt,
    /// last.ckpt.
    #[arg(long)]
    out: PathBuf,
    /// Override the config's epoch count.
    #[arg(long)]
    epochs: Option<usize>,
    /// Override the config's master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the config's batch size.
    #[arg(long)]
    batch_size: Option<usize>,
    /// Override the config's learning rate.
    #[arg(long)]
    learning_rate: Option<f64>,
    /// Overwrite existing outputs.
    #[arg(long)]
    force: bool,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    /// Checkpoint to evaluate.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Dataset root with the four class directories.
    #[arg(long)]
    data: PathBuf,
    /// Which split to score, using the checkpoint's seed: train,
    /// validation, test, or all.
    #[arg(long, default_value = "test")]
    split: String,
    /// Batch size for the forward passes.
    #[arg(long, default_value_t = 32)]
    batch_size: usize,
}

#[derive(Debug, Args)]
struct PredictArgs {
    /// Checkpoint to predict with.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Image files (.pgm or .png) to classify.
    #[arg(required = true)]
    images: Vec<PathBuf>,
}

#[derive(Debug, Args)]
struct InspectArgs {
    /// Config JSON to inspect; defaults to the built-in architecture.
    #[arg(long, conflicts_with = "checkpoint")]
    config: Option<PathBuf>,
    /// Checkpoint whose embedded config to inspect.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
}

fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Io { .. } | Error::Format(_) => 1,
        Error::Numeric(_) => 3,
        _ => 2,
    }
}

/// Parses arguments, runs the selected command inside an optional
/// fixed-size thread pool, and returns the process exit code.
pub fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.threads {
        Some(0) => Err(Error::Config("--threads must be >= 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))
            .and_then(|pool| pool.install(|| dispatch(cli.command))),
        None => dispatch(cli.command),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Prepare(args) => cmd_prepare(args),
        Command::Augment(args) => cmd_augment(args),
        Command::Train(args) => cmd_train(args),
        Command::Evaluate(args) => cmd_evaluate(args),
        Command::Predict(args) => cmd_predict(args),
        Command::Inspect(args) => cmd_inspect(args),
    }
}

/// Refuses to write into `paths` that already exist, unless forced.
fn guard_overwrite(paths: &[PathBuf], force: bool) -> Result<()> {
    if force {
        return Ok(());
    }
    for path in paths {
        if path.exists() {
            return Err(Error::Config(format!(
                "{} already exists; pass --force to overwrite",
                path.display()
            )));
        }
    }
    Ok(())
}

/// Refuses to write into a non-empty directory, unless forced.
fn guard_dir(dir: &Path, force: bool) -> Result<()> {
    if force || !dir.exists() {
        return Ok(());
    }
    let mut entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    if entries.next().is_some() {
        return Err(Error::Config(format!(
            "{} is not empty; pass --force to overwrite",
            dir.display()
        )));
    }
    Ok(())
}

fn cmd_prepare(args: PrepareArgs) -> Result<()> {
    guard_dir(&args.out, args.force)?;
    let count = crate::synth::write_synthetic_dataset(
        &args.out,
        args.per_class,
        args.height,
        args.width,
        args.seed,
    )?;
    println!("generated {count} images under {}", args.out.display());
    Ok(())
}

fn parse_transforms(list: &str) -> Result<Vec<Transform>> {
    if list.trim() == "all" {
        return Ok(Transform::ALL.to_vec());
    }
    list.split(',').map(|t| Transform::parse(t.trim())).collect()
}

fn cmd_augment(args: AugmentArgs) -> Result<()> {
    guard_dir(&args.out, args.force)?;
    let transforms = parse_transforms(&args.transforms)?;
    let plan = AugmentPlan::new(&transforms, args.seed)?;
    let report = load_directory(&args.data)?;
    for (path, reason) in &report.skipped {
        eprintln!("warning: skipped {path}: {reason}");
    }
    if report.samples.is_empty() {
        return Err(Error::Config(format!("no images under {}", args.data.display())));
    }
    let expanded = augment_dataset(&report.samples, &plan)?;

    let mut manifest = String::from("path,label,source\n");
    let mut per_class = [0usize; NUM_CLASSES];
    for sample in &expanded {
        let class = CLASS_NAMES[sample.label];
        let dir = args.out.join(class);
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let file = dir.join(format!("aug_{:05}.pgm", per_class[sample.label]));
        per_class[sample.label] += 1;
        codec::write_pgm(&file, &sample.image)?;
        manifest.push_str(&format!(
            "{},{},{}\n",
            file.display(),
            sample.label,
            sample.manifest_path()
        ));
    }
    let manifest_path = args.out.join("manifest.csv");
    std::fs::write(&manifest_path, manifest).map_err(|e| Error::io(&manifest_path, e))?;
    println!("in={} out={}", report.samples.len(), expanded.len());
    Ok(())
}

/// Loads the config file if given, else the built-in default, then applies
/// flag overrides. Unknown config keys are rejected.
fn resolve_config(args: &TrainArgs) -> Result<ModelConfig> {
    let mut config = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            serde_json::from_str::<ModelConfig>(&text)
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
        }
        None => ModelConfig::default(),
    };
    if let Some(epochs) = args.epochs {
        config.epochs = epochs;
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(batch_size) = args.batch_size {
        config.batch_size = batch_size;
    }
    if let Some(lr) = args.learning_rate {
        config.learning_rate = lr;
    }
    config.validate()?;
    Ok(config)
}

/// Loads a dataset and resizes every image to the model's input extents.
fn load_resized(data: &Path, height: usize, width: usize) -> Result<Vec<ImageSample>> {
    let report = load_directory(data)?;
    for (path, reason) in &report.skipped {
        eprintln!("warning: skipped {path}: {reason}");
    }
    report
        .samples
        .into_iter()
        .map(|mut s| {
            s.image = resize(&s.image, height, width)?;
            Ok(s)
        })
        .collect()
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let config = resolve_config(&args)?;
    let out = &args.out;
    let metrics_path = out.join("metrics.csv");
    let manifest_path = out.join("split_manifest.csv");
    let best_path = out.join("best.ckpt");
    let last_path = out.join("last.ckpt");
    guard_overwrite(
        &[metrics_path.clone(), manifest_path.clone(), best_path.clone(), last_path.clone()],
        args.force,
    )?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;

    let samples = load_resized(&args.data, config.input_height, config.input_width)?;
    let splits = split(&samples, config.seed)?;
    std::fs::write(&manifest_path, split_manifest_csv(&splits))
        .map_err(|e| Error::io(&manifest_path, e))?;

    let mut state = build_model(&config)?;
    let metrics = train(
        &mut state,
        &splits.train,
        &splits.validation,
        config.epochs,
        config.batch_size,
    )?;
    for m in &metrics {
        println!(
            "epoch {}/{} train_loss={:.6} train_acc={:.6} val_loss={:.6} val_acc={:.6}",
            m.epoch, config.epochs, m.train_loss, m.train_acc, m.val_loss, m.val_acc
        );
    }
    export_metrics(&metrics, &metrics_path)?;

    let best_state = match &state.best {
        Some(best) => TrainState {
            config: state.config.clone(),
            network: best.network.clone(),
            adam: best.adam.clone(),
            epoch: best.epoch,
            seed: state.seed,
            best: None,
        },
        None => state.clone(),
    };
    save_checkpoint(&best_path, &best_state)?;
    save_checkpoint(&last_path, &state)?;

    let train_report = evaluate(&mut state.network, &splits.train, config.batch_size)?;
    let val_report = evaluate(&mut state.network, &splits.validation, config.batch_size)?;
    println!(
        "final train_accuracy={:.6} val_accuracy={:.6}",
        train_report.accuracy, val_report.accuracy
    );
    println!(
        "wrote {} {} {} {}",
        metrics_path.display(),
        manifest_path.display(),
        best_path.display(),
        last_path.display()
    );
    Ok(())
}

fn select_split<'a>(splits: &'a SplitDataset, which: &str) -> Result<Vec<&'a ImageSample>> {
    let part: Vec<&ImageSample> = match which {
        "train" => splits.train.iter().collect(),
        "validation" => splits.validation.iter().collect(),
        "test" => splits.test.iter().collect(),
        "all" => splits.train.iter().chain(&splits.validation).chain(&splits.test).collect(),
        other => {
            return Err(Error::Config(format!(
                "unknown split {other:?}; expected train, validation, test, or all"
            )))
        }
    };
    Ok(part)
}

fn cmd_evaluate(args: EvaluateArgs) -> Result<()> {
    let mut state = load_checkpoint(&args.checkpoint)?;
    let samples =
        load_resized(&args.data, state.config.input_height, state.config.input_width)?;
    let splits = split(&samples, state.seed)?;
    let subset: Vec<ImageSample> =
        select_split(&splits, &args.split)?.into_iter().cloned().collect();
    let report = evaluate(&mut state.network, &subset, args.batch_size)?;
    println!("split={} samples={}", args.split, subset.len());
    println!("loss={:.6} accuracy={:.6}", report.loss, report.accuracy);
    println!("confusion rows=true cols=predicted [{}]", CLASS_NAMES.join(","));
    for (class, row) in CLASS_NAMES.iter().zip(&report.confusion) {
        let cells: Vec<String> = row.iter().map(|c| c.to_string()).collect();
        println!("{class},{}", cells.join(","));
    }
    Ok(())
}

fn cmd_predict(args: PredictArgs) -> Result<()> {
    let mut state = load_checkpoint(&args.checkpoint)?;
    let (h, w) = (state.config.input_height, state.config.input_width);
    let mut resized = Vec::with_capacity(args.images.len());
    for path in &args.images {
        let image = codec::read_image(path)?;
        resized.push(ImageSample {
            image: resize(&image, h, w)?,
            label: 0,
            provenance: crate::dataset::Provenance::Original,
            source_path: path.to_string_lossy().into_owned(),
        });
    }
    let batches = to_batches(&resized, resized.len(), None)?;
    let probs = predict_probs(&mut state.network, &batches[0].images)?;
    let classes = probs.argmax(1)?;
    for (i, path) in args.images.iter().enumerate() {
        let p: Vec<String> =
            (0..NUM_CLASSES).map(|k| format!("{:.6}", probs.at(&[i, k]))).collect();
        println!("{} {} {}", path.display(), CLASS_NAMES[classes[i]], p.join(" "));
    }
    Ok(())
}

fn cmd_inspect(args: InspectArgs) -> Result<()> {
    let config = if let Some(ckpt) = &args.checkpoint {
        load_checkpoint(ckpt)?.config
    } else if let Some(path) = &args.config {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str::<ModelConfig>(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
    } else {
        ModelConfig::default()
    };
    config.validate()?;
    let counts = count_parameters(&config)?;
    println!(
        "input 1x{}x{}  blocks {}  dense {:?}",
        config.input_height,
        config.input_width,
        config.blocks.len(),
        config.dense
    );
    let extents = config.block_extents()?;
    let desc: Vec<String> =
        extents.iter().map(|(c, h, w)| format!("{c}x{h}x{w}")).collect();
    println!("block outputs: {}", desc.join(" -> "));
    println!("layer,trainable,non_trainable");
    for (name, trainable, non_trainable) in &counts.per_layer {
        println!("{name},{trainable},{non_trainable}");
    }
    println!(
        "total={} trainable={} non_trainable={}",
        counts.total(),
        counts.trainable,
        counts.non_trainable
    );
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn transform_lists_parse() {
        assert_eq!(parse_transforms("all").unwrap().len(), 6);
        let two = parse_transforms("hflip, blur").unwrap();
        assert_eq!(two, vec![Transform::HFlip, Transform::Blur]);
        let err = parse_transforms("hflip,wobble").unwrap_err();
        assert!(matches!(err, Error::Config(m) if m.contains("wobble")));
    }

    #[test]
    fn exit_codes_map_error_kinds() {
        assert_eq!(exit_code(&Error::Config("x".into())), 2);
        assert_eq!(exit_code(&Error::Parameter("x".into())), 2);
        assert_eq!(exit_code(&Error::Format("x".into())), 1);
        assert_eq!(
            exit_code(&Error::io(Path::new("p"), std::io::Error::other("x"))),
            1
        );
        assert_eq!(exit_code(&Error::Numeric("x".into())), 3);
    }

    #[test]
    fn overwrite_guards() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("a.txt");
        guard_overwrite(std::slice::from_ref(&file), false).unwrap();
        std::fs::write(&file, "x").unwrap();
        assert!(guard_overwrite(std::slice::from_ref(&file), false).is_err());
        guard_overwrite(std::slice::from_ref(&file), true).unwrap();
        guard_dir(dir.path(), false).unwrap_err();
        guard_dir(dir.path(), true).unwrap();
        guard_dir(&dir.path().join("missing"), false).unwrap();
    }
}
