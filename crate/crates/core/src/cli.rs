//! Command-line front end: `train`, `eval`, `predict` and `augment-preview`.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::augment::{hflip, rotate, shift, AugmentConfig, AugmentDraw};
use crate::data::{
    convert_channels, crop_from_keypoints, decode_ppm, encode_ppm, load_dataset, normalize, preprocess,
    read_keypoints_json, LoadOptions, ResizeMethod, DEFAULT_MARGIN,
};
use crate::error::{Error, Result};
use crate::model::{build, Architecture, Model, ModelSpec, WeightFile};
use crate::parallel::{stream, StreamKind};
use crate::train::{evaluate, export_curves, split, train_split, TrainConfig};

#[derive(Debug, Parser)]
#[command(name = "miniconvnet", version, about = "Train, evaluate and run small VGG-style image classifiers")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model on a directory-per-class dataset.
    Train(TrainArgs),
    /// Report loss, accuracy and confusion counts on a dataset.
    Eval(EvalArgs),
    /// Classify one PPM image, optionally cropping around hand keypoints.
    Predict(PredictArgs),
    /// Write the flip, shift and rotation outputs for one image.
    #[command(name = "augment-preview")]
    AugmentPreview(PreviewArgs),
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Weights to start from; entries whose name or shape do not match are skipped.
    #[arg(long)]
    pub init: Option<PathBuf>,
    #[arg(long, default_value = "vgg16")]
    pub arch: Architecture,
    /// Per-sample input shape as HxWxC.
    #[arg(long, value_parser = parse_dims)]
    pub input: Option<[usize; 3]>,
    /// First trainable layer, `ALL_FROZEN`, or `none`.
    #[arg(long)]
    pub freeze: Option<String>,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub epochs: Option<u64>,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub batch: Option<u64>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long = "val-split")]
    pub val_split: Option<f64>,
    #[arg(long)]
    pub curves: Option<PathBuf>,
    /// JSON file with training configuration fields; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Architecture of the weights; inferred from the file when omitted.
    #[arg(long)]
    pub arch: Option<Architecture>,
    #[arg(long, value_parser = parse_dims)]
    pub input: Option<[usize; 3]>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub image: PathBuf,
    /// Landmark JSON; when given the image is cropped around the points first.
    #[arg(long)]
    pub keypoints: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_MARGIN)]
    pub margin: f64,
    #[arg(long)]
    pub arch: Option<Architecture>,
    #[arg(long, value_parser = parse_dims)]
    pub input: Option<[usize; 3]>,
}

#[derive(Debug, Args)]
pub struct PreviewArgs {
    #[arg(long)]
    pub image: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: u64,
}

fn parse_dims(s: &str) -> std::result::Result<[usize; 3], String> {
    let parts: Vec<usize> = s
        .split(['x', 'X'])
        .map(|p| p.trim().parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| format!("`{s}` is not HxWxC"))?;
    match parts[..] {
        [h, w, c] if h > 0 && w > 0 && c > 0 => Ok([h, w, c]),
        _ => Err(format!("`{s}` is not HxWxC with positive extents")),
    }
}

/// Parse arguments (including the program name).
pub fn parse_cli<I, T>(args: I) -> std::result::Result<Cli, clap::Error>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    Cli::try_parse_from(args)
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(args) => run_train(args),
        Command::Eval(args) => run_eval(args),
        Command::Predict(args) => run_predict(args),
        Command::AugmentPreview(args) => run_preview(args),
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

/// Merge the optional JSON config with explicit flags. Returns the config
/// and whether a freeze boundary was given anywhere.
pub fn resolve_train_config(args: &TrainArgs) -> Result<TrainConfig> {
    let (mut config, mut freeze_given) = match &args.config {
        Some(path) => {
            let bytes = read_file(path)?;
            let raw: serde_json::Value = serde_json::from_slice(&bytes)
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            let given = raw.get("freeze_boundary").is_some();
            let config = serde_json::from_value(raw)
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            (config, given)
        }
        None => (TrainConfig::default(), false),
    };
    if let Some(f) = &args.freeze {
        config.freeze_boundary = Some(f.clone());
        freeze_given = true;
    }
    if !freeze_given {
        config.freeze_boundary = args.arch.default_freeze_boundary().map(str::to_string);
    }
    if let Some(v) = args.epochs {
        config.epochs = v as usize;
    }
    if let Some(v) = args.batch {
        config.batch_size = v as usize;
    }
    if let Some(v) = args.lr {
        config.lr = v;
    }
    if let Some(v) = args.seed {
        config.seed = v;
    }
    if let Some(v) = args.val_split {
        config.val_split = v;
    }
    config.validate()?;
    Ok(config)
}

fn run_train(args: TrainArgs) -> Result<()> {
    let config = resolve_train_config(&args)?;
    let input = args.input.unwrap_or(args.arch.default_input());
    let options = LoadOptions {
        dims: input,
        resize: ResizeMethod::Bilinear,
    };
    let (dataset, failures) = load_dataset(&args.data, &options)?;
    eprint!("{}", failures.to_text());
    eprintln!(
        "loaded {} samples in {} classes ({} skipped)",
        dataset.len(),
        dataset.class_count(),
        failures.failures.len()
    );

    let mut model = build(args.arch, input, dataset.class_count(), config.seed)?;
    if let Some(init) = &args.init {
        let report = model.apply_weights(&WeightFile::read_path(init)?, false)?;
        eprintln!(
            "initialized {} tensors from {}; skipped {:?}",
            report.loaded.len(),
            init.display(),
            report.skipped
        );
    }
    let (train_set, val_set) = split(&dataset, config.val_split, config.seed)?;
    let outcome = train_split(model, &train_set, &val_set, &config, |r| {
        eprintln!(
            "epoch {:>3}  loss {:.4}  acc {:.4}  val_loss {:.4}  val_acc {:.4}  ({:.1}s)",
            r.epoch, r.train_loss, r.train_acc, r.val_loss, r.val_acc, r.seconds
        );
    })?;
    outcome.model.save_weights_path(&args.out)?;
    if let Some(path) = &args.curves {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        export_curves(&outcome.report, std::io::BufWriter::new(file))?;
    }
    let last = outcome.report.last().expect("at least one epoch");
    println!(
        "trained {} epochs: train_acc {:.4} val_acc {:.4}; weights written to {}",
        last.epoch,
        last.train_acc,
        last.val_acc,
        args.out.display()
    );
    Ok(())
}

/// Rebuild a model for a weight file and load it strictly.
pub fn load_model(path: &Path, arch: Option<Architecture>, input: Option<[usize; 3]>) -> Result<Model> {
    let file = WeightFile::read_path(path)?;
    let inferred = ModelSpec::infer(&file);
    let spec = match (arch, input, inferred) {
        (None, None, inferred) => inferred?,
        (arch, input, Ok(inf)) => ModelSpec {
            arch: arch.unwrap_or(inf.arch),
            input: input.unwrap_or(inf.input),
            class_count: inf.class_count,
        },
        (arch, input, Err(e)) => {
            let class_count = file
                .get("predictions/kernel")
                .and_then(|t| t.dims().get(1).copied())
                .ok_or(e)?;
            let arch = arch.unwrap_or(Architecture::Vgg16);
            ModelSpec {
                arch,
                input: input.unwrap_or(arch.default_input()),
                class_count,
            }
        }
    };
    let mut model = spec.build(0)?;
    model.apply_weights(&file, true)?;
    Ok(model)
}

fn run_eval(args: EvalArgs) -> Result<()> {
    let model = load_model(&args.model, args.arch, args.input)?;
    let options = LoadOptions {
        dims: model.input_dims(),
        resize: ResizeMethod::Bilinear,
    };
    let (dataset, failures) = load_dataset(&args.data, &options)?;
    eprint!("{}", failures.to_text());
    let eval = evaluate(&model, &dataset)?;
    let mut out = std::io::stdout().lock();
    writeln!(out, "samples {}", dataset.len())?;
    writeln!(out, "loss {:.6}", eval.loss)?;
    writeln!(out, "accuracy {:.6}", eval.accuracy)?;
    writeln!(out, "class\ttp\ttn\tfp\tfn")?;
    for (name, c) in dataset.class_names.iter().zip(&eval.confusion) {
        writeln!(out, "{name}\t{}\t{}\t{}\t{}", c.tp, c.tn, c.fp, c.fn_)?;
    }
    Ok(())
}

fn run_predict(args: PredictArgs) -> Result<()> {
    let model = load_model(&args.model, args.arch, args.input)?;
    let [h, w, c] = model.input_dims();
    let raw = decode_ppm(&read_file(&args.image)?)?;
    let image = match &args.keypoints {
        Some(kp) => {
            let kps = read_keypoints_json(&read_file(kp)?)?;
            let img = convert_channels(&normalize(&raw), c)?;
            crop_from_keypoints(&img, &kps, args.margin, h, w, ResizeMethod::Bilinear)?
        }
        None => preprocess(
            &raw,
            &LoadOptions {
                dims: [h, w, c],
                resize: ResizeMethod::Bilinear,
            },
        )?,
    };
    let (label, probs) = model.predict(&image)?;
    let letter = u8::try_from(label)
        .ok()
        .filter(|&l| l < 26)
        .map(|l| char::from(b'a' + l).to_string())
        .unwrap_or_else(|| label.to_string());
    println!("label {label} ({letter}) probability {:.6}", probs[label]);
    let formatted: Vec<String> = probs.iter().map(|p| format!("{p:.6}")).collect();
    println!("probs {}", formatted.join(","));
    Ok(())
}

fn run_preview(args: PreviewArgs) -> Result<()> {
    let raw = decode_ppm(&read_file(&args.image)?)?;
    let image = normalize(&raw);
    let &[h, w, _] = image.dims() else { unreachable!() };
    let config = AugmentConfig::default();
    let draw = AugmentDraw::sample(h, w, &config, &mut stream(args.seed, StreamKind::Preview, 0, 0));
    let dx = if draw.dx == 0 { ((w as f64 * config.max_shift_frac).ceil() as i64).max(1) } else { draw.dx };
    let dy = if draw.dy == 0 { ((h as f64 * config.max_shift_frac).ceil() as i64).max(1) } else { draw.dy };
    let degrees = if draw.degrees == 0.0 { config.max_rotate_deg } else { draw.degrees };

    std::fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;
    let outputs = [
        ("hflip.ppm", hflip(&image)?),
        ("hshift.ppm", shift(&image, dx, 0, config.fill_value)?),
        ("vshift.ppm", shift(&image, 0, dy, config.fill_value)?),
        ("rotate.ppm", rotate(&image, degrees, config.interpolation, config.fill_value)?),
    ];
    for (name, img) in outputs {
        let path = args.out.join(name);
        std::fs::write(&path, encode_ppm(&img.map(|v| v * 255.0))?).map_err(|e| Error::io(&path, e))?;
    }
    println!("hshift dx={dx} vshift dy={dy} rotate {degrees:.3} deg; wrote 4 images to {}", args.out.display());
    Ok(())
}
