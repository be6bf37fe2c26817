//! `pedtrack` command-line front end.
//!
//! Exit codes: 0 on success, 1 for invalid input or arguments, 2 for I/O
//! failures, 3 for internal errors.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use pedtrack::io::{read_features, read_frame, read_ground_truth, read_tracks, write_features, DetectionWriter};
use pedtrack::metrics::{establish_correspondence, mota, GroundTruthObject, Hypothesis};
use pedtrack::neuralnet::{load_classifier, save_lrf, save_network, Classifier};
use pedtrack::pipeline::{
    load_patch_dir, run_background, samples_from_patches, train_classifier, Detector, OutputOptions,
};
use pedtrack::synth::{training_patches, write_patches, PatchConfig};
use pedtrack::tracking::merge_detections;
use pedtrack::{Frame, Label, Mask, PipelineConfig, SceneSpec, SequenceSource};

const VALIDATION: u8 = 1;
const IO: u8 = 2;
const INTERNAL: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "pedtrack", version, about = "Pedestrian detection and tracking over netpbm frame sequences")]
struct Cli {
    /// Log more (repeatable); RUST_LOG overrides.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Foreground masks only.
    Bgsub(SequenceArgs),
    /// Train a classifier from a features CSV or pos/ and neg/ patch directories.
    Train(TrainArgs),
    /// Classify every window of independent frames; no background model.
    Detect(ModelArgs),
    /// Full pipeline: masks, detections and tracks.
    Track(TrackArgs),
    /// Score a tracks CSV against ground truth.
    Evaluate(EvaluateArgs),
    /// Render a synthetic scene and its ground truth.
    Synth(SynthArgs),
    /// Turn pos/ and neg/ patch directories into a features CSV.
    Features(FeaturesArgs),
}

#[derive(Debug, Args)]
struct Common {
    /// Pipeline configuration (`section.key = value` lines).
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SequenceArgs {
    #[command(flatten)]
    common: Common,
    /// Directory of numbered PGM/PPM frames.
    #[arg(long)]
    input: PathBuf,
    /// Directory for the written outputs.
    #[arg(long)]
    output: PathBuf,
    #[arg(long)]
    max_frames: Option<usize>,
}

#[derive(Debug, Args)]
struct ModelArgs {
    #[command(flatten)]
    seq: SequenceArgs,
    /// Trained model; defaults to `classifier.model` from the configuration.
    #[arg(long)]
    model: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct TrackArgs {
    #[command(flatten)]
    run: ModelArgs,
    /// Also write frames with track boxes drawn in.
    #[arg(long)]
    annotate: bool,
    /// Skip writing foreground masks.
    #[arg(long)]
    no_masks: bool,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[command(flatten)]
    common: Common,
    /// Features CSV, or a directory holding pos/ and neg/ patches.
    #[arg(long)]
    input: PathBuf,
    /// Model file to write.
    #[arg(long)]
    output: PathBuf,
    /// Overrides `train.seed`.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[command(flatten)]
    common: Common,
    /// Tracks CSV written by `track`.
    #[arg(long)]
    input: PathBuf,
    /// Ground-truth CSV.
    #[arg(long)]
    gt: PathBuf,
    /// Also write the key=value block here.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Overrides `evaluation.max_frames`.
    #[arg(long)]
    max_frames: Option<usize>,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[command(flatten)]
    common: Common,
    /// Scene description (TOML).
    #[arg(long)]
    scene: PathBuf,
    /// Directory for frames and `gt.csv`.
    #[arg(long)]
    output: PathBuf,
    /// Overrides the scene seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Also write window-sized training patches under `<output>/patches`.
    #[arg(long)]
    patches: bool,
}

#[derive(Debug, Args)]
struct FeaturesArgs {
    #[command(flatten)]
    common: Common,
    /// Directory holding pos/ and neg/ patches.
    #[arg(long)]
    input: PathBuf,
    /// Features CSV to write.
    #[arg(long)]
    output: PathBuf,
}

#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn validation(message: impl Into<String>) -> Self {
        Self { code: VALIDATION, message: message.into() }
    }

    fn io(path: &Path, e: std::io::Error) -> Self {
        Self { code: IO, message: format!("{}: {e}", path.display()) }
    }
}

impl<E: Into<pedtrack::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        let e = e.into();
        let code = if e.is_io() { IO } else { VALIDATION };
        Self { code, message: e.to_string() }
    }
}

type CliResult<T = ()> = Result<T, Failure>;

fn load_config(common: &Common) -> CliResult<PipelineConfig> {
    Ok(match &common.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    })
}

fn load_model(cfg: &PipelineConfig, flag: &Option<PathBuf>) -> CliResult<Classifier<f64>> {
    let path = flag
        .as_ref()
        .or(cfg.classifier.model.as_ref())
        .ok_or_else(|| Failure::validation("no model given (--model or classifier.model)"))?;
    Ok(load_classifier(path)?)
}

fn create_dir(dir: &Path) -> CliResult {
    fs::create_dir_all(dir).map_err(|e| Failure::io(dir, e))
}

fn bgsub(args: SequenceArgs) -> CliResult {
    let cfg = load_config(&args.common)?;
    let source = SequenceSource::open(&args.input)?;
    let n = run_background(&cfg, &source, &args.output, args.max_frames)?;
    println!("wrote {n} masks to {}", args.output.display());
    Ok(())
}

fn patch_samples(cfg: &PipelineConfig, dir: &Path) -> CliResult<Vec<pedtrack::Sample<f64>>> {
    let mut patches = load_patch_dir(&dir.join("pos"), Label::Pedestrian)?;
    patches.extend(load_patch_dir(&dir.join("neg"), Label::Background)?);
    Ok(samples_from_patches(cfg, &patches)?)
}

fn train(args: TrainArgs) -> CliResult {
    let mut cfg = load_config(&args.common)?;
    if let Some(seed) = args.seed {
        cfg.train.seed = seed;
    }
    let samples = if args.input.is_dir() { patch_samples(&cfg, &args.input)? } else { read_features(&args.input)? };
    let (classifier, report) = train_classifier(&cfg, &samples)?;
    if report.diverged {
        log::warn!("training loss diverged; consider a lower train.learning_rate");
    }
    match &classifier {
        Classifier::Dense(net) => save_network(net, &args.output)?,
        Classifier::Lrf(net) => save_lrf(net, &args.output)?,
    }
    let correct = samples
        .iter()
        .filter(|s| {
            let score = match &classifier {
                Classifier::Dense(net) => pedtrack::classify(net, &s.features).map(|c| c.score),
                Classifier::Lrf(net) => pedtrack::neuralnet::lrf_forward(net, &s.features),
            };
            score.is_ok_and(|p| (p >= 0.5) == (s.label == Label::Pedestrian))
        })
        .count();
    println!(
        "trained {} head on {} samples: final loss {:.6}, training accuracy {:.4}; wrote {}",
        cfg.classifier.head.name(),
        samples.len(),
        report.epoch_losses.last().copied().unwrap_or(f64::NAN),
        correct as f64 / samples.len() as f64,
        args.output.display()
    );
    Ok(())
}

/// Frames to run `detect` on: one file, or every frame of a directory.
fn detect_inputs(input: &Path) -> CliResult<Vec<(u64, PathBuf)>> {
    if input.is_dir() {
        let source = SequenceSource::open(input)?;
        Ok(source.paths().enumerate().map(|(i, p)| (i as u64, p.to_path_buf())).collect())
    } else {
        Ok(vec![(0, input.to_path_buf())])
    }
}

fn detect(args: ModelArgs) -> CliResult {
    let cfg = load_config(&args.seq.common)?;
    let detector = Detector::new(load_model(&cfg, &args.model)?, &cfg)?;
    create_dir(&args.seq.output)?;
    let out_path = args.seq.output.join("detections.csv");
    let file = fs::File::create(&out_path).map_err(|e| Failure::io(&out_path, e))?;
    let mut writer = DetectionWriter::new(std::io::BufWriter::new(file))?;
    let mut total = 0;
    let inputs = detect_inputs(&args.seq.input)?;
    for (index, path) in inputs.into_iter().take(args.seq.max_frames.unwrap_or(usize::MAX)) {
        let frame: Frame = read_frame(&path).map_err(pedtrack::Error::from)?;
        let full = Mask::from_values(frame.width(), frame.height(), vec![1; frame.width() * frame.height()])?;
        let windows = pedtrack::select_windows(&full, &frame, &cfg.window)?;
        let found =
            detector.detect(index, &windows).map_err(|m| Failure::validation(format!("{}: {m}", path.display())))?;
        for d in merge_detections(&found, cfg.effective_merge_radius()) {
            writer.write(&d)?;
            total += 1;
        }
    }
    writer.flush()?;
    println!("wrote {total} detections to {}", out_path.display());
    Ok(())
}

fn track(args: TrackArgs) -> CliResult {
    let seq = &args.run.seq;
    let cfg = load_config(&seq.common)?;
    let classifier = load_model(&cfg, &args.run.model)?;
    let source = SequenceSource::open(&seq.input)?;
    let out = OutputOptions {
        dir: seq.output.clone(),
        write_masks: !args.no_masks,
        annotate: args.annotate,
        max_frames: seq.max_frames,
    };
    let summary = pedtrack::run_pipeline(&cfg, &source, classifier, &out)?;
    println!(
        "{} frames, {} detections, {} track records, {} tracks started; wrote {}",
        summary.frames,
        summary.detections,
        summary.track_records,
        summary.tracks_started,
        seq.output.display()
    );
    Ok(())
}

/// Keeps the first `n` frame indices present in either input.
fn limit_frames(gt: &mut Vec<GroundTruthObject>, hyp: &mut Vec<Hypothesis>, n: usize) {
    let mut frames: Vec<u64> = gt.iter().map(|g| g.frame_index).chain(hyp.iter().map(|h| h.frame_index)).collect();
    frames.sort_unstable();
    frames.dedup();
    if n == 0 {
        gt.clear();
        hyp.clear();
    } else if let Some(&last) = frames.get(n - 1) {
        gt.retain(|g| g.frame_index <= last);
        hyp.retain(|h| h.frame_index <= last);
    }
}

fn evaluate(args: EvaluateArgs) -> CliResult {
    let cfg = load_config(&args.common)?;
    let mut hyp = read_tracks(&args.input)?;
    let mut gt = read_ground_truth(&args.gt)?;
    if let Some(n) = args.max_frames.or(cfg.evaluation.max_frames) {
        limit_frames(&mut gt, &mut hyp, n);
    }
    let events = establish_correspondence(&gt, &hyp, cfg.evaluation.threshold)?;
    let report = mota(&events)?;
    println!("{report}");
    print!("{}", report.key_values());
    if let Some(path) = &args.output {
        fs::write(path, report.key_values()).map_err(|e| Failure::io(path, e))?;
    }
    Ok(())
}

fn synth(args: SynthArgs) -> CliResult {
    let cfg = load_config(&args.common)?;
    let mut scene = SceneSpec::load(&args.scene)?;
    if let Some(seed) = args.seed {
        scene.seed = seed;
    }
    let gt = pedtrack::generate_synthetic_scene(&scene, &args.output)?;
    println!("wrote {} frames and {} ground-truth rows to {}", scene.frames, gt.len(), args.output.display());
    if args.patches {
        let (w, h) = (cfg.window.width, cfg.window.height);
        let obj = scene.objects.first().ok_or_else(|| Failure::validation("patches need at least one object"))?;
        let mut patch_cfg = PatchConfig::for_object(obj.width, obj.height);
        patch_cfg.window_width = w;
        patch_cfg.window_height = h;
        patch_cfg.seed = scene.seed;
        let patches = training_patches(&scene, &patch_cfg)?;
        let dir = args.output.join("patches");
        write_patches(&patches, &dir)?;
        println!("wrote {} training patches to {}", patches.len(), dir.display());
    }
    Ok(())
}

fn features(args: FeaturesArgs) -> CliResult {
    let cfg = load_config(&args.common)?;
    let samples = patch_samples(&cfg, &args.input)?;
    write_features(&args.output, &samples)?;
    println!("wrote {} feature rows to {}", samples.len(), args.output.display());
    Ok(())
}

fn run(cli: Cli) -> CliResult {
    match cli.command {
        Command::Bgsub(a) => bgsub(a),
        Command::Train(a) => train(a),
        Command::Detect(a) => detect(a),
        Command::Track(a) => track(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Synth(a) => synth(a),
        Command::Features(a) => features(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let line = text.lines().next().unwrap_or("invalid arguments");
            eprintln!("pedtrack: {}", line.trim_start_matches("error: "));
            return ExitCode::from(VALIDATION);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        2 => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    std::panic::set_hook(Box::new(|info| {
        let msg = info
            .payload()
            .downcast_ref::<&str>()
            .map(|s| s.to_string())
            .or_else(|| info.payload().downcast_ref::<String>().cloned())
            .unwrap_or_default();
        eprintln!("pedtrack: internal error: {msg}");
    }));

    match std::panic::catch_unwind(|| run(cli)) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(f)) => {
            eprintln!("pedtrack: {}", f.message.replace('\n', " "));
            ExitCode::from(f.code)
        }
        Err(_) => ExitCode::from(INTERNAL),
    }
}
