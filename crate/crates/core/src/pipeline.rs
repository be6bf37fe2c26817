//! End-to-end processing of a frame sequence: background subtraction,
//! window selection, classification, detection merging and tracking.

use std::cmp::Ordering;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use thiserror::Error;

use crate::background::BackgroundModel;
use crate::config::{ClassifierHead, ConfigError, PipelineConfig};
use crate::geometry::{BoundingBox, Detection, Frame, Mask, TrackRecord};
use crate::io::{self, DetectionWriter, NetpbmError, RecordError, TrackWriter};
use crate::neuralnet::{
    classify, lrf_forward, train, train_lrf, Classifier, InputScaling, Label, LrfNetwork, ModelFileError, NetError,
    Network, Sample, TrainReport, Transfer,
};
use crate::phog::phog_descriptor;
use crate::tracking::{merge_detections, Tracker};
use crate::windowing::{select_windows, CandidateWindow};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("no frames in {0}")]
    NoFrames(String),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {source}")]
    Frame { path: String, source: NetpbmError },
    #[error("{path}: frame is {found}, the sequence is {expected}")]
    FrameShape { path: String, expected: String, found: String },
    #[error("frame {frame}, {stage}: {message}")]
    Stage { frame: u64, stage: &'static str, message: String },
    #[error("classifier does not fit the configuration: {0}")]
    ModelMismatch(String),
    #[error(transparent)]
    Model(#[from] ModelFileError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Records(#[from] RecordError),
    #[error("training failed: {0}")]
    Training(#[from] NetError),
}

impl PipelineError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io { path: path.display().to_string(), source }
    }
}

/// A directory of netpbm frames ordered by the number in their file names.
#[derive(Debug, Clone)]
pub struct SequenceSource {
    dir: PathBuf,
    /// `(frame index, path)` in playback order.
    entries: Vec<(u64, PathBuf)>,
}

fn numeric_key(path: &Path) -> Option<u64> {
    let stem = path.file_stem()?.to_str()?;
    let digits: String = stem
        .chars()
        .rev()
        .skip_while(|c| !c.is_ascii_digit())
        .take_while(char::is_ascii_digit)
        .collect::<Vec<_>>()
        .into_iter()
        .rev()
        .collect();
    digits.parse().ok()
}

impl SequenceSource {
    /// Lists `.pgm`, `.ppm` and `.pnm` files in `dir`. Files are ordered by
    /// the last run of digits in their names, then by name; frames without a
    /// number are indexed by position.
    pub fn open(dir: &Path) -> Result<Self, PipelineError> {
        let listing = fs::read_dir(dir).map_err(|e| PipelineError::io(dir, e))?;
        let mut paths = Vec::new();
        for entry in listing {
            let path = entry.map_err(|e| PipelineError::io(dir, e))?.path();
            let is_image = path
                .extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| matches!(e.to_ascii_lowercase().as_str(), "pgm" | "ppm" | "pnm"));
            if is_image && path.is_file() {
                paths.push(path);
            }
        }
        if paths.is_empty() {
            return Err(PipelineError::NoFrames(dir.display().to_string()));
        }
        paths.sort_by(|a, b| match (numeric_key(a), numeric_key(b)) {
            (Some(x), Some(y)) => x.cmp(&y).then_with(|| a.cmp(b)),
            (Some(_), None) => Ordering::Less,
            (None, Some(_)) => Ordering::Greater,
            (None, None) => a.cmp(b),
        });
        let all_numbered = paths.iter().all(|p| numeric_key(p).is_some());
        let mut entries: Vec<(u64, PathBuf)> = paths
            .into_iter()
            .enumerate()
            .map(|(i, p)| (if all_numbered { numeric_key(&p).unwrap() } else { i as u64 }, p))
            .collect();
        // duplicate numbers (e.g. a.pgm1 and b.pgm1) fall back to positions
        if entries.windows(2).any(|w| w[0].0 == w[1].0) {
            for (i, e) in entries.iter_mut().enumerate() {
                e.0 = i as u64;
            }
        }
        Ok(Self { dir: dir.to_path_buf(), entries })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn paths(&self) -> impl Iterator<Item = &Path> {
        self.entries.iter().map(|e| e.1.as_path())
    }

    /// Loads frames lazily, checking that every frame matches the first.
    pub fn frames(&self) -> impl Iterator<Item = Result<Frame, PipelineError>> + '_ {
        let mut shape: Option<(usize, usize, usize)> = None;
        self.entries.iter().map(move |(index, path)| {
            let frame = io::read_frame(path)
                .map_err(|source| PipelineError::Frame { path: path.display().to_string(), source })?
                .with_index(*index);
            let this = (frame.width(), frame.height(), frame.channels());
            let describe = |(w, h, c): (usize, usize, usize)| format!("{w}x{h} with {c} channel(s)");
            match shape {
                None => shape = Some(this),
                Some(expected) if expected != this => {
                    return Err(PipelineError::FrameShape {
                        path: path.display().to_string(),
                        expected: describe(expected),
                        found: describe(this),
                    });
                }
                Some(_) => {}
            }
            Ok(frame)
        })
    }
}

/// Window classifier for the configured feature path.
#[derive(Debug, Clone)]
pub struct Detector {
    classifier: Classifier<f64>,
    cfg: PipelineConfig,
}

impl Detector {
    pub fn new(classifier: Classifier<f64>, cfg: &PipelineConfig) -> Result<Self, PipelineError> {
        match &classifier {
            Classifier::Dense(net) => {
                let dim = cfg.phog.dimension();
                if net.input_size() != dim {
                    return Err(PipelineError::ModelMismatch(format!(
                        "network takes {} inputs but PHOG with {} bins and {} levels yields {dim}",
                        net.input_size(),
                        cfg.phog.bins,
                        cfg.phog.levels
                    )));
                }
            }
            Classifier::Lrf(net) => {
                let g = net.geometry();
                if (g.window_width, g.window_height) != (cfg.window.width, cfg.window.height) {
                    return Err(PipelineError::ModelMismatch(format!(
                        "receptive-field network expects {}x{} windows, configured windows are {}x{}",
                        g.window_width, g.window_height, cfg.window.width, cfg.window.height
                    )));
                }
            }
        }
        Ok(Self { classifier, cfg: cfg.clone() })
    }

    pub fn classifier(&self) -> &Classifier<f64> {
        &self.classifier
    }

    /// Pedestrian probability of one window.
    pub fn score(&self, patch: &Frame) -> Result<f64, String> {
        match &self.classifier {
            Classifier::Dense(net) => {
                let d = phog_descriptor::<f64>(patch, &self.cfg.phog).map_err(|e| e.to_string())?;
                Ok(classify(net, &d.values).map_err(|e| e.to_string())?.score)
            }
            Classifier::Lrf(net) => lrf_forward(net, &lrf_input(patch)).map_err(|e| e.to_string()),
        }
    }

    /// Scores windows in parallel and keeps those at or above the threshold,
    /// in window order.
    pub fn detect(&self, frame_index: u64, windows: &[CandidateWindow]) -> Result<Vec<Detection>, String> {
        let scores: Vec<Result<f64, String>> = windows.par_iter().map(|w| self.score(&w.patch)).collect();
        let mut out = Vec::new();
        for (w, s) in windows.iter().zip(scores) {
            let score = s?;
            if score >= self.cfg.classifier.score_threshold {
                out.push(Detection { frame_index, bbox: w.bbox, score });
            }
        }
        Ok(out)
    }
}

/// Window intensities scaled to [0, 1], the input of the receptive-field network.
pub fn lrf_input(patch: &Frame) -> Vec<f64> {
    patch.luma::<f64>().into_iter().map(|v| v / 255.0).collect()
}

/// Everything produced for one frame.
#[derive(Debug, Clone)]
pub struct FrameOutput {
    pub frame_index: u64,
    pub mask: Mask,
    pub candidates: usize,
    /// Classifier-accepted windows before merging.
    pub raw_detections: usize,
    pub detections: Vec<Detection>,
    pub tracks: Vec<TrackRecord>,
}

/// Stateful per-sequence processor.
#[derive(Debug)]
pub struct Pipeline {
    cfg: PipelineConfig,
    detector: Detector,
    background: Option<BackgroundModel<f64>>,
    tracker: Tracker,
}

impl Pipeline {
    pub fn new(cfg: &PipelineConfig, classifier: Classifier<f64>) -> Result<Self, PipelineError> {
        cfg.validate()?;
        Ok(Self {
            detector: Detector::new(classifier, cfg)?,
            cfg: cfg.clone(),
            background: None,
            tracker: Tracker::new(cfg.tracker).without_history(),
        })
    }

    pub fn tracker(&self) -> &Tracker {
        &self.tracker
    }

    pub fn process(&mut self, frame: &Frame) -> Result<FrameOutput, PipelineError> {
        let index = frame.index();
        let stage = |stage: &'static str| move |e: String| PipelineError::Stage { frame: index, stage, message: e };
        if self.background.is_none() {
            let model = BackgroundModel::new(frame.width(), frame.height(), self.cfg.background)
                .map_err(|e| stage("background")(e.to_string()))?;
            self.background = Some(model);
        }
        let model = self.background.as_mut().expect("initialised above");
        let mask = model.process_frame(frame).map_err(|e| stage("background")(e.to_string()))?;
        let windows = select_windows(&mask, frame, &self.cfg.window).map_err(|e| stage("windowing")(e.to_string()))?;
        let raw = self.detector.detect(index, &windows).map_err(stage("classification"))?;
        let detections = merge_detections(&raw, self.cfg.effective_merge_radius());
        let tracks = self.tracker.step(index, &detections);
        Ok(FrameOutput {
            frame_index: index,
            candidates: windows.len(),
            raw_detections: raw.len(),
            mask,
            detections,
            tracks,
        })
    }
}

/// Where [`run_pipeline`] writes its artifacts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutputOptions {
    pub dir: PathBuf,
    pub write_masks: bool,
    pub annotate: bool,
    pub max_frames: Option<usize>,
}

impl OutputOptions {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into(), write_masks: true, annotate: false, max_frames: None }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RunSummary {
    pub frames: usize,
    pub detections: usize,
    pub track_records: usize,
    pub tracks_started: u64,
}

/// Streams the sequence through the pipeline. Writes `detections.csv`,
/// `tracks.csv`, `masks/` and, when asked, `annotated/` under the output
/// directory.
pub fn run_pipeline(
    cfg: &PipelineConfig,
    source: &SequenceSource,
    classifier: Classifier<f64>,
    out: &OutputOptions,
) -> Result<RunSummary, PipelineError> {
    let mut pipeline = Pipeline::new(cfg, classifier)?;
    fs::create_dir_all(&out.dir).map_err(|e| PipelineError::io(&out.dir, e))?;
    let masks_dir = out.dir.join("masks");
    let annotated_dir = out.dir.join("annotated");
    for (enabled, dir) in [(out.write_masks, &masks_dir), (out.annotate, &annotated_dir)] {
        if enabled {
            fs::create_dir_all(dir).map_err(|e| PipelineError::io(dir, e))?;
        }
    }
    let create = |name: &str| {
        let path = out.dir.join(name);
        File::create(&path).map(BufWriter::new).map_err(|e| PipelineError::io(&path, e))
    };
    let mut det_writer = DetectionWriter::new(create("detections.csv")?)?;
    let mut track_writer = TrackWriter::new(create("tracks.csv")?)?;

    let mut summary = RunSummary::default();
    let limit = out.max_frames.unwrap_or(usize::MAX);
    for frame in source.frames().take(limit) {
        let frame = frame?;
        let result = pipeline.process(&frame)?;
        let name = format!("{:05}", result.frame_index);
        let image_err = |source| PipelineError::Frame { path: name.clone(), source };
        if out.write_masks {
            io::write_mask(&result.mask, &masks_dir.join(format!("mask_{name}.pgm"))).map_err(image_err)?;
        }
        if out.annotate {
            let mut canvas = frame.clone();
            for r in &result.tracks {
                draw_box(&mut canvas, &track_box(r, frame.width(), frame.height()), id_level(r.track_id));
            }
            let ext = if canvas.channels() == 1 { "pgm" } else { "ppm" };
            io::write_frame(&canvas, &annotated_dir.join(format!("frame_{name}.{ext}"))).map_err(image_err)?;
        }
        for d in &result.detections {
            det_writer.write(d)?;
        }
        for r in &result.tracks {
            track_writer.write(r)?;
        }
        summary.frames += 1;
        summary.detections += result.detections.len();
        summary.track_records += result.tracks.len();
        log::debug!(
            "frame {}: {} candidates, {} accepted, {} merged, {} track records",
            result.frame_index,
            result.candidates,
            result.raw_detections,
            result.detections.len(),
            result.tracks.len()
        );
    }
    det_writer.flush()?;
    track_writer.flush()?;
    summary.tracks_started = pipeline.tracker().ids_issued();
    Ok(summary)
}

/// Writes a foreground mask per frame into `out_dir`, nothing else.
pub fn run_background(
    cfg: &PipelineConfig,
    source: &SequenceSource,
    out_dir: &Path,
    max_frames: Option<usize>,
) -> Result<usize, PipelineError> {
    cfg.validate()?;
    fs::create_dir_all(out_dir).map_err(|e| PipelineError::io(out_dir, e))?;
    let mut model: Option<BackgroundModel<f64>> = None;
    let mut n = 0;
    for frame in source.frames().take(max_frames.unwrap_or(usize::MAX)) {
        let frame = frame?;
        let index = frame.index();
        let fail = |e: String| PipelineError::Stage { frame: index, stage: "background", message: e };
        if model.is_none() {
            model = Some(
                BackgroundModel::new(frame.width(), frame.height(), cfg.background).map_err(|e| fail(e.to_string()))?,
            );
        }
        let mask = model.as_mut().unwrap().process_frame(&frame).map_err(|e| fail(e.to_string()))?;
        let path = out_dir.join(format!("mask_{index:05}.pgm"));
        io::write_mask(&mask, &path)
            .map_err(|source| PipelineError::Frame { path: path.display().to_string(), source })?;
        n += 1;
    }
    Ok(n)
}

/// Box of a track record centred on the filtered position, clipped to the frame.
fn track_box(r: &TrackRecord, width: usize, height: usize) -> BoundingBox {
    let w = r.bbox.width.min(width);
    let h = r.bbox.height.min(height);
    let x = (r.center.x - w as f64 / 2.0).round().clamp(0.0, (width - w) as f64) as usize;
    let y = (r.center.y - h as f64 / 2.0).round().clamp(0.0, (height - h) as f64) as usize;
    BoundingBox { x, y, width: w, height: h }
}

/// Gray level for drawing track `id`; never dark.
pub fn id_level(id: u64) -> u8 {
    (64 + (id.wrapping_mul(97) % 192)) as u8
}

/// Draws a one-pixel border of `level` on every channel.
pub fn draw_box(frame: &mut Frame, b: &BoundingBox, level: u8) {
    let (w, c) = (frame.width(), frame.channels());
    let x1 = b.x + b.width - 1;
    let y1 = b.y + b.height - 1;
    let pixels = frame.pixels_mut();
    let mut put = |x: usize, y: usize| {
        let i = (y * w + x) * c;
        pixels[i..i + c].fill(level);
    };
    for x in b.x..=x1 {
        put(x, b.y);
        put(x, y1);
    }
    for y in b.y..=y1 {
        put(b.x, y);
        put(x1, y);
    }
}

/// Feature vectors for the configured classifier head.
pub fn samples_from_patches(
    cfg: &PipelineConfig,
    patches: &[(Frame, Label)],
) -> Result<Vec<Sample<f64>>, PipelineError> {
    patches
        .par_iter()
        .enumerate()
        .map(|(i, (patch, label))| {
            if (patch.width(), patch.height()) != (cfg.window.width, cfg.window.height) {
                return Err(PipelineError::ModelMismatch(format!(
                    "patch {i} is {}x{}, windows are {}x{}",
                    patch.width(),
                    patch.height(),
                    cfg.window.width,
                    cfg.window.height
                )));
            }
            let features = match cfg.classifier.head {
                ClassifierHead::Dense => {
                    phog_descriptor::<f64>(patch, &cfg.phog)
                        .map_err(|e| PipelineError::ModelMismatch(format!("patch {i}: {e}")))?
                        .values
                }
                ClassifierHead::Lrf => lrf_input(patch),
            };
            Ok(Sample::new(features, *label))
        })
        .collect()
}

/// Standard deviation floor used when standardising descriptor features.
pub const MIN_FEATURE_STD: f64 = 1e-3;

/// Trains the configured head from scratch. Dense networks standardise their
/// inputs with statistics of `samples` unless `train.standardize` is off.
pub fn train_classifier(
    cfg: &PipelineConfig,
    samples: &[Sample<f64>],
) -> Result<(Classifier<f64>, TrainReport), PipelineError> {
    let tc = cfg.train.train_config();
    match cfg.classifier.head {
        ClassifierHead::Dense => {
            let input = samples.first().map_or(cfg.phog.dimension(), |s| s.features.len());
            let mut sizes = vec![input];
            sizes.extend(&cfg.train.hidden);
            sizes.push(2);
            let mut net = Network::new(&sizes, cfg.train.seed)?;
            if cfg.train.standardize {
                let scaling = InputScaling::standardize(samples.iter().map(|s| s.features.as_slice()), MIN_FEATURE_STD)
                    .ok_or(NetError::EmptyDataset)?;
                net = net.with_input_scaling(scaling)?;
            }
            let (net, report) = train(net, samples, &tc)?;
            Ok((Classifier::Dense(net), report))
        }
        ClassifierHead::Lrf => {
            let geometry = cfg.train.lrf_geometry(&cfg.window);
            let net =
                LrfNetwork::new(geometry, cfg.train.lrf_fields, Transfer::Sigmoid, Transfer::Sigmoid, cfg.train.seed)?;
            let (net, report) = train_lrf(net, samples, &tc)?;
            Ok((Classifier::Lrf(net), report))
        }
    }
}

/// Loads every netpbm file in `dir` as a training patch with `label`, in
/// file-name order.
pub fn load_patch_dir(dir: &Path, label: Label) -> Result<Vec<(Frame, Label)>, PipelineError> {
    let source = SequenceSource::open(dir)?;
    source
        .paths()
        .map(|p| {
            io::read_frame(p)
                .map(|f| (f, label))
                .map_err(|source| PipelineError::Frame { path: p.display().to_string(), source })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numeric_ordering() {
        let dir = tempfile::tempdir().unwrap();
        for name in ["f10.pgm", "f2.pgm", "f1.pgm", "notes.txt"] {
            let f = Frame::filled(2, 2, 0, 0).unwrap();
            if name.ends_with(".pgm") {
                io::write_frame(&f, &dir.path().join(name)).unwrap();
            } else {
                fs::write(dir.path().join(name), "x").unwrap();
            }
        }
        let src = SequenceSource::open(dir.path()).unwrap();
        let names: Vec<_> = src.paths().map(|p| p.file_name().unwrap().to_str().unwrap().to_string()).collect();
        assert_eq!(names, ["f1.pgm", "f2.pgm", "f10.pgm"]);
        let indices: Vec<u64> = src.frames().map(|f| f.unwrap().index()).collect();
        assert_eq!(indices, [1, 2, 10]);
    }

    #[test]
    fn empty_sequence() {
        let dir = tempfile::tempdir().unwrap();
        let err = SequenceSource::open(dir.path()).unwrap_err();
        assert!(err.to_string().starts_with("no frames"), "{err}");
    }

    #[test]
    fn shape_change_names_the_frame() {
        let dir = tempfile::tempdir().unwrap();
        io::write_frame(&Frame::filled(4, 4, 0, 0).unwrap(), &dir.path().join("a0.pgm")).unwrap();
        io::write_frame(&Frame::filled(4, 5, 0, 0).unwrap(), &dir.path().join("a1.pgm")).unwrap();
        let src = SequenceSource::open(dir.path()).unwrap();
        let results: Vec<_> = src.frames().collect();
        assert!(results[0].is_ok());
        let err = results[1].as_ref().unwrap_err().to_string();
        assert!(err.contains("a1.pgm"), "{err}");
    }

    #[test]
    fn box_drawing() {
        let mut f = Frame::filled(5, 4, 0, 0).unwrap();
        draw_box(&mut f, &BoundingBox::new(1, 1, 3, 2).unwrap(), 9);
        #[rustfmt::skip]
        let expected = [
            0, 0, 0, 0, 0,
            0, 9, 9, 9, 0,
            0, 9, 9, 9, 0,
            0, 0, 0, 0, 0,
        ];
        assert_eq!(f.pixels(), &expected);
        assert!(id_level(0) >= 64 && id_level(12345) >= 64);
    }

    #[test]
    fn model_mismatch_detected() {
        let cfg = PipelineConfig::default();
        let net = Network::<f64>::new(&[10, 2], 0).unwrap();
        assert!(matches!(Pipeline::new(&cfg, Classifier::Dense(net)), Err(PipelineError::ModelMismatch(_))));
    }
}
