//! Shared fixtures for the integration tests.

#![allow(dead_code)]

use std::path::Path;

use pedtrack::io::read_ground_truth;
use pedtrack::metrics::{establish_correspondence, mota, FrameEvents, MotReport};
use pedtrack::pipeline::{run_pipeline, samples_from_patches, train_classifier, OutputOptions, SequenceSource};
use pedtrack::synth::{training_patches, PatchConfig};
use pedtrack::{Classifier, PipelineConfig, SceneSpec};

/// Small windows and descriptors sized for 8x20 synthetic objects.
pub const SYNTH_CONFIG: &str = "\
window.width = 8
window.height = 20
window.stride_x = 1
window.stride_y = 1
window.occupancy = 0.5
phog.bins = 12
phog.levels = 2
train.hidden = 16,8
train.epochs = 50
train.learning_rate = 1.0
train.seed = 3
evaluation.threshold = 10
tracker.merge_radius = 10
";

pub fn synth_config() -> PipelineConfig {
    PipelineConfig::parse(SYNTH_CONFIG).unwrap()
}

pub fn one_object_scene() -> SceneSpec {
    SceneSpec::from_toml(
        r#"
        width = 96
        height = 64
        frames = 40
        seed = 11
        [[objects]]
        id = 1
        start = [6.0, 22.0]
        velocity = [2.0, 0.5]
        first_frame = 10
        "#,
    )
    .unwrap()
}

pub fn two_object_scene() -> SceneSpec {
    SceneSpec::from_toml(
        r#"
        width = 128
        height = 80
        frames = 40
        seed = 5
        [[objects]]
        id = 1
        start = [4.0, 6.0]
        velocity = [2.5, 0.0]
        first_frame = 8
        [[objects]]
        id = 2
        start = [110.0, 50.0]
        velocity = [-2.5, 0.0]
        first_frame = 10
        "#,
    )
    .unwrap()
}

pub fn trained_classifier(cfg: &PipelineConfig, scene: &SceneSpec) -> Classifier<f64> {
    let mut patch_cfg = PatchConfig::for_object(cfg.window.width, cfg.window.height);
    patch_cfg.seed = 99;
    let patches = training_patches(scene, &patch_cfg).unwrap();
    let samples = samples_from_patches(cfg, &patches).unwrap();
    train_classifier(cfg, &samples).unwrap().0
}

pub struct EndToEnd {
    pub report: MotReport,
    pub events: Vec<FrameEvents>,
    pub tracks_started: u64,
    pub confirmed_ids: Vec<u64>,
}

/// Generates the scene, trains on matching patches, runs the pipeline and
/// scores the tracks against the generator's ground truth.
pub fn run_scene(scene: &SceneSpec, work: &Path) -> EndToEnd {
    let cfg = synth_config();
    let frames = work.join("frames");
    pedtrack::generate_synthetic_scene(scene, &frames).unwrap();
    let classifier = trained_classifier(&cfg, scene);
    let source = SequenceSource::open(&frames).unwrap();
    let out = work.join("out");
    let summary = run_pipeline(&cfg, &source, classifier, &OutputOptions::new(&out)).unwrap();

    let gt = read_ground_truth(&frames.join("gt.csv")).unwrap();
    let hyp = pedtrack::io::read_tracks(&out.join("tracks.csv")).unwrap();
    let mut confirmed_ids: Vec<u64> = hyp.iter().map(|h| h.hypothesis_id).collect();
    confirmed_ids.sort_unstable();
    confirmed_ids.dedup();
    let events = establish_correspondence(&gt, &hyp, cfg.evaluation.threshold).unwrap();
    EndToEnd { report: mota(&events).unwrap(), events, tracks_started: summary.tracks_started, confirmed_ids }
}
