//! Synthetic test sequences: bright rectangles moving along straight lines
//! over a static random texture, with exact ground truth.
//!
//! Scenes are described in TOML:
//!
//! ```toml
//! width = 96
//! height = 64
//! frames = 40
//! seed = 7
//! noise_sigma = 2.0
//!
//! [[objects]]
//! id = 1
//! start = [4.0, 22.0]     # top-left corner at its first frame
//! velocity = [2.0, 0.0]   # pixels per frame
//! first_frame = 10
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Deserialize;
use thiserror::Error;

use crate::geometry::{BoundingBox, Frame};
use crate::io::{self, GroundTruthBox, NetpbmError, RecordError};
use crate::neuralnet::Label;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid scene description: {0}")]
    Parse(String),
    #[error("invalid scene: {0}")]
    Invalid(String),
    #[error("object {id} leaves the {width}x{height} frame at frame {frame}")]
    OutOfBounds { id: u64, frame: usize, width: usize, height: usize },
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error(transparent)]
    Image(#[from] NetpbmError),
    #[error(transparent)]
    Records(#[from] RecordError),
}

fn default_noise() -> f64 {
    2.0
}
fn default_low() -> u8 {
    60
}
fn default_high() -> u8 {
    100
}
fn default_obj_width() -> usize {
    8
}
fn default_obj_height() -> usize {
    20
}
fn default_intensity() -> u8 {
    180
}
fn default_shading() -> f64 {
    3.0
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectSpec {
    pub id: u64,
    #[serde(default = "default_obj_width")]
    pub width: usize,
    #[serde(default = "default_obj_height")]
    pub height: usize,
    /// Top-left corner at `first_frame`.
    pub start: [f64; 2],
    /// Displacement per frame.
    pub velocity: [f64; 2],
    #[serde(default)]
    pub first_frame: usize,
    /// Last frame the object is visible in; defaults to the end of the scene.
    pub last_frame: Option<usize>,
    /// Value of the top row.
    #[serde(default = "default_intensity")]
    pub intensity: u8,
    /// Brightness added per row downward.
    #[serde(default = "default_shading")]
    pub shading: f64,
}

impl ObjectSpec {
    pub fn is_visible(&self, frame: usize) -> bool {
        frame >= self.first_frame && self.last_frame.is_none_or(|last| frame <= last)
    }

    /// Unclipped top-left corner at `frame`, rounded to whole pixels.
    pub fn corner(&self, frame: usize) -> (f64, f64) {
        let dt = frame as f64 - self.first_frame as f64;
        ((self.start[0] + self.velocity[0] * dt).round(), (self.start[1] + self.velocity[1] * dt).round())
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    pub width: usize,
    pub height: usize,
    pub frames: usize,
    #[serde(default)]
    pub seed: u64,
    /// Standard deviation of per-frame Gaussian pixel noise.
    #[serde(default = "default_noise")]
    pub noise_sigma: f64,
    /// Background texture values are drawn uniformly from this range.
    #[serde(default = "default_low")]
    pub background_low: u8,
    #[serde(default = "default_high")]
    pub background_high: u8,
    #[serde(default)]
    pub objects: Vec<ObjectSpec>,
}

impl SceneSpec {
    pub fn from_toml(text: &str) -> Result<Self, SynthError> {
        let spec: Self = toml::from_str(text).map_err(|e| SynthError::Parse(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self, SynthError> {
        let text =
            fs::read_to_string(path).map_err(|source| SynthError::Io { path: path.display().to_string(), source })?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        if self.width == 0 || self.height == 0 {
            return Err(SynthError::Invalid(format!("frame size {}x{} is empty", self.width, self.height)));
        }
        if self.background_low > self.background_high {
            return Err(SynthError::Invalid("background_low exceeds background_high".into()));
        }
        if self.noise_sigma < 0.0 || !self.noise_sigma.is_finite() {
            return Err(SynthError::Invalid(format!(
                "noise_sigma {} must be finite and non-negative",
                self.noise_sigma
            )));
        }
        let mut ids: Vec<u64> = self.objects.iter().map(|o| o.id).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(SynthError::Invalid("object ids must be unique".into()));
        }
        for o in &self.objects {
            if o.width == 0 || o.height == 0 {
                return Err(SynthError::Invalid(format!("object {} has an empty size", o.id)));
            }
            for frame in (0..self.frames).filter(|&f| o.is_visible(f)) {
                self.object_box(o, frame)?;
            }
        }
        Ok(())
    }

    fn object_box(&self, o: &ObjectSpec, frame: usize) -> Result<BoundingBox, SynthError> {
        let (x, y) = o.corner(frame);
        let out = || SynthError::OutOfBounds { id: o.id, frame, width: self.width, height: self.height };
        if x < 0.0 || y < 0.0 {
            return Err(out());
        }
        let bbox = BoundingBox { x: x as usize, y: y as usize, width: o.width, height: o.height };
        if !bbox.fits_within(self.width, self.height) {
            return Err(out());
        }
        Ok(bbox)
    }

    /// Ground-truth boxes of every object visible at `frame`, by id.
    pub fn ground_truth(&self, frame: usize) -> Vec<GroundTruthBox> {
        let mut objs: Vec<&ObjectSpec> = self.objects.iter().filter(|o| o.is_visible(frame)).collect();
        objs.sort_by_key(|o| o.id);
        objs.into_iter()
            .map(|o| GroundTruthBox {
                frame_index: frame as u64,
                object_id: o.id,
                bbox: self.object_box(o, frame).expect("validated"),
            })
            .collect()
    }
}

/// Renders frames of a validated scene. The texture is fixed at
/// construction, noise depends only on the seed and frame number.
#[derive(Debug, Clone)]
pub struct SceneRenderer {
    spec: SceneSpec,
    texture: Vec<u8>,
}

impl SceneRenderer {
    pub fn new(spec: SceneSpec) -> Result<Self, SynthError> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let texture = (0..spec.width * spec.height)
            .map(|_| rng.random_range(spec.background_low..=spec.background_high))
            .collect();
        Ok(Self { spec, texture })
    }

    pub fn spec(&self) -> &SceneSpec {
        &self.spec
    }

    pub fn render(&self, frame: usize) -> Frame {
        let s = &self.spec;
        let mut values: Vec<f64> = self.texture.iter().map(|&v| f64::from(v)).collect();
        let mut objs: Vec<&ObjectSpec> = s.objects.iter().filter(|o| o.is_visible(frame)).collect();
        objs.sort_by_key(|o| o.id);
        for o in objs {
            let b = s.object_box(o, frame).expect("validated");
            paint_object(&mut values, s.width, b, o.intensity, o.shading);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
        rng.set_stream(frame as u64 + 1);
        let pixels = add_noise(&values, s.noise_sigma, &mut rng);
        Frame::new(s.width, s.height, 1, pixels, frame as u64).expect("validated size")
    }
}

fn paint_object(values: &mut [f64], stride: usize, b: BoundingBox, intensity: u8, shading: f64) {
    for row in 0..b.height {
        let v = f64::from(intensity) + shading * row as f64;
        let start = (b.y + row) * stride + b.x;
        values[start..start + b.width].fill(v);
    }
}

fn add_noise(values: &[f64], sigma: f64, rng: &mut ChaCha8Rng) -> Vec<u8> {
    let normal = Normal::new(0.0, sigma).expect("sigma validated");
    values
        .iter()
        .map(|&v| {
            let n = if sigma > 0.0 { normal.sample(rng) } else { 0.0 };
            (v + n).round().clamp(0.0, 255.0) as u8
        })
        .collect()
}

/// File name of frame `t` in a generated sequence.
pub fn frame_file_name(t: usize) -> String {
    format!("frame_{t:05}.pgm")
}

/// Writes every frame plus `gt.csv` into `dir`, one frame in memory at a time.
pub fn generate_synthetic_scene(spec: &SceneSpec, dir: &Path) -> Result<Vec<GroundTruthBox>, SynthError> {
    let renderer = SceneRenderer::new(spec.clone())?;
    fs::create_dir_all(dir).map_err(|source| SynthError::Io { path: dir.display().to_string(), source })?;
    let mut gt = Vec::new();
    for t in 0..spec.frames {
        io::write_frame(&renderer.render(t), &dir.join(frame_file_name(t)))?;
        gt.extend(spec.ground_truth(t));
    }
    io::write_ground_truth(&dir.join("gt.csv"), &gt)?;
    Ok(gt)
}

/// Settings for classifier training patches.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PatchConfig {
    pub window_width: usize,
    pub window_height: usize,
    pub object_width: usize,
    pub object_height: usize,
    pub positives: usize,
    pub negatives: usize,
    /// Largest offset of the object in a positive patch.
    pub positive_jitter: i64,
    /// Smallest horizontal / vertical offset that makes a shifted object a negative.
    pub negative_shift: (i64, i64),
    pub seed: u64,
}

impl PatchConfig {
    /// Patches for windows of exactly the object's size.
    pub fn for_object(width: usize, height: usize) -> Self {
        Self {
            window_width: width,
            window_height: height,
            object_width: width,
            object_height: height,
            positives: 200,
            negatives: 400,
            positive_jitter: 1,
            negative_shift: (3, 4),
            seed: 0,
        }
    }
}

/// Renders labelled training windows in the scene's appearance.
///
/// Positives hold a centred object moved by at most `positive_jitter`.
/// Negatives alternate between bare background and an object shifted by at
/// least `negative_shift` along one axis.
pub fn training_patches(spec: &SceneSpec, cfg: &PatchConfig) -> Result<Vec<(Frame, Label)>, SynthError> {
    if cfg.window_width == 0 || cfg.window_height == 0 || cfg.object_width == 0 || cfg.object_height == 0 {
        return Err(SynthError::Invalid("patch and object sizes must be positive".into()));
    }
    let (w, h) = (cfg.window_width, cfg.window_height);
    let base_x = (w as i64 - cfg.object_width as i64) / 2;
    let base_y = (h as i64 - cfg.object_height as i64) / 2;
    let (intensity, shading) =
        spec.objects.first().map_or((default_intensity(), default_shading()), |o| (o.intensity, o.shading));
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut out = Vec::with_capacity(cfg.positives + cfg.negatives);

    let patch = |rng: &mut ChaCha8Rng, offset: Option<(i64, i64)>| {
        let mut values: Vec<f64> =
            (0..w * h).map(|_| f64::from(rng.random_range(spec.background_low..=spec.background_high))).collect();
        if let Some((dx, dy)) = offset {
            for row in 0..cfg.object_height as i64 {
                let y = base_y + dy + row;
                if y < 0 || y >= h as i64 {
                    continue;
                }
                for col in 0..cfg.object_width as i64 {
                    let x = base_x + dx + col;
                    if x >= 0 && x < w as i64 {
                        values[y as usize * w + x as usize] = f64::from(intensity) + shading * row as f64;
                    }
                }
            }
        }
        Frame::new(w, h, 1, add_noise(&values, spec.noise_sigma, rng), 0).expect("positive size")
    };

    let j = cfg.positive_jitter;
    for _ in 0..cfg.positives {
        let offset = (rng.random_range(-j..=j), rng.random_range(-j..=j));
        out.push((patch(&mut rng, Some(offset)), Label::Pedestrian));
    }
    let (sx, sy) = cfg.negative_shift;
    let max_x = cfg.object_width as i64;
    let max_y = cfg.object_height as i64;
    for i in 0..cfg.negatives {
        let offset = match i % 3 {
            0 => None,
            1 => {
                let mag = rng.random_range(sx..=max_x.max(sx));
                let sign = if rng.random_bool(0.5) { 1 } else { -1 };
                Some((sign * mag, rng.random_range(-j..=j)))
            }
            _ => {
                let mag = rng.random_range(sy..=max_y.max(sy));
                let sign = if rng.random_bool(0.5) { 1 } else { -1 };
                Some((rng.random_range(-j..=j), sign * mag))
            }
        };
        out.push((patch(&mut rng, offset), Label::Background));
    }
    Ok(out)
}

/// Writes patches as `pos/NNNNN.pgm` and `neg/NNNNN.pgm` under `dir`.
pub fn write_patches(patches: &[(Frame, Label)], dir: &Path) -> Result<(PathBuf, PathBuf), SynthError> {
    let pos = dir.join("pos");
    let neg = dir.join("neg");
    for d in [&pos, &neg] {
        fs::create_dir_all(d).map_err(|source| SynthError::Io { path: d.display().to_string(), source })?;
    }
    let (mut np, mut nn) = (0, 0);
    for (frame, label) in patches {
        let path = match label {
            Label::Pedestrian => {
                np += 1;
                pos.join(format!("{:05}.pgm", np - 1))
            }
            Label::Background => {
                nn += 1;
                neg.join(format!("{:05}.pgm", nn - 1))
            }
        };
        io::write_frame(frame, &path)?;
    }
    Ok((pos, neg))
}
