//! Pipeline configuration.
//!
//! A configuration file holds `section.key = value` lines. `#` starts a
//! comment, blank lines are ignored and absent keys keep their defaults.
//!
//! ```text
//! background.k = 5
//! background.alpha = 0.05
//! window.width = 32
//! window.height = 80
//! phog.orientation = unsigned
//! classifier.model = models/ped.mlp
//! train.hidden = 64,16
//! ```

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use thiserror::Error;

use crate::background::BackgroundParams;
use crate::neuralnet::{LrfGeometry, TrainConfig};
use crate::phog::{OrientationRange, PhogParams, MAX_LEVELS};
use crate::tracking::TrackerConfig;
use crate::windowing::WindowConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: `{key}` {message}")]
    Value { line: usize, key: String, message: String },
    #[error("invalid configuration: {0}")]
    Inconsistent(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ClassifierHead {
    /// Dense network over PHOG descriptors.
    #[default]
    Dense,
    /// Local-receptive-field network over window intensities.
    Lrf,
}

impl ClassifierHead {
    pub fn name(self) -> &'static str {
        match self {
            Self::Dense => "dense",
            Self::Lrf => "lrf",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierConfig {
    pub model: Option<PathBuf>,
    /// Windows scoring at least this pedestrian probability become detections.
    pub score_threshold: f64,
    pub head: ClassifierHead,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self { model: None, score_threshold: 0.5, head: ClassifierHead::Dense }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvaluationConfig {
    /// Largest centroid distance counted as a match.
    pub threshold: f64,
    /// Evaluate only the first `n` frames; `None` means all of them.
    pub max_frames: Option<usize>,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        Self { threshold: 220.0, max_frames: None }
    }
}

/// Classifier training settings used by the `train` command.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainSettings {
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// Hidden layer widths of the dense network.
    pub hidden: Vec<usize>,
    pub batch_size: Option<usize>,
    /// Standardise dense-network inputs to zero mean and unit variance.
    pub standardize: bool,
    /// LRF filters.
    pub lrf_fields: usize,
    pub lrf_field_width: usize,
    pub lrf_field_height: usize,
    pub lrf_stride_x: usize,
    pub lrf_stride_y: usize,
}

impl Default for TrainSettings {
    fn default() -> Self {
        Self {
            epochs: 50,
            learning_rate: 1.0,
            seed: 0,
            hidden: vec![64],
            batch_size: None,
            standardize: true,
            lrf_fields: 4,
            lrf_field_width: 4,
            lrf_field_height: 4,
            lrf_stride_x: 2,
            lrf_stride_y: 2,
        }
    }
}

impl TrainSettings {
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            learning_rate: self.learning_rate,
            seed: self.seed,
            batch_size: self.batch_size,
            ..TrainConfig::default()
        }
    }

    pub fn lrf_geometry(&self, window: &WindowConfig) -> LrfGeometry {
        LrfGeometry {
            window_width: window.width,
            window_height: window.height,
            field_width: self.lrf_field_width,
            field_height: self.lrf_field_height,
            stride_x: self.lrf_stride_x,
            stride_y: self.lrf_stride_y,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PipelineConfig {
    pub background: BackgroundParams<f64>,
    pub window: WindowConfig,
    pub phog: PhogParams,
    pub classifier: ClassifierConfig,
    pub tracker: TrackerConfig,
    /// Detections closer than this to a better one are dropped. Defaults to
    /// half the window width.
    pub merge_radius: Option<f64>,
    pub evaluation: EvaluationConfig,
    pub train: TrainSettings,
}

impl PipelineConfig {
    pub fn effective_merge_radius(&self) -> f64 {
        self.merge_radius.unwrap_or(self.window.width as f64 / 2.0)
    }

    /// Cross-checks settings that span modules.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let inconsistent = |e: &dyn std::fmt::Display| ConfigError::Inconsistent(e.to_string());
        self.background.validate().map_err(|e| inconsistent(&e))?;
        self.window.validate().map_err(|e| inconsistent(&e))?;
        self.phog.validate().map_err(|e| inconsistent(&e))?;
        let min = self.phog.min_side();
        if self.window.width < min || self.window.height < min {
            return Err(ConfigError::Inconsistent(format!(
                "a {}x{} window is too small for a {}-level pyramid (minimum side {min})",
                self.window.width, self.window.height, self.phog.levels
            )));
        }
        if self.classifier.head == ClassifierHead::Lrf {
            self.train.lrf_geometry(&self.window).validate().map_err(|e| inconsistent(&e))?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text =
            fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line,
                message: format!("expected `key = value`, got {content:?}"),
            })?;
            let key = key.trim();
            let value = value.trim();
            if value.is_empty() {
                return Err(ConfigError::Value { line, key: key.into(), message: "has no value".into() });
            }
            cfg.set(line, key, value)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn set(&mut self, line: usize, key: &str, value: &str) -> Result<(), ConfigError> {
        let v = Field { line, key, value };
        match key {
            "background.k" => self.background.k = v.int(1)?,
            "background.alpha" => self.background.alpha = v.real_open_unit()?,
            "background.threshold" => self.background.background_threshold = v.real_open_unit()?,
            "background.init_variance" => self.background.init_variance = v.positive()?,
            "background.init_weight" => self.background.init_weight = v.real_open_unit()?,
            "background.variance_floor" => self.background.variance_floor = v.positive()?,

            "window.width" => self.window.width = v.int(1)?,
            "window.height" => self.window.height = v.int(1)?,
            "window.stride_x" => self.window.stride_x = v.int(1)?,
            "window.stride_y" => self.window.stride_y = v.int(1)?,
            "window.occupancy" => {
                let f: f64 = v.parse()?;
                if !(f > 0.0 && f <= 1.0) {
                    return Err(v.range("must lie in (0, 1]"));
                }
                self.window.occupancy_fraction = f;
            }

            "phog.bins" => self.phog.bins = v.int(2)?,
            "phog.levels" => {
                let l = v.int(0)?;
                if l > MAX_LEVELS && !self.phog.allow_deep_pyramid {
                    return Err(v.range(&format!("exceeds {MAX_LEVELS}; set phog.allow_deep_pyramid = true first")));
                }
                self.phog.levels = l;
            }
            "phog.allow_deep_pyramid" => self.phog.allow_deep_pyramid = v.boolean()?,
            "phog.orientation" => {
                self.phog.orientation = match value {
                    "signed" => OrientationRange::Signed,
                    "unsigned" => OrientationRange::Unsigned,
                    _ => return Err(v.range("must be `signed` or `unsigned`")),
                }
            }

            "classifier.model" => self.classifier.model = Some(PathBuf::from(value)),
            "classifier.score_threshold" => {
                let t: f64 = v.parse()?;
                if !(0.0..=1.0).contains(&t) {
                    return Err(v.range("must lie in [0, 1]"));
                }
                self.classifier.score_threshold = t;
            }
            "classifier.head" => {
                self.classifier.head = match value {
                    "dense" => ClassifierHead::Dense,
                    "lrf" => ClassifierHead::Lrf,
                    _ => return Err(v.range("must be `dense` or `lrf`")),
                }
            }

            "tracker.gate" => self.tracker.gate_threshold = v.positive()?,
            "tracker.max_misses" => self.tracker.max_misses = v.int(0)?,
            "tracker.min_hits" => self.tracker.min_hits_to_confirm = v.int(1)?,
            "tracker.birth_variance" => self.tracker.birth_variance = v.positive()?,
            "tracker.merge_radius" => self.merge_radius = Some(v.non_negative()?),

            "evaluation.threshold" => self.evaluation.threshold = v.non_negative()?,
            "evaluation.max_frames" => self.evaluation.max_frames = Some(v.int(1)?),

            "train.epochs" => self.train.epochs = v.int(1)?,
            "train.learning_rate" => self.train.learning_rate = v.positive()?,
            "train.seed" => self.train.seed = v.parse()?,
            "train.hidden" => {
                self.train.hidden = value
                    .split(',')
                    .map(|s| s.trim())
                    .filter(|s| !s.is_empty())
                    .map(|s| match s.parse::<usize>() {
                        Ok(n) if n > 0 => Ok(n),
                        _ => Err(v.range("must be a comma-separated list of positive widths")),
                    })
                    .collect::<Result<_, _>>()?
            }
            "train.batch_size" => self.train.batch_size = Some(v.int(1)?),
            "train.standardize" => self.train.standardize = v.boolean()?,
            "train.lrf_fields" => self.train.lrf_fields = v.int(1)?,
            "train.lrf_field_width" => self.train.lrf_field_width = v.int(1)?,
            "train.lrf_field_height" => self.train.lrf_field_height = v.int(1)?,
            "train.lrf_stride_x" => self.train.lrf_stride_x = v.int(1)?,
            "train.lrf_stride_y" => self.train.lrf_stride_y = v.int(1)?,

            _ => return Err(ConfigError::UnknownKey { line, key: key.into() }),
        }
        Ok(())
    }
}

struct Field<'a> {
    line: usize,
    key: &'a str,
    value: &'a str,
}

impl Field<'_> {
    fn range(&self, message: &str) -> ConfigError {
        ConfigError::Value { line: self.line, key: self.key.into(), message: format!("= {}: {message}", self.value) }
    }

    fn parse<T: FromStr>(&self) -> Result<T, ConfigError> {
        self.value.parse().map_err(|_| ConfigError::Value {
            line: self.line,
            key: self.key.into(),
            message: format!("has unparsable value {:?}", self.value),
        })
    }

    fn int<T: FromStr + PartialOrd + From<u8>>(&self, min: u8) -> Result<T, ConfigError> {
        let n: T = self.parse()?;
        if n < T::from(min) {
            return Err(self.range(&format!("must be at least {min}")));
        }
        Ok(n)
    }

    fn finite(&self) -> Result<f64, ConfigError> {
        let x: f64 = self.parse()?;
        if !x.is_finite() {
            return Err(self.range("must be finite"));
        }
        Ok(x)
    }

    fn positive(&self) -> Result<f64, ConfigError> {
        let x = self.finite()?;
        if x <= 0.0 {
            return Err(self.range("must be positive"));
        }
        Ok(x)
    }

    fn non_negative(&self) -> Result<f64, ConfigError> {
        let x = self.finite()?;
        if x < 0.0 {
            return Err(self.range("must not be negative"));
        }
        Ok(x)
    }

    fn real_open_unit(&self) -> Result<f64, ConfigError> {
        let x = self.finite()?;
        if !(x > 0.0 && x < 1.0) {
            return Err(self.range("must lie in (0, 1)"));
        }
        Ok(x)
    }

    fn boolean(&self) -> Result<bool, ConfigError> {
        match self.value {
            "true" => Ok(true),
            "false" => Ok(false),
            _ => Err(self.range("must be `true` or `false`")),
        }
    }
}
