//! Pedestrian detection and multi-object tracking.
//!
//! The processing chain per frame is:
//!
//! 1. [`background`]: per-pixel Gaussian-mixture background model producing
//!    a foreground mask;
//! 2. [`windowing`]: fixed-size windows kept when enough of their pixels are
//!    foreground;
//! 3. [`phog`]: pyramid histogram of oriented gradients per window;
//! 4. [`neuralnet`]: pedestrian / background classification;
//! 5. [`tracking`]: constant-velocity [`kalman`] filters with gated
//!    nearest-pair association.
//!
//! [`metrics`] scores tracker output against ground truth with the CLEAR MOT
//! measures, [`pipeline`] wires the stages to files, and [`synth`] generates
//! test sequences with known ground truth.
//!
//! The numeric kernels are generic over [`Scalar`] (`f32` or `f64`); the
//! aliases at the crate root name the common instantiations.

pub mod background;
pub mod config;
pub mod geometry;
pub mod io;
pub mod kalman;
pub mod metrics;
pub mod neuralnet;
pub mod phog;
pub mod pipeline;
mod scalar;
pub mod synth;
pub mod tracking;
pub mod windowing;

use thiserror::Error;

pub use scalar::{sigmoid, softmax, Scalar};

pub use background::{BackgroundError, BackgroundModel, BackgroundParams, GaussianComponent, PixelMixture};
pub use config::{ClassifierHead, ConfigError, PipelineConfig};
pub use geometry::{centroid, euclidean_distance, BoundingBox, Detection, Frame, FrameError, Mask, Point, TrackRecord};
pub use kalman::{KalmanError, KalmanParams, KalmanState};
pub use metrics::{
    establish_correspondence, mota, mota_from_rates, motp, FrameEvents, GroundTruthObject, Hypothesis, MetricsError,
    MotReport,
};
pub use neuralnet::{classify, Classification, Classifier, Label, LrfNetwork, NetError, Network, Sample};
pub use phog::{phog_descriptor, phog_dimension, OrientationRange, PhogDescriptor, PhogError, PhogParams};
pub use pipeline::{run_pipeline, OutputOptions, Pipeline, PipelineError, SequenceSource};
pub use synth::{generate_synthetic_scene, SceneSpec, SynthError};
pub use tracking::{associate, Track, Tracker, TrackerConfig};
pub use windowing::{select_windows, CandidateWindow, WindowConfig, WindowError};

pub type BackgroundModelF32 = BackgroundModel<f32>;
pub type BackgroundModelF64 = BackgroundModel<f64>;
pub type BackgroundParamsF32 = BackgroundParams<f32>;
pub type BackgroundParamsF64 = BackgroundParams<f64>;
pub type PhogDescriptorF32 = PhogDescriptor<f32>;
pub type PhogDescriptorF64 = PhogDescriptor<f64>;
pub type NetworkF32 = Network<f32>;
pub type NetworkF64 = Network<f64>;
pub type LrfNetworkF32 = LrfNetwork<f32>;
pub type LrfNetworkF64 = LrfNetwork<f64>;
pub type KalmanStateF32 = KalmanState<f32>;
pub type KalmanStateF64 = KalmanState<f64>;
pub type KalmanParamsF64 = KalmanParams<f64>;
pub type KalmanParamsF32 = KalmanParams<f32>;

/// Any error the library can return.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Frame(#[from] FrameError),
    #[error(transparent)]
    Background(#[from] BackgroundError),
    #[error(transparent)]
    Window(#[from] WindowError),
    #[error(transparent)]
    Phog(#[from] PhogError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    ModelFile(#[from] neuralnet::ModelFileError),
    #[error(transparent)]
    Kalman(#[from] KalmanError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Image(#[from] io::NetpbmError),
    #[error(transparent)]
    Records(#[from] io::RecordError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
}

impl Error {
    /// True for problems with the caller's input rather than the environment.
    pub fn is_validation(&self) -> bool {
        !self.is_io()
    }

    /// True when the root cause is a failed read or write.
    pub fn is_io(&self) -> bool {
        match self {
            Self::Image(e) => image_io(e),
            Self::Records(e) => records_io(e),
            Self::Config(e) => matches!(e, ConfigError::Io { .. }),
            Self::Synth(e) => synth_io(e),
            Self::ModelFile(e) => matches!(e, neuralnet::ModelFileError::Io(_)),
            Self::Pipeline(e) => match e {
                PipelineError::Io { .. } => true,
                PipelineError::Frame { source, .. } => image_io(source),
                PipelineError::Model(m) => matches!(m, neuralnet::ModelFileError::Io(_)),
                PipelineError::Config(c) => matches!(c, ConfigError::Io { .. }),
                PipelineError::Records(r) => records_io(r),
                _ => false,
            },
            _ => false,
        }
    }
}

fn image_io(e: &io::NetpbmError) -> bool {
    matches!(e, io::NetpbmError::Io { .. })
}

fn records_io(e: &io::RecordError) -> bool {
    matches!(e, io::RecordError::Io { .. })
}

fn synth_io(e: &SynthError) -> bool {
    match e {
        SynthError::Io { .. } => true,
        SynthError::Image(i) => image_io(i),
        SynthError::Records(r) => records_io(r),
        _ => false,
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
