//! File formats: netpbm images and CSV records.

pub mod netpbm;
pub mod records;

pub use netpbm::{encode_frame, parse_frame, read_frame, write_frame, write_mask, NetpbmError};
pub use records::{
    read_detections_from, read_features, read_features_from, read_ground_truth, read_ground_truth_from, read_tracks,
    read_tracks_from, write_features, write_features_to, write_ground_truth, write_ground_truth_to, DetectionWriter,
    GroundTruthBox, RecordError, TrackWriter,
};
