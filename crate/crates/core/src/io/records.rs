//! CSV files: tracks, detections, ground truth and feature dumps. Every file
//! starts with a header row.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use thiserror::Error;

use crate::geometry::{BoundingBox, Detection, Point, TrackRecord};
use crate::metrics::{GroundTruthObject, Hypothesis};
use crate::neuralnet::{Label, Sample};

pub const TRACKS_HEADER: [&str; 7] = ["frame", "track_id", "x", "y", "width", "height", "score"];
pub const DETECTIONS_HEADER: [&str; 6] = ["frame", "x", "y", "width", "height", "score"];
pub const GROUND_TRUTH_HEADER: [&str; 6] = ["frame", "object_id", "x", "y", "width", "height"];

#[derive(Debug, Error)]
pub enum RecordError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
}

fn open(path: &Path) -> Result<File, RecordError> {
    File::open(path).map_err(|source| RecordError::Io { path: path.display().to_string(), source })
}

fn create(path: &Path) -> Result<File, RecordError> {
    File::create(path).map_err(|source| RecordError::Io { path: path.display().to_string(), source })
}

fn reader<R: Read>(input: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().has_headers(true).flexible(true).trim(csv::Trim::All).from_reader(input)
}

fn field<T: FromStr>(record: &csv::StringRecord, i: usize, name: &str) -> Result<T, RecordError> {
    let line = record.position().map_or(0, |p| p.line());
    let raw = record.get(i).ok_or_else(|| RecordError::Parse { line, message: format!("missing column {name}") })?;
    raw.parse().map_err(|_| RecordError::Parse { line, message: format!("invalid {name} {raw:?}") })
}

fn expect_columns(record: &csv::StringRecord, allowed: &[usize]) -> Result<(), RecordError> {
    if allowed.contains(&record.len()) {
        return Ok(());
    }
    let line = record.position().map_or(0, |p| p.line());
    Err(RecordError::Parse { line, message: format!("expected {allowed:?} columns, found {}", record.len()) })
}

/// Streaming writer for track records. The box is centred on the filtered
/// track centre.
pub struct TrackWriter<W: Write> {
    inner: csv::Writer<W>,
}

impl<W: Write> TrackWriter<W> {
    pub fn new(output: W) -> Result<Self, RecordError> {
        let mut inner = csv::Writer::from_writer(output);
        inner.write_record(TRACKS_HEADER)?;
        Ok(Self { inner })
    }

    pub fn write(&mut self, r: &TrackRecord) -> Result<(), RecordError> {
        let (w, h) = (r.bbox.width as f64, r.bbox.height as f64);
        self.inner.write_record([
            r.frame_index.to_string(),
            r.track_id.to_string(),
            format!("{:.3}", r.center.x - w / 2.0),
            format!("{:.3}", r.center.y - h / 2.0),
            r.bbox.width.to_string(),
            r.bbox.height.to_string(),
            format!("{:.6}", r.score),
        ])?;
        Ok(())
    }

    pub fn flush(&mut self) -> Result<(), RecordError> {
        self.inner.flush().map_err(|source| RecordError::Io { path: "tracks".into(), source })
    }
}

pub struct DetectionWriter<W: Write> {
    inner: csv::Writer<W>,
}

impl<W: Write> DetectionWriter<W> {
    pub fn new(output: W) -> Result<Self, RecordError> {
        let mut inner = csv::Writer::from_writer(output);
        inner.write_record(DETECTIONS_HEADER)?;
        Ok(Self { inner })
    }

    pub fn write(&mut self, d: &Detection) -> Result<(), RecordError> {
        let b = d.bbox;
        self.inner.write_record([
            d.frame_index.to_string(),
            b.x.to_string(),
            b.y.to_string(),
            b.width.to_string(),
            b.height.to_string(),
            format!("{:.6}", d.score),
        ])?;
        Ok(())
    }

    pub fn flush(&mut self) -> Result<(), RecordError> {
        self.inner.flush().map_err(|source| RecordError::Io { path: "detections".into(), source })
    }
}

/// Reads a tracks file as evaluation hypotheses (box centres).
pub fn read_tracks_from<R: Read>(input: R) -> Result<Vec<Hypothesis>, RecordError> {
    let mut out = Vec::new();
    for record in reader(input).records() {
        let record = record?;
        expect_columns(&record, &[7])?;
        let x: f64 = field(&record, 2, "x")?;
        let y: f64 = field(&record, 3, "y")?;
        let w: f64 = field(&record, 4, "width")?;
        let h: f64 = field(&record, 5, "height")?;
        out.push(Hypothesis {
            frame_index: field(&record, 0, "frame")?,
            hypothesis_id: field(&record, 1, "track_id")?,
            center: Point::new(x + w / 2.0, y + h / 2.0),
        });
    }
    Ok(out)
}

pub fn read_tracks(path: &Path) -> Result<Vec<Hypothesis>, RecordError> {
    read_tracks_from(open(path)?)
}

pub fn read_detections_from<R: Read>(input: R) -> Result<Vec<Detection>, RecordError> {
    let mut out = Vec::new();
    for record in reader(input).records() {
        let record = record?;
        expect_columns(&record, &[6])?;
        let line = record.position().map_or(0, |p| p.line());
        let bbox = BoundingBox::new(
            field(&record, 1, "x")?,
            field(&record, 2, "y")?,
            field(&record, 3, "width")?,
            field(&record, 4, "height")?,
        )
        .map_err(|e| RecordError::Parse { line, message: e.to_string() })?;
        out.push(Detection { frame_index: field(&record, 0, "frame")?, bbox, score: field(&record, 5, "score")? });
    }
    Ok(out)
}

/// Ground truth rows are `frame,object_id,x,y` (centre) or
/// `frame,object_id,x,y,width,height` (top-left corner and size).
pub fn read_ground_truth_from<R: Read>(input: R) -> Result<Vec<GroundTruthObject>, RecordError> {
    let mut out = Vec::new();
    for record in reader(input).records() {
        let record = record?;
        expect_columns(&record, &[4, 6])?;
        let x: f64 = field(&record, 2, "x")?;
        let y: f64 = field(&record, 3, "y")?;
        let center = if record.len() == 6 {
            let w: f64 = field(&record, 4, "width")?;
            let h: f64 = field(&record, 5, "height")?;
            Point::new(x + w / 2.0, y + h / 2.0)
        } else {
            Point::new(x, y)
        };
        out.push(GroundTruthObject {
            frame_index: field(&record, 0, "frame")?,
            object_id: field(&record, 1, "object_id")?,
            center,
        });
    }
    Ok(out)
}

pub fn read_ground_truth(path: &Path) -> Result<Vec<GroundTruthObject>, RecordError> {
    read_ground_truth_from(open(path)?)
}

/// One ground-truth box.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GroundTruthBox {
    pub frame_index: u64,
    pub object_id: u64,
    pub bbox: BoundingBox,
}

pub fn write_ground_truth_to<W: Write>(output: W, rows: &[GroundTruthBox]) -> Result<(), RecordError> {
    let mut w = csv::Writer::from_writer(output);
    w.write_record(GROUND_TRUTH_HEADER)?;
    for r in rows {
        let b = r.bbox;
        w.write_record([
            r.frame_index.to_string(),
            r.object_id.to_string(),
            b.x.to_string(),
            b.y.to_string(),
            b.width.to_string(),
            b.height.to_string(),
        ])?;
    }
    w.flush().map_err(|source| RecordError::Io { path: "ground truth".into(), source })
}

pub fn write_ground_truth(path: &Path, rows: &[GroundTruthBox]) -> Result<(), RecordError> {
    write_ground_truth_to(create(path)?, rows)
}

/// Feature dump: `label,f0,f1,...` with label 1 for pedestrian, 0 for
/// background. Values use Rust's shortest round-trip formatting.
pub fn write_features_to<W: Write, T: crate::Scalar>(output: W, samples: &[Sample<T>]) -> Result<(), RecordError> {
    let mut w = csv::Writer::from_writer(output);
    let dim = samples.first().map_or(0, |s| s.features.len());
    let mut header = vec!["label".to_string()];
    header.extend((0..dim).map(|i| format!("f{i}")));
    w.write_record(&header)?;
    for s in samples {
        let mut row = vec![s.label.as_binary().to_string()];
        row.extend(s.features.iter().map(|v| v.to_string()));
        w.write_record(&row)?;
    }
    w.flush().map_err(|source| RecordError::Io { path: "features".into(), source })
}

pub fn write_features<T: crate::Scalar>(path: &Path, samples: &[Sample<T>]) -> Result<(), RecordError> {
    write_features_to(create(path)?, samples)
}

pub fn read_features_from<R: Read, T: crate::Scalar>(input: R) -> Result<Vec<Sample<T>>, RecordError> {
    let mut out: Vec<Sample<T>> = Vec::new();
    for record in reader(input).records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        if let Some(first) = out.first() {
            expect_columns(&record, &[first.features.len() + 1])?;
        }
        let raw: u8 = field(&record, 0, "label")?;
        let label = Label::from_binary(raw)
            .ok_or_else(|| RecordError::Parse { line, message: format!("label must be 0 or 1, got {raw}") })?;
        let features = (1..record.len()).map(|i| field(&record, i, "feature")).collect::<Result<Vec<T>, _>>()?;
        out.push(Sample::new(features, label));
    }
    Ok(out)
}

pub fn read_features<T: crate::Scalar>(path: &Path) -> Result<Vec<Sample<T>>, RecordError> {
    read_features_from(open(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn track_round_trip_recovers_centres() {
        let mut buf = Vec::new();
        {
            let mut w = TrackWriter::new(&mut buf).unwrap();
            w.write(&TrackRecord {
                track_id: 3,
                frame_index: 7,
                bbox: BoundingBox::new(10, 20, 8, 20).unwrap(),
                center: Point::new(14.25, 30.5),
                predicted_center: Point::new(0.0, 0.0),
                score: 0.75,
            })
            .unwrap();
            w.flush().unwrap();
        }
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text, "frame,track_id,x,y,width,height,score\n7,3,10.250,20.500,8,20,0.750000\n");
        let hyps = read_tracks_from(buf.as_slice()).unwrap();
        assert_eq!(hyps, vec![Hypothesis { frame_index: 7, hypothesis_id: 3, center: Point::new(14.25, 30.5) }]);
    }

    #[test]
    fn ground_truth_both_layouts() {
        let gt = read_ground_truth_from("frame,object_id,x,y\n1,2,5.5,6\n".as_bytes()).unwrap();
        assert_eq!(gt[0].center, Point::new(5.5, 6.0));
        let gt = read_ground_truth_from("frame,object_id,x,y,width,height\n1,2,4,6,8,20\n".as_bytes()).unwrap();
        assert_eq!(gt[0].center, Point::new(8.0, 16.0));
        let err = read_ground_truth_from("frame,object_id,x,y\n1,2,5\n".as_bytes()).unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
        assert!(read_ground_truth_from("frame,object_id,x,y\n1,a,5,6\n".as_bytes()).is_err());
    }

    #[test]
    fn features_round_trip_exactly() {
        let samples = vec![
            Sample::new(vec![0.1_f64, 1.0 / 3.0], Label::Pedestrian),
            Sample::new(vec![0.0, 2.5e-17], Label::Background),
        ];
        let mut buf = Vec::new();
        write_features_to(&mut buf, &samples).unwrap();
        let back: Vec<Sample<f64>> = read_features_from(buf.as_slice()).unwrap();
        assert_eq!(back, samples);
        assert!(read_features_from::<_, f64>("label,f0\n2,0.5\n".as_bytes()).is_err());
        assert!(read_features_from::<_, f64>("label,f0\n1,0.5\n0,0.5,0.5\n".as_bytes()).is_err());
    }

    #[test]
    fn detections_round_trip() {
        let d = Detection { frame_index: 2, bbox: BoundingBox::new(1, 2, 3, 4).unwrap(), score: 0.5 };
        let mut buf = Vec::new();
        {
            let mut w = DetectionWriter::new(&mut buf).unwrap();
            w.write(&d).unwrap();
            w.flush().unwrap();
        }
        assert_eq!(read_detections_from(buf.as_slice()).unwrap(), vec![d]);
    }
}
