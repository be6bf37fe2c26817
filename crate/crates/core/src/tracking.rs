//! Track management: Kalman prediction, gated nearest-pair association, and
//! track birth, confirmation and death.

use crate::geometry::{euclidean_distance, BoundingBox, Detection, Point, TrackRecord};
use crate::kalman::{self, KalmanParams, KalmanState, Vector};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackerConfig {
    /// Largest centroid distance at which a detection can update a track.
    pub gate_threshold: f64,
    /// Consecutive unmatched frames a track survives.
    pub max_misses: u32,
    /// Matches (birth included) before a track emits records.
    pub min_hits_to_confirm: u32,
    /// Diagonal of the covariance given to new tracks.
    pub birth_variance: f64,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self { gate_threshold: 220.0, max_misses: 5, min_hits_to_confirm: 3, birth_variance: 10.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    pub id: u64,
    pub kalman: KalmanState<f64>,
    pub last_box: BoundingBox,
    pub last_score: f64,
    /// Frames since birth.
    pub age: u32,
    /// Frames with a matched detection, birth included.
    pub hits: u32,
    /// Consecutive frames without a match.
    pub misses: u32,
    pub history: Vec<TrackRecord>,
}

impl Track {
    pub fn is_confirmed(&self, cfg: &TrackerConfig) -> bool {
        self.hits >= cfg.min_hits_to_confirm
    }

    pub fn center(&self) -> Point {
        let (x, y) = self.kalman.position();
        Point::new(x, y)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Association {
    /// `(track_id, detection index)` in the order they were matched.
    pub matches: Vec<(u64, usize)>,
    pub unmatched_tracks: Vec<u64>,
    pub unmatched_detections: Vec<usize>,
}

/// Greedy nearest-pair matching under a distance gate.
///
/// Repeatedly takes the closest remaining (track, detection) pair whose
/// distance is within `gate`; ties go to the lower track id, then the lower
/// detection index.
pub fn associate(predictions: &[(u64, Point)], detections: &[Point], gate: f64) -> Association {
    let mut pairs: Vec<(f64, u64, usize, usize)> = Vec::new();
    for (ti, &(id, p)) in predictions.iter().enumerate() {
        for (di, &d) in detections.iter().enumerate() {
            let dist = euclidean_distance(p, d);
            if dist <= gate {
                pairs.push((dist, id, di, ti));
            }
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

    let mut track_used = vec![false; predictions.len()];
    let mut det_used = vec![false; detections.len()];
    let mut out = Association::default();
    for (_, id, di, ti) in pairs {
        if !track_used[ti] && !det_used[di] {
            track_used[ti] = true;
            det_used[di] = true;
            out.matches.push((id, di));
        }
    }
    out.unmatched_tracks =
        predictions.iter().zip(&track_used).filter(|(_, &used)| !used).map(|((id, _), _)| *id).collect();
    out.unmatched_detections = (0..detections.len()).filter(|&i| !det_used[i]).collect();
    out
}

/// Collapses detections whose centroids lie within `radius` of a
/// higher-scoring one. Ties keep the earlier detection.
pub fn merge_detections(detections: &[Detection], radius: f64) -> Vec<Detection> {
    let mut order: Vec<usize> = (0..detections.len()).collect();
    order.sort_by(|&a, &b| detections[b].score.total_cmp(&detections[a].score).then(a.cmp(&b)));
    let mut kept: Vec<usize> = Vec::new();
    for i in order {
        let c = detections[i].centroid();
        if kept.iter().all(|&k| euclidean_distance(detections[k].centroid(), c) > radius) {
            kept.push(i);
        }
    }
    kept.sort_unstable();
    kept.into_iter().map(|i| detections[i]).collect()
}

/// Multi-object tracker for one sequence.
#[derive(Debug, Clone)]
pub struct Tracker {
    cfg: TrackerConfig,
    params: KalmanParams<f64>,
    tracks: Vec<Track>,
    next_id: u64,
    keep_history: bool,
}

impl Tracker {
    pub fn new(cfg: TrackerConfig) -> Self {
        Self { cfg, params: KalmanParams::constant_velocity(), tracks: Vec::new(), next_id: 0, keep_history: true }
    }

    pub fn with_kalman_params(mut self, params: KalmanParams<f64>) -> Self {
        self.params = params;
        self
    }

    /// Disables per-track record history, keeping memory flat on long runs.
    pub fn without_history(mut self) -> Self {
        self.keep_history = false;
        self
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.cfg
    }

    pub fn tracks(&self) -> &[Track] {
        &self.tracks
    }

    pub fn confirmed_count(&self) -> usize {
        self.tracks.iter().filter(|t| t.is_confirmed(&self.cfg)).count()
    }

    /// Ids handed out so far.
    pub fn ids_issued(&self) -> u64 {
        self.next_id
    }

    /// Advances every track by one frame and returns the records of confirmed
    /// tracks that were matched in this frame, ordered by track id.
    pub fn step(&mut self, frame_index: u64, detections: &[Detection]) -> Vec<TrackRecord> {
        let cfg = self.cfg;
        let mut predicted = Vec::with_capacity(self.tracks.len());
        for t in &mut self.tracks {
            t.kalman = kalman::predict_free(&t.kalman, &self.params);
            t.age += 1;
            predicted.push(t.center());
        }

        let predictions: Vec<(u64, Point)> = self.tracks.iter().map(|t| (t.id, t.center())).collect();
        let centroids: Vec<Point> = detections.iter().map(Detection::centroid).collect();
        let assoc = associate(&predictions, &centroids, cfg.gate_threshold);

        let mut records = Vec::new();
        for &(id, di) in &assoc.matches {
            let ti = self.tracks.iter().position(|t| t.id == id).expect("matched track exists");
            let det = &detections[di];
            let c = centroids[di];
            let track = &mut self.tracks[ti];
            match kalman::update(&track.kalman, &self.params, &Vector::from_array([c.x, c.y])) {
                Ok(s) => track.kalman = s,
                // A singular innovation can only come from a degenerate R;
                // fall back to the measurement itself.
                Err(e) => {
                    log::warn!("track {id}: {e}; snapping to measurement");
                    track.kalman.x[(0, 0)] = c.x;
                    track.kalman.x[(1, 0)] = c.y;
                }
            }
            track.last_box = det.bbox;
            track.last_score = det.score;
            track.hits += 1;
            track.misses = 0;
            if track.is_confirmed(&cfg) {
                let record = TrackRecord {
                    track_id: id,
                    frame_index,
                    bbox: det.bbox,
                    center: track.center(),
                    predicted_center: predicted[ti],
                    score: det.score,
                };
                if self.keep_history {
                    track.history.push(record);
                }
                records.push(record);
            }
        }

        for id in &assoc.unmatched_tracks {
            if let Some(t) = self.tracks.iter_mut().find(|t| t.id == *id) {
                t.misses += 1;
            }
        }
        self.tracks.retain(|t| t.misses <= cfg.max_misses);

        for &di in &assoc.unmatched_detections {
            let det = &detections[di];
            let c = centroids[di];
            self.tracks.push(Track {
                id: self.next_id,
                kalman: KalmanState::at_rest(c.x, c.y, cfg.birth_variance),
                last_box: det.bbox,
                last_score: det.score,
                age: 0,
                hits: 1,
                misses: 0,
                history: Vec::new(),
            });
            self.next_id += 1;
        }

        records.sort_by_key(|r| r.track_id);
        records
    }
}
