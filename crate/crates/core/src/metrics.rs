//! CLEAR MOT evaluation: per-frame correspondence between ground truth and
//! tracker hypotheses, then MOTP and MOTA.
//!
//! Correspondence per frame:
//! 1. pairs from the previous frame whose objects are both still present and
//!    within the threshold are kept;
//! 2. the remaining objects and hypotheses are matched by an assignment that
//!    maximises the number of pairs, then minimises their total distance.
//!    Up to [`EXACT_ASSIGNMENT_LIMIT`] on both sides this is exhaustive;
//!    above that it is greedy nearest-pair (ties: lower object id, then lower
//!    hypothesis id);
//! 3. a newly matched object whose last matched hypothesis differs counts
//!    one mismatch.
//!
//! Distances are Euclidean between centroids. A pair is admissible when its
//! distance is at most the threshold, so a threshold of 0 admits only
//! coincident points.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use thiserror::Error;

use crate::geometry::{euclidean_distance, Point};

/// Largest side for which new pairs are assigned exhaustively.
pub const EXACT_ASSIGNMENT_LIMIT: usize = 8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("duplicate {kind} id {id} in frame {frame}")]
    DuplicateId { kind: &'static str, frame: u64, id: u64 },
    #[error("no ground-truth objects: MOTA is undefined")]
    NoGroundTruth,
    #[error("distance threshold must be finite and non-negative, got {0}")]
    InvalidThreshold(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroundTruthObject {
    pub frame_index: u64,
    pub object_id: u64,
    pub center: Point,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hypothesis {
    pub frame_index: u64,
    pub hypothesis_id: u64,
    pub center: Point,
}

/// Outcome of one frame.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FrameEvents {
    pub frame_index: u64,
    /// `(object id, hypothesis id, distance)`, sorted by object id.
    pub pairs: Vec<(u64, u64, f64)>,
    pub misses: usize,
    pub false_positives: usize,
    pub mismatches: usize,
    pub gt_count: usize,
}

impl FrameEvents {
    pub fn matches(&self) -> usize {
        self.pairs.len()
    }

    pub fn match_distances(&self) -> impl Iterator<Item = f64> + '_ {
        self.pairs.iter().map(|p| p.2)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MotReport {
    /// Mean match distance; `None` when nothing matched.
    pub motp: Option<f64>,
    pub mota: f64,
    pub miss_rate: f64,
    pub fp_rate: f64,
    pub mismatch_rate: f64,
    pub frames: usize,
    pub gt_total: usize,
    pub matches: usize,
    pub misses: usize,
    pub false_positives: usize,
    pub mismatches: usize,
}

impl MotReport {
    /// `key=value` lines for scripts.
    pub fn key_values(&self) -> String {
        let motp = self.motp.map_or_else(|| "NA".to_string(), |v| format!("{v:.6}"));
        format!(
            "motp={motp}\nmota={:.6}\nmiss_rate={:.6}\nfp_rate={:.6}\nmismatch_rate={:.6}\nframes={}\ngt_total={}\nmatches={}\nmisses={}\nfalse_positives={}\nmismatches={}\n",
            self.mota,
            self.miss_rate,
            self.fp_rate,
            self.mismatch_rate,
            self.frames,
            self.gt_total,
            self.matches,
            self.misses,
            self.false_positives,
            self.mismatches
        )
    }
}

impl fmt::Display for MotReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let motp = self.motp.map_or_else(|| "n/a (no matches)".to_string(), |v| format!("{v:.3} px"));
        writeln!(f, "{:<16}{:>18}", "metric", "value")?;
        writeln!(f, "{:<16}{:>18}", "MOTP", motp)?;
        writeln!(f, "{:<16}{:>17.2}%", "MOTA", self.mota * 100.0)?;
        writeln!(f, "{:<16}{:>17.2}%", "miss rate", self.miss_rate * 100.0)?;
        writeln!(f, "{:<16}{:>17.2}%", "false positives", self.fp_rate * 100.0)?;
        writeln!(f, "{:<16}{:>17.2}%", "mismatches", self.mismatch_rate * 100.0)?;
        write!(
            f,
            "{} frames, {} objects, {} matches, {} misses, {} fp, {} mismatches",
            self.frames, self.gt_total, self.matches, self.misses, self.false_positives, self.mismatches
        )
    }
}

fn frame_map<T: Copy>(
    items: &[T],
    kind: &'static str,
    key: impl Fn(&T) -> (u64, u64, Point),
) -> Result<BTreeMap<u64, Vec<(u64, Point)>>, MetricsError> {
    let mut map: BTreeMap<u64, Vec<(u64, Point)>> = BTreeMap::new();
    let mut seen = BTreeSet::new();
    for item in items {
        let (frame, id, center) = key(item);
        if !seen.insert((frame, id)) {
            return Err(MetricsError::DuplicateId { kind, frame, id });
        }
        map.entry(frame).or_default().push((id, center));
    }
    for objects in map.values_mut() {
        objects.sort_by_key(|o| o.0);
    }
    Ok(map)
}

/// Runs the correspondence over every frame that has ground truth or
/// hypotheses, in increasing frame order.
pub fn establish_correspondence(
    gt: &[GroundTruthObject],
    hyp: &[Hypothesis],
    threshold: f64,
) -> Result<Vec<FrameEvents>, MetricsError> {
    if !threshold.is_finite() || threshold < 0.0 {
        return Err(MetricsError::InvalidThreshold(threshold));
    }
    let gt_frames = frame_map(gt, "ground-truth", |o| (o.frame_index, o.object_id, o.center))?;
    let hyp_frames = frame_map(hyp, "hypothesis", |h| (h.frame_index, h.hypothesis_id, h.center))?;
    let frames: BTreeSet<u64> = gt_frames.keys().chain(hyp_frames.keys()).copied().collect();

    let empty = Vec::new();
    let mut previous: Vec<(u64, u64)> = Vec::new();
    let mut last_match: HashMap<u64, u64> = HashMap::new();
    let mut out = Vec::with_capacity(frames.len());
    for frame in frames {
        let objects = gt_frames.get(&frame).unwrap_or(&empty);
        let hyps = hyp_frames.get(&frame).unwrap_or(&empty);
        let events = correspond_frame(frame, objects, hyps, threshold, &previous, &mut last_match);
        previous = events.pairs.iter().map(|p| (p.0, p.1)).collect();
        out.push(events);
    }
    Ok(out)
}

fn correspond_frame(
    frame: u64,
    objects: &[(u64, Point)],
    hyps: &[(u64, Point)],
    threshold: f64,
    previous: &[(u64, u64)],
    last_match: &mut HashMap<u64, u64>,
) -> FrameEvents {
    let mut obj_used = vec![false; objects.len()];
    let mut hyp_used = vec![false; hyps.len()];
    let mut pairs = Vec::new();

    for &(oid, hid) in previous {
        let oi = objects.iter().position(|o| o.0 == oid);
        let hi = hyps.iter().position(|h| h.0 == hid);
        if let (Some(oi), Some(hi)) = (oi, hi) {
            let d = euclidean_distance(objects[oi].1, hyps[hi].1);
            if d <= threshold {
                obj_used[oi] = true;
                hyp_used[hi] = true;
                pairs.push((oid, hid, d));
            }
        }
    }

    let free_obj: Vec<usize> = (0..objects.len()).filter(|&i| !obj_used[i]).collect();
    let free_hyp: Vec<usize> = (0..hyps.len()).filter(|&i| !hyp_used[i]).collect();
    let mut cost = vec![vec![None; free_hyp.len()]; free_obj.len()];
    for (r, &oi) in free_obj.iter().enumerate() {
        for (c, &hi) in free_hyp.iter().enumerate() {
            let d = euclidean_distance(objects[oi].1, hyps[hi].1);
            if d <= threshold {
                cost[r][c] = Some(d);
            }
        }
    }
    let assignment = if free_obj.len() <= EXACT_ASSIGNMENT_LIMIT && free_hyp.len() <= EXACT_ASSIGNMENT_LIMIT {
        exact_assignment(&cost, free_hyp.len())
    } else {
        greedy_assignment(&cost)
    };

    let mut mismatches = 0;
    for (r, c) in assignment {
        let oid = objects[free_obj[r]].0;
        let hid = hyps[free_hyp[c]].0;
        if last_match.get(&oid).is_some_and(|&prev| prev != hid) {
            mismatches += 1;
        }
        obj_used[free_obj[r]] = true;
        hyp_used[free_hyp[c]] = true;
        pairs.push((oid, hid, cost[r][c].expect("assigned pair is admissible")));
    }
    for &(oid, hid, _) in &pairs {
        last_match.insert(oid, hid);
    }
    pairs.sort_by_key(|p| p.0);

    FrameEvents {
        frame_index: frame,
        misses: objects.len() - pairs.len(),
        false_positives: hyps.len() - pairs.len(),
        mismatches,
        gt_count: objects.len(),
        pairs,
    }
}

/// Exhaustive search for the assignment with the most pairs and, among
/// those, the least total distance. The first optimum in enumeration order
/// wins ties.
fn exact_assignment(cost: &[Vec<Option<f64>>], cols: usize) -> Vec<(usize, usize)> {
    struct Search<'a> {
        cost: &'a [Vec<Option<f64>>],
        used: Vec<bool>,
        current: Vec<(usize, usize)>,
        best: Vec<(usize, usize)>,
        best_sum: f64,
    }

    impl Search<'_> {
        fn run(&mut self, row: usize, sum: f64) {
            if row == self.cost.len() {
                let better = self.current.len() > self.best.len()
                    || (self.current.len() == self.best.len() && sum < self.best_sum);
                if better {
                    self.best = self.current.clone();
                    self.best_sum = sum;
                }
                return;
            }
            // Even matching every remaining row cannot beat the best count.
            if self.current.len() + (self.cost.len() - row) < self.best.len() {
                return;
            }
            for c in 0..self.used.len() {
                if let Some(d) = self.cost[row][c] {
                    if !self.used[c] {
                        self.used[c] = true;
                        self.current.push((row, c));
                        self.run(row + 1, sum + d);
                        self.current.pop();
                        self.used[c] = false;
                    }
                }
            }
            self.run(row + 1, sum);
        }
    }

    let mut search =
        Search { cost, used: vec![false; cols], current: Vec::new(), best: Vec::new(), best_sum: f64::INFINITY };
    search.run(0, 0.0);
    search.best
}

fn greedy_assignment(cost: &[Vec<Option<f64>>]) -> Vec<(usize, usize)> {
    let mut candidates: Vec<(f64, usize, usize)> = cost
        .iter()
        .enumerate()
        .flat_map(|(r, row)| row.iter().enumerate().filter_map(move |(c, d)| d.map(|d| (d, r, c))))
        .collect();
    // rows and columns are already in id order
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut row_used = vec![false; cost.len()];
    let mut col_used = vec![false; cost.first().map_or(0, Vec::len)];
    let mut out = Vec::new();
    for (_, r, c) in candidates {
        if !row_used[r] && !col_used[c] {
            row_used[r] = true;
            col_used[c] = true;
            out.push((r, c));
        }
    }
    out
}

/// Mean distance over all matches, or `None` if there were none.
pub fn motp(events: &[FrameEvents]) -> Option<f64> {
    let matches: usize = events.iter().map(FrameEvents::matches).sum();
    if matches == 0 {
        return None;
    }
    let total: f64 = events.iter().flat_map(FrameEvents::match_distances).sum();
    Some(total / matches as f64)
}

/// Aggregates frame events into a report. MOTA can be negative when errors
/// outnumber ground-truth objects.
pub fn mota(events: &[FrameEvents]) -> Result<MotReport, MetricsError> {
    let gt_total: usize = events.iter().map(|e| e.gt_count).sum();
    if gt_total == 0 {
        return Err(MetricsError::NoGroundTruth);
    }
    let misses: usize = events.iter().map(|e| e.misses).sum();
    let false_positives: usize = events.iter().map(|e| e.false_positives).sum();
    let mismatches: usize = events.iter().map(|e| e.mismatches).sum();
    let g = gt_total as f64;
    Ok(MotReport {
        motp: motp(events),
        mota: 1.0 - (misses + false_positives + mismatches) as f64 / g,
        miss_rate: misses as f64 / g,
        fp_rate: false_positives as f64 / g,
        mismatch_rate: mismatches as f64 / g,
        frames: events.len(),
        gt_total,
        matches: events.iter().map(FrameEvents::matches).sum(),
        misses,
        false_positives,
        mismatches,
    })
}

/// MOTA from already-normalised error rates.
pub fn mota_from_rates(miss_rate: f64, fp_rate: f64, mismatch_rate: f64) -> f64 {
    1.0 - (miss_rate + fp_rate + mismatch_rate)
}

/// Correspondence followed by aggregation.
pub fn evaluate(gt: &[GroundTruthObject], hyp: &[Hypothesis], threshold: f64) -> Result<MotReport, MetricsError> {
    mota(&establish_correspondence(gt, hyp, threshold)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn g(frame: u64, id: u64, x: f64, y: f64) -> GroundTruthObject {
        GroundTruthObject { frame_index: frame, object_id: id, center: Point::new(x, y) }
    }

    fn h(frame: u64, id: u64, x: f64, y: f64) -> Hypothesis {
        Hypothesis { frame_index: frame, hypothesis_id: id, center: Point::new(x, y) }
    }

    #[test]
    fn table_rates() {
        assert!((mota_from_rates(0.108, 0.083, 0.092) - 0.717).abs() < 1e-12);
        assert!((mota_from_rates(0.126, 0.083, 0.123) - 0.668).abs() < 1e-12);
        assert_eq!(mota_from_rates(0.0, 0.0, 0.0), 1.0);
    }

    #[test]
    fn perfect_tracker() {
        let gt: Vec<_> = (0..10).flat_map(|f| [g(f, 1, f as f64, 0.0), g(f, 2, 50.0, f as f64)]).collect();
        let hyp: Vec<_> = gt.iter().map(|o| h(o.frame_index, o.object_id + 10, o.center.x, o.center.y)).collect();
        let events = establish_correspondence(&gt, &hyp, 220.0).unwrap();
        assert_eq!(events.len(), 10);
        for e in &events {
            assert_eq!(e.matches(), e.gt_count);
            assert_eq!((e.misses, e.false_positives, e.mismatches), (0, 0, 0));
        }
        let report = mota(&events).unwrap();
        assert_eq!(report.mota, 1.0);
        assert_eq!(report.motp, Some(0.0));
    }

    #[test]
    fn swap_counts_two_mismatches() {
        let mut gt = Vec::new();
        let mut hyp = Vec::new();
        for f in 0..10u64 {
            gt.push(g(f, 1, 0.0, 0.0));
            gt.push(g(f, 2, 100.0, 0.0));
            let (a, b) = if f < 5 { (7, 8) } else { (8, 7) };
            hyp.push(h(f, a, 0.0, 0.0));
            hyp.push(h(f, b, 100.0, 0.0));
        }
        let report = evaluate(&gt, &hyp, 10.0).unwrap();
        assert_eq!(report.mismatches, 2);
        assert_eq!(report.misses, 0);
        assert_eq!(report.false_positives, 0);
    }

    #[test]
    fn isolated_false_positives() {
        let gt: Vec<_> = (0..3).map(|f| g(f, 1, 0.0, 0.0)).collect();
        let mut hyp: Vec<_> = (0..3).map(|f| h(f, 1, 1.0, 0.0)).collect();
        hyp.extend((0..3).map(|f| h(f, 2, 500.0, 500.0)));
        let report = evaluate(&gt, &hyp, 220.0).unwrap();
        assert_eq!(report.false_positives, 3);
        assert_eq!(report.motp, Some(1.0));
    }

    #[test]
    fn motp_examples() {
        let e = FrameEvents { pairs: vec![(1, 1, 2.0), (2, 2, 4.0)], gt_count: 2, ..Default::default() };
        assert_eq!(motp(&[e]), Some(3.0));
        assert_eq!(motp(&[FrameEvents { gt_count: 1, misses: 1, ..Default::default() }]), None);
    }

    #[test]
    fn negative_mota_with_many_false_positives() {
        let gt = vec![g(0, 1, 0.0, 0.0)];
        let hyp: Vec<_> = (0..5).map(|i| h(0, i, 1000.0 + 300.0 * i as f64, 0.0)).collect();
        let report = evaluate(&gt, &hyp, 220.0).unwrap();
        assert_eq!(report.mota, 1.0 - 6.0);
    }

    #[test]
    fn zero_threshold_needs_coincidence() {
        let gt = vec![g(0, 1, 3.0, 4.0), g(0, 2, 10.0, 10.0)];
        let hyp = vec![h(0, 1, 3.0, 4.0), h(0, 2, 10.0, 10.5)];
        let e = establish_correspondence(&gt, &hyp, 0.0).unwrap();
        assert_eq!(e[0].pairs, vec![(1, 1, 0.0)]);
    }

    #[test]
    fn errors() {
        let gt = vec![g(0, 1, 0.0, 0.0), g(0, 1, 1.0, 0.0)];
        assert_eq!(
            establish_correspondence(&gt, &[], 1.0),
            Err(MetricsError::DuplicateId { kind: "ground-truth", frame: 0, id: 1 })
        );
        assert_eq!(mota(&[]), Err(MetricsError::NoGroundTruth));
        assert!(establish_correspondence(&[], &[], -1.0).is_err());
    }

    #[test]
    fn exact_prefers_more_pairs_over_shorter_distance() {
        // Greedy would take (0,0) at distance 1 and leave row 1 unmatched.
        let cost = vec![vec![Some(1.0), Some(2.0)], vec![Some(1.5), None]];
        assert_eq!(exact_assignment(&cost, 2), vec![(0, 1), (1, 0)]);
        assert_eq!(greedy_assignment(&cost), vec![(0, 0)]);
    }

    #[test]
    fn carried_pair_survives_closer_competitor() {
        let gt = vec![g(0, 1, 0.0, 0.0), g(1, 1, 0.0, 0.0)];
        let hyp = vec![h(0, 5, 3.0, 0.0), h(1, 5, 3.0, 0.0), h(1, 6, 0.0, 0.0)];
        let events = establish_correspondence(&gt, &hyp, 5.0).unwrap();
        assert_eq!(events[1].pairs, vec![(1, 5, 3.0)]);
        assert_eq!(events[1].false_positives, 1);
        assert_eq!(events[1].mismatches, 0);
    }
}
