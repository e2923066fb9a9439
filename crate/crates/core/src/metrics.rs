//! Segmentation and recognition scores, and parameter sweeps.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, mismatch, Error, Result};
use crate::online::{segments_from_events, state_samples, DetectorEvent};
use crate::skeleton::dominant_label;

/// Half-open frame interval `[start, end)` with a motion class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Segment {
    pub start: usize,
    pub end: usize,
    pub class: u32,
}

impl Segment {
    pub fn new(start: usize, end: usize, class: u32) -> Self {
        Segment { start, end, class }
    }

    pub fn len(&self) -> usize {
        self.end.saturating_sub(self.start)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn iou(&self, other: &Segment) -> f64 {
        let inter = self.end.min(other.end).saturating_sub(self.start.max(other.start));
        let union = self.len() + other.len() - inter;
        if union == 0 {
            0.0
        } else {
            inter as f64 / union as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub segments: Vec<Segment>,
    pub total_frames: usize,
}

impl GroundTruth {
    pub fn new(segments: Vec<Segment>, total_frames: usize) -> Result<Self> {
        let gt = GroundTruth { segments, total_frames };
        gt.validate()?;
        Ok(gt)
    }

    /// Segments must be non-empty, sorted, disjoint and inside the stream.
    pub fn validate(&self) -> Result<()> {
        let mut prev_end = 0;
        for (i, s) in self.segments.iter().enumerate() {
            if s.start >= s.end {
                return Err(invalid(format!("segment {i} [{}, {}) is empty", s.start, s.end)));
            }
            if s.start < prev_end {
                return Err(invalid(format!("segment {i} overlaps or precedes its predecessor")));
            }
            if s.end > self.total_frames {
                return Err(invalid(format!("segment {i} ends at {} past the stream's {} frames", s.end, self.total_frames)));
            }
            prev_end = s.end;
        }
        Ok(())
    }

    /// Per-frame labels: 0 idle, `c + 1` inside a segment of class `c`.
    pub fn frame_labels(&self) -> Vec<u32> {
        frame_labels(&self.segments, self.total_frames)
    }
}

/// Per-frame labels of a segment list, clipped to `total` frames. Later
/// segments overwrite earlier ones where they overlap.
pub fn frame_labels(segments: &[Segment], total: usize) -> Vec<u32> {
    let mut labels = vec![0; total];
    for s in segments {
        for l in &mut labels[s.start.min(total)..s.end.min(total)] {
            *l = s.class + 1;
        }
    }
    labels
}

/// Mean over ground-truth segments of the best IoU with a same-class
/// prediction.
pub fn jaccard_index(pred: &[Segment], gt: &[Segment]) -> Result<f64> {
    if gt.is_empty() {
        return Err(invalid("jaccard index of an empty ground truth"));
    }
    let total: f64 = gt
        .iter()
        .map(|g| pred.iter().filter(|p| p.class == g.class).map(|p| p.iou(g)).fold(0.0, f64::max))
        .sum();
    Ok(total / gt.len() as f64)
}

/// Greedy one-to-one matching: candidate pairs with IoU ≥ `threshold` (and
/// equal class when `same_class`) are taken by descending IoU, ties broken by
/// ground-truth then prediction index. Returns `(pred, gt, iou)` triples.
pub fn match_segments(pred: &[Segment], gt: &[Segment], threshold: f64, same_class: bool) -> Vec<(usize, usize, f64)> {
    let mut candidates = Vec::new();
    for (gi, g) in gt.iter().enumerate() {
        for (pi, p) in pred.iter().enumerate() {
            if same_class && p.class != g.class {
                continue;
            }
            let iou = p.iou(g);
            if iou > 0.0 && iou >= threshold {
                candidates.push((pi, gi, iou));
            }
        }
    }
    candidates.sort_by(|a, b| b.2.total_cmp(&a.2).then(a.1.cmp(&b.1)).then(a.0.cmp(&b.0)));
    let mut pred_used = vec![false; pred.len()];
    let mut gt_used = vec![false; gt.len()];
    let mut out = Vec::new();
    for (pi, gi, iou) in candidates {
        if !pred_used[pi] && !gt_used[gi] {
            pred_used[pi] = true;
            gt_used[gi] = true;
            out.push((pi, gi, iou));
        }
    }
    out
}

fn f1_from_counts(tp: usize, n_pred: usize, n_gt: usize) -> f64 {
    if tp == 0 {
        return 0.0;
    }
    let p = tp as f64 / n_pred as f64;
    let r = tp as f64 / n_gt as f64;
    2.0 * p * r / (p + r)
}

/// F1 of class-aware greedy IoU matching.
pub fn f1_score(pred: &[Segment], gt: &[Segment], threshold: f64) -> f64 {
    f1_from_counts(match_segments(pred, gt, threshold, true).len(), pred.len(), gt.len())
}

/// Start and end localization scores, averaged over ground truth;
/// unmatched segments score 0.
pub fn sl_el_scores(pred: &[Segment], gt: &[Segment], threshold: f64) -> Result<(f64, f64)> {
    if let Some(g) = gt.iter().find(|g| g.is_empty()) {
        return Err(invalid(format!("zero-length ground-truth segment at frame {}", g.start)));
    }
    if gt.is_empty() {
        return Ok((0.0, 0.0));
    }
    let (mut sl, mut el) = (0.0, 0.0);
    for (pi, gi, _) in match_segments(pred, gt, threshold, true) {
        let (p, g) = (&pred[pi], &gt[gi]);
        let len = g.len() as f64;
        sl += (1.0 - p.start.abs_diff(g.start) as f64 / len).max(0.0);
        el += (1.0 - p.end.abs_diff(g.end) as f64 / len).max(0.0);
    }
    Ok((sl / gt.len() as f64, el / gt.len() as f64))
}

/// `(matched gt / gt, unmatched predictions / predictions)`.
pub fn detection_rate_fp(pred: &[Segment], gt: &[Segment], threshold: f64, same_class: bool) -> (f64, f64) {
    let matched = match_segments(pred, gt, threshold, same_class).len();
    let dr = if gt.is_empty() { 0.0 } else { matched as f64 / gt.len() as f64 };
    let fp = if pred.is_empty() { 0.0 } else { (pred.len() - matched) as f64 / pred.len() as f64 };
    (dr, fp)
}

/// Fraction of frames whose labels agree.
pub fn frame_accuracy(pred: &[u32], gt: &[u32]) -> Result<f64> {
    if pred.len() != gt.len() {
        return Err(mismatch(format!("{} predicted frame labels for {} ground-truth frames", pred.len(), gt.len())));
    }
    if gt.is_empty() {
        return Err(invalid("frame accuracy of an empty labeling"));
    }
    Ok(pred.iter().zip(gt).filter(|(a, b)| a == b).count() as f64 / gt.len() as f64)
}

/// Fraction of detector windows whose state equals the dominant ground-truth
/// state of the frames they cover.
pub fn detection_accuracy(samples: &[(usize, usize, u32)], gt_states: &[u32]) -> Result<f64> {
    if samples.is_empty() {
        return Ok(0.0);
    }
    let mut hits = 0;
    for &(start, end, state) in samples {
        if start >= end || end > gt_states.len() {
            return Err(invalid(format!("window [{start}, {end}) outside {} labeled frames", gt_states.len())));
        }
        if dominant_label(&gt_states[start..end]) == Some(state) {
            hits += 1;
        }
    }
    Ok(hits as f64 / samples.len() as f64)
}

/// Matching rule shared by every metric.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricOptions {
    pub iou_threshold: f64,
    /// Whether detection rate and FP rate require the class to match.
    pub detection_same_class: bool,
}

impl Default for MetricOptions {
    fn default() -> Self {
        MetricOptions {
            iou_threshold: 0.5,
            detection_same_class: false,
        }
    }
}

pub const PROTOCOL: &str = "segments are half-open frame intervals; jaccard = mean over ground truth of best same-class IoU; \
f1, sl_score, el_score use greedy same-class matching by descending IoU with IoU >= iou_threshold; \
sl/el = mean over ground truth of max(0, 1 - |boundary offset| / gt length), unmatched = 0; \
detection_rate = matched gt / gt, fp_rate = unmatched predictions / predictions (class-aware iff detection_same_class); \
prediction_accuracy = per-frame label agreement with idle as a class; \
detection_accuracy = detector windows whose state equals the dominant ground-truth state";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub protocol: String,
    pub options: MetricOptions,
    pub jaccard: f64,
    pub f1: f64,
    pub sl_score: f64,
    pub el_score: f64,
    pub detection_rate: f64,
    pub fp_rate: f64,
    pub prediction_accuracy: f64,
    pub detection_accuracy: f64,
    pub gt_segments: usize,
    pub predicted_segments: usize,
}

impl MetricsReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// One evaluated stream: predictions, detector windows and ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamResult {
    pub predicted: Vec<Segment>,
    /// `(window_start, window_end, state)` of every evaluated window.
    pub samples: Vec<(usize, usize, u32)>,
    pub truth: GroundTruth,
}

impl StreamResult {
    /// Predictions and detector windows read from an engine's event log.
    pub fn from_events(events: &[DetectorEvent], truth: GroundTruth) -> Self {
        StreamResult {
            predicted: segments_from_events(events).iter().map(|s| Segment::new(s.start_frame, s.end_frame, s.class)).collect(),
            samples: state_samples(events),
            truth,
        }
    }
}

/// Scores several streams as one, laid end to end on a shared timeline.
/// `state_of` maps a ground-truth frame label to the detector's state.
pub fn evaluate_streams(streams: &[StreamResult], options: &MetricOptions, state_of: impl Fn(u32) -> u32) -> Result<MetricsReport> {
    let mut pred = Vec::new();
    let mut gt = Vec::new();
    let mut pred_frames = Vec::new();
    let mut gt_frames = Vec::new();
    let mut samples = Vec::new();
    let mut offset = 0;
    for s in streams {
        s.truth.validate()?;
        let shift = |x: &Segment| Segment::new(x.start + offset, x.end + offset, x.class);
        pred.extend(s.predicted.iter().map(shift));
        gt.extend(s.truth.segments.iter().map(shift));
        pred_frames.extend(frame_labels(&s.predicted, s.truth.total_frames));
        gt_frames.extend(s.truth.frame_labels());
        samples.extend(s.samples.iter().map(|&(a, b, st)| (a + offset, b + offset, st)));
        offset += s.truth.total_frames;
    }
    let gt_states: Vec<u32> = gt_frames.iter().map(|&l| state_of(l)).collect();
    let t = options.iou_threshold;
    let (sl, el) = sl_el_scores(&pred, &gt, t)?;
    let (dr, fp) = detection_rate_fp(&pred, &gt, t, options.detection_same_class);
    Ok(MetricsReport {
        protocol: PROTOCOL.to_string(),
        options: *options,
        jaccard: jaccard_index(&pred, &gt)?,
        f1: f1_score(&pred, &gt, t),
        sl_score: sl,
        el_score: el,
        detection_rate: dr,
        fp_rate: fp,
        prediction_accuracy: frame_accuracy(&pred_frames, &gt_frames)?,
        detection_accuracy: detection_accuracy(&samples, &gt_states)?,
        gt_segments: gt.len(),
        predicted_segments: pred.len(),
    })
}

/// One grid point of a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub ws: usize,
    pub refresh: usize,
    pub tests: usize,
    /// Early-classification deadline in seconds, if any.
    pub deadline: Option<f64>,
}

#[derive(Debug)]
pub struct SweepRow {
    pub cell: SweepCell,
    pub result: Result<MetricsReport>,
}

/// Runs every cell (in parallel) and returns rows in grid order. A failing
/// cell records its error and the others still run.
pub fn sweep<F>(cells: &[SweepCell], run: F) -> Vec<SweepRow>
where
    F: Fn(&SweepCell) -> Result<MetricsReport> + Sync,
{
    cells.par_iter().map(|c| SweepRow { cell: *c, result: run(c) }).collect()
}

pub const SWEEP_COLUMNS: [&str; 13] = [
    "ws",
    "refresh",
    "tests",
    "deadline",
    "jaccard",
    "f1",
    "sl_score",
    "el_score",
    "detection_rate",
    "fp_rate",
    "prediction_accuracy",
    "detection_accuracy",
    "error",
];

/// CSV with a header row and one row per cell, in [`SWEEP_COLUMNS`] order.
pub fn sweep_csv(rows: &[SweepRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
    w.write_record(SWEEP_COLUMNS).map_err(io)?;
    for row in rows {
        let c = &row.cell;
        let mut rec = vec![c.ws.to_string(), c.refresh.to_string(), c.tests.to_string(), c.deadline.map(|d| d.to_string()).unwrap_or_default()];
        match &row.result {
            Ok(m) => {
                rec.extend([m.jaccard, m.f1, m.sl_score, m.el_score, m.detection_rate, m.fp_rate, m.prediction_accuracy, m.detection_accuracy].map(|v| format!("{v:.6}")));
                rec.push(String::new());
            }
            Err(e) => {
                rec.extend(std::iter::repeat_n(String::new(), 8));
                rec.push(e.to_string());
            }
        }
        w.write_record(&rec).map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
    Ok(String::from_utf8(bytes).expect("csv of utf-8 fields"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn s(a: usize, b: usize, c: u32) -> Segment {
        Segment::new(a, b, c)
    }

    #[test]
    fn jaccard_examples() {
        let gt = [s(0, 100, 0)];
        assert_eq!(jaccard_index(&gt, &gt).unwrap(), 1.0);
        assert_eq!(jaccard_index(&[s(200, 300, 0)], &gt).unwrap(), 0.0);
        assert!((jaccard_index(&[s(50, 150, 0)], &gt).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(jaccard_index(&[s(0, 100, 1)], &gt).unwrap(), 0.0);
        assert!(jaccard_index(&gt, &[]).is_err());
    }

    #[test]
    fn f1_examples() {
        let gt = [s(0, 100, 0), s(200, 300, 1)];
        assert_eq!(f1_score(&gt, &gt, 0.5), 1.0);
        assert_eq!(f1_score(&[], &gt, 0.5), 0.0);
        assert!((f1_score(&[s(0, 100, 0), s(400, 450, 1)], &gt, 0.5) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn sl_el_examples() {
        let gt = [s(0, 100, 0)];
        assert_eq!(sl_el_scores(&gt, &gt, 0.5).unwrap(), (1.0, 1.0));
        let (sl, el) = sl_el_scores(&[s(10, 90, 0)], &gt, 0.5).unwrap();
        assert!((sl - 0.9).abs() < 1e-15 && (el - 0.9).abs() < 1e-15);
        let (sl, _) = sl_el_scores(&[s(100, 200, 0)], &[s(0, 100, 0)], 0.0).unwrap();
        assert_eq!(sl, 0.0);
        assert!(sl_el_scores(&[], &[s(5, 5, 0)], 0.5).is_err());
    }

    #[test]
    fn detection_examples() {
        let gt = [s(0, 100, 0), s(200, 300, 1), s(400, 500, 2)];
        assert_eq!(detection_rate_fp(&gt, &gt, 0.5, false), (1.0, 0.0));
        assert_eq!(detection_rate_fp(&[], &gt, 0.5, false), (0.0, 0.0));
        let pred = [s(0, 100, 0), s(200, 300, 1), s(700, 800, 0)];
        let (dr, fp) = detection_rate_fp(&pred, &gt, 0.5, false);
        assert!((dr - 2.0 / 3.0).abs() < 1e-15 && (fp - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn frame_accuracy_examples() {
        assert_eq!(frame_accuracy(&[0, 1, 1], &[0, 1, 1]).unwrap(), 1.0);
        assert_eq!(frame_accuracy(&[1, 0, 1], &[0, 1, 0]).unwrap(), 0.0);
        assert!(frame_accuracy(&[0], &[0, 1]).is_err());
    }

    #[test]
    fn ground_truth_validation() {
        assert!(GroundTruth::new(vec![s(0, 10, 0), s(10, 20, 1)], 20).is_ok());
        assert!(GroundTruth::new(vec![s(0, 10, 0), s(5, 20, 1)], 20).is_err());
        assert!(GroundTruth::new(vec![s(0, 30, 0)], 20).is_err());
        assert!(GroundTruth::new(vec![s(3, 3, 0)], 20).is_err());
    }

    #[test]
    fn pooled_streams_offset_time() {
        let a = StreamResult {
            predicted: vec![s(10, 50, 0)],
            samples: vec![(0, 10, 0), (20, 40, 1)],
            truth: GroundTruth::new(vec![s(10, 50, 0)], 60).unwrap(),
        };
        let b = StreamResult {
            predicted: vec![],
            samples: vec![],
            truth: GroundTruth::new(vec![s(0, 30, 1)], 40).unwrap(),
        };
        let r = evaluate_streams(&[a, b], &MetricOptions::default(), |l| l.min(1)).unwrap();
        assert!((r.f1 - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(r.detection_rate, 0.5);
        assert_eq!(r.prediction_accuracy, 70.0 / 100.0);
        assert_eq!(r.detection_accuracy, 1.0);
    }

    #[test]
    fn sweep_keeps_grid_order_and_errors() {
        let cells: Vec<SweepCell> = (1..=4).map(|k| SweepCell { ws: 10 * k, refresh: 3, tests: 3, deadline: None }).collect();
        let run = |c: &SweepCell| {
            if c.ws == 30 {
                return Err(Error::Config("boom".into()));
            }
            let stream = StreamResult {
                predicted: vec![s(0, c.ws, 0)],
                samples: vec![],
                truth: GroundTruth::new(vec![s(0, 20, 0)], 40).unwrap(),
            };
            evaluate_streams(&[stream], &MetricOptions::default(), |l| l)
        };
        let csv = sweep_csv(&sweep(&cells, run)).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 5);
        assert_eq!(lines[0], SWEEP_COLUMNS.join(","));
        assert!(lines[1].starts_with("10,3,3,,"));
        assert!(lines[3].ends_with("config constraint violated: boom"));
        assert_eq!(csv, sweep_csv(&sweep(&cells, run)).unwrap());
        assert_eq!(sweep(&cells[..1], run).len(), 1);
    }

    fn seg_list() -> impl Strategy<Value = Vec<Segment>> {
        prop::collection::vec((0usize..200, 1usize..60, 0u32..3), 0..8).prop_map(|v| v.into_iter().map(|(a, l, c)| s(a, a + l, c)).collect())
    }

    proptest! {
        #[test]
        fn permutation_invariance(pred in seg_list(), gt in seg_list(), seed in any::<u64>()) {
            prop_assume!(!gt.is_empty());
            let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(seed);
            let (mut p2, mut g2) = (pred.clone(), gt.clone());
            rand::seq::SliceRandom::shuffle(&mut p2[..], &mut rng);
            rand::seq::SliceRandom::shuffle(&mut g2[..], &mut rng);
            prop_assert!((jaccard_index(&pred, &gt).unwrap() - jaccard_index(&p2, &g2).unwrap()).abs() < 1e-12);
            prop_assert_eq!(match_segments(&pred, &gt, 0.5, true).len(), match_segments(&p2, &g2, 0.5, true).len());
            prop_assert_eq!(detection_rate_fp(&pred, &gt, 0.5, false), detection_rate_fp(&p2, &g2, 0.5, false));
        }

        #[test]
        fn localization_scores_are_bounded(pred in seg_list(), gt in seg_list()) {
            let (sl, el) = sl_el_scores(&pred, &gt, 0.1).unwrap();
            prop_assert!((0.0..=1.0).contains(&sl) && (0.0..=1.0).contains(&el));
        }

        #[test]
        fn correcting_a_spurious_prediction_never_hurts(gt in seg_list(), idx in any::<prop::sample::Index>()) {
            prop_assume!(!gt.is_empty());
            let mut gt = gt;
            gt.sort_by_key(|g| g.start);
            // keep a disjoint subset
            let mut kept: Vec<Segment> = Vec::new();
            for g in gt {
                if kept.last().is_none_or(|k| g.start >= k.end) {
                    kept.push(g);
                }
            }
            let target = kept[idx.index(kept.len())];
            let mut pred: Vec<Segment> = kept.iter().copied().filter(|g| *g != target).collect();
            pred.push(s(10_000, 10_010, 0));
            let before = (f1_score(&pred, &kept, 0.5), detection_rate_fp(&pred, &kept, 0.5, true).0);
            *pred.last_mut().unwrap() = target;
            let after = (f1_score(&pred, &kept, 0.5), detection_rate_fp(&pred, &kept, 0.5, true).0);
            prop_assert!(after.0 >= before.0 && after.1 >= before.1);
            prop_assert_eq!(jaccard_index(&kept, &kept).unwrap(), 1.0);
        }
    }
}
