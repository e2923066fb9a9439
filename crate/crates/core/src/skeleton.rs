//! Skeleton sequences and the transformations applied before the network:
//! normalization, resampling, derivatives, part partitioning, the six-way
//! temporal split and random window extraction for detector training.

use std::ops::Range;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, mismatch, Error, Result};

/// One frame: a 3D coordinate per joint.
pub type Frame = Vec<[f64; 3]>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayoutKind {
    Hand,
    Body,
    Custom,
}

/// Joint-index conventions shipped with the crate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Convention {
    /// 22-joint hand: 0 wrist, 1 palm, then four joints (base to tip) for
    /// each of thumb 2–5, index 6–9, middle 10–13, ring 14–17, pinky 18–21.
    Hand22,
    /// 25-joint Kinect v2 body.
    Body25,
    /// 20-joint Kinect v1 body.
    Body20,
}

impl Convention {
    pub fn joint_count(self) -> usize {
        match self {
            Convention::Hand22 => 22,
            Convention::Body25 => 25,
            Convention::Body20 => 20,
        }
    }

    pub fn kind(self) -> LayoutKind {
        match self {
            Convention::Hand22 => LayoutKind::Hand,
            Convention::Body25 | Convention::Body20 => LayoutKind::Body,
        }
    }

    /// Joint placed at the origin by [`normalize`].
    pub fn root(self) -> usize {
        0
    }

    /// Bones of the skeleton graph.
    pub fn bones(self) -> &'static [(usize, usize)] {
        match self {
            Convention::Hand22 => &[
                (0, 1),
                (1, 2), (2, 3), (3, 4), (4, 5),
                (1, 6), (6, 7), (7, 8), (8, 9),
                (1, 10), (10, 11), (11, 12), (12, 13),
                (1, 14), (14, 15), (15, 16), (16, 17),
                (1, 18), (18, 19), (19, 20), (20, 21),
            ],
            Convention::Body25 => &[
                (3, 2), (2, 20), (20, 1), (1, 0),
                (20, 4), (4, 5), (5, 6), (6, 7), (7, 21), (7, 22),
                (20, 8), (8, 9), (9, 10), (10, 11), (11, 23), (11, 24),
                (0, 12), (12, 13), (13, 14), (14, 15),
                (0, 16), (16, 17), (17, 18), (18, 19),
            ],
            Convention::Body20 => &[
                (3, 2), (2, 1), (1, 0),
                (2, 4), (4, 5), (5, 6), (6, 7),
                (2, 8), (8, 9), (9, 10), (10, 11),
                (0, 12), (12, 13), (13, 14), (14, 15),
                (0, 16), (16, 17), (17, 18), (18, 19),
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointLayout {
    pub joint_count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub names: Option<Vec<String>>,
    pub kind: LayoutKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub convention: Option<Convention>,
    #[serde(default)]
    pub root: usize,
}

impl JointLayout {
    pub fn from_convention(convention: Convention) -> Self {
        JointLayout {
            joint_count: convention.joint_count(),
            names: None,
            kind: convention.kind(),
            convention: Some(convention),
            root: convention.root(),
        }
    }

    pub fn hand22() -> Self {
        Self::from_convention(Convention::Hand22)
    }

    pub fn body25() -> Self {
        Self::from_convention(Convention::Body25)
    }

    pub fn body20() -> Self {
        Self::from_convention(Convention::Body20)
    }

    pub fn custom(joint_count: usize) -> Result<Self> {
        let layout = JointLayout {
            joint_count,
            names: None,
            kind: LayoutKind::Custom,
            convention: None,
            root: 0,
        };
        layout.validate()?;
        Ok(layout)
    }

    pub fn validate(&self) -> Result<()> {
        if self.joint_count < 2 {
            return Err(invalid(format!("layout needs at least 2 joints, got {}", self.joint_count)));
        }
        if self.root >= self.joint_count {
            return Err(invalid(format!("root joint {} out of range", self.root)));
        }
        if let Some(names) = &self.names {
            if names.len() != self.joint_count {
                return Err(mismatch(format!("{} joint names for {} joints", names.len(), self.joint_count)));
            }
        }
        if let Some(c) = self.convention {
            if c.joint_count() != self.joint_count || c.kind() != self.kind {
                return Err(invalid(format!("layout does not match convention {c:?}")));
            }
        }
        Ok(())
    }
}

/// An ordered skeleton recording.
#[derive(Debug, Clone, PartialEq)]
pub struct SkeletonSequence {
    frames: Vec<Frame>,
    capture_rate: f64,
    layout: JointLayout,
}

impl SkeletonSequence {
    pub fn new(frames: Vec<Frame>, capture_rate: f64, layout: JointLayout) -> Result<Self> {
        layout.validate()?;
        if !(capture_rate > 0.0 && capture_rate.is_finite()) {
            return Err(invalid("capture rate must be positive"));
        }
        if frames.is_empty() {
            return Err(invalid("sequence must contain at least one frame"));
        }
        for (t, f) in frames.iter().enumerate() {
            if f.len() != layout.joint_count {
                return Err(mismatch(format!("frame {t} has {} joints, layout has {}", f.len(), layout.joint_count)));
            }
            if f.iter().flatten().any(|v| !v.is_finite()) {
                return Err(invalid(format!("frame {t} has non-finite coordinates")));
            }
        }
        Ok(SkeletonSequence { frames, capture_rate, layout })
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn capture_rate(&self) -> f64 {
        self.capture_rate
    }

    pub fn layout(&self) -> &JointLayout {
        &self.layout
    }

    pub fn joint_count(&self) -> usize {
        self.layout.joint_count
    }

    /// Frames `[range.start, range.end)` as a new sequence.
    pub fn slice(&self, range: Range<usize>) -> Result<Self> {
        if range.start >= range.end || range.end > self.len() {
            return Err(invalid(format!("slice {range:?} out of bounds for length {}", self.len())));
        }
        Ok(SkeletonSequence {
            frames: self.frames[range].to_vec(),
            capture_rate: self.capture_rate,
            layout: self.layout.clone(),
        })
    }

    pub fn into_frames(self) -> Vec<Frame> {
        self.frames
    }
}

fn mean_pairwise_distance(frame: &Frame) -> f64 {
    let n = frame.len();
    let mut total = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            let d: f64 = (0..3).map(|k| (frame[i][k] - frame[j][k]).powi(2)).sum();
            total += d.sqrt();
        }
    }
    total / (n * (n - 1) / 2) as f64
}

/// Root-center every frame, then divide by the sequence's mean pairwise joint
/// distance so the average skeleton size is 1.
pub fn normalize(seq: &SkeletonSequence) -> Result<SkeletonSequence> {
    let root = seq.layout.root;
    let size = seq.frames.iter().map(mean_pairwise_distance).sum::<f64>() / seq.len() as f64;
    if !(size > 1e-12) {
        return Err(Error::ZeroSizeSkeleton);
    }
    let frames = seq
        .frames
        .iter()
        .map(|f| {
            let r = f[root];
            f.iter()
                .map(|p| [(p[0] - r[0]) / size, (p[1] - r[1]) / size, (p[2] - r[2]) / size])
                .collect()
        })
        .collect();
    Ok(SkeletonSequence {
        frames,
        capture_rate: seq.capture_rate,
        layout: seq.layout.clone(),
    })
}

/// Linear resampling to exactly `n_frames` uniformly spaced samples. The
/// capture rate is rescaled so the sequence keeps its duration.
pub fn interpolate(seq: &SkeletonSequence, n_frames: usize) -> Result<SkeletonSequence> {
    if n_frames < 1 {
        return Err(invalid("interpolation target must be at least one frame"));
    }
    let len = seq.len();
    if n_frames == len {
        return Ok(seq.clone());
    }
    let joints = seq.joint_count();
    let mut frames = Vec::with_capacity(n_frames);
    for k in 0..n_frames {
        let pos = if n_frames == 1 { 0.0 } else { k as f64 * (len - 1) as f64 / (n_frames - 1) as f64 };
        let lo = (pos.floor() as usize).min(len - 1);
        let hi = (lo + 1).min(len - 1);
        let w = pos - lo as f64;
        let (a, b) = (&seq.frames[lo], &seq.frames[hi]);
        let frame: Frame = (0..joints)
            .map(|j| {
                let mut p = [0.0; 3];
                for c in 0..3 {
                    p[c] = if w == 0.0 { a[j][c] } else { a[j][c] + w * (b[j][c] - a[j][c]) };
                }
                p
            })
            .collect();
        frames.push(frame);
    }
    let capture_rate = if len > 1 && n_frames > 1 {
        seq.capture_rate * (n_frames - 1) as f64 / (len - 1) as f64
    } else {
        seq.capture_rate
    };
    Ok(SkeletonSequence {
        frames,
        capture_rate,
        layout: seq.layout.clone(),
    })
}

/// Forward differences scaled by the capture rate (units per second).
pub fn derivative(seq: &SkeletonSequence) -> Result<SkeletonSequence> {
    if seq.len() < 2 {
        return Err(invalid("derivative needs at least two frames"));
    }
    let cr = seq.capture_rate;
    let frames = seq
        .frames
        .windows(2)
        .map(|w| {
            w[0].iter()
                .zip(&w[1])
                .map(|(a, b)| [(b[0] - a[0]) * cr, (b[1] - a[1]) * cr, (b[2] - a[2]) * cr])
                .collect()
        })
        .collect();
    Ok(SkeletonSequence {
        frames,
        capture_rate: cr,
        layout: seq.layout.clone(),
    })
}

/// Ordered joint-index lists, one per body/hand part.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PartitionScheme {
    pub parts: Vec<Vec<usize>>,
}

impl PartitionScheme {
    pub fn new(parts: Vec<Vec<usize>>, joint_count: usize) -> Result<Self> {
        let scheme = PartitionScheme { parts };
        scheme.validate(joint_count)?;
        Ok(scheme)
    }

    pub fn validate(&self, joint_count: usize) -> Result<()> {
        if self.parts.is_empty() {
            return Err(invalid("partition scheme has no parts"));
        }
        for (p, part) in self.parts.iter().enumerate() {
            if part.is_empty() {
                return Err(invalid(format!("part {p} is empty")));
            }
            if let Some(&bad) = part.iter().find(|&&j| j >= joint_count) {
                return Err(invalid(format!("part {p} references joint {bad} but layout has {joint_count} joints")));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.parts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parts.is_empty()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let scheme: PartitionScheme = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        let max = scheme.parts.iter().flatten().copied().max().unwrap_or(0);
        scheme.validate(max + 1)?;
        Ok(scheme)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("index lists always serialize")
    }
}

/// One part per finger, each chain rooted at the shared palm joint.
pub fn hand_partition(layout: &JointLayout) -> Result<PartitionScheme> {
    if layout.kind != LayoutKind::Hand || layout.convention != Some(Convention::Hand22) {
        return Err(invalid("hand partition needs a hand layout with the 22-joint finger convention"));
    }
    let parts = (0..5).map(|f| std::iter::once(1).chain(2 + 4 * f..6 + 4 * f).collect()).collect();
    PartitionScheme::new(parts, layout.joint_count)
}

/// Four chains: head to right palm, head to left palm, spine plus right leg,
/// spine plus left leg.
pub fn body_partition(layout: &JointLayout) -> Result<PartitionScheme> {
    if layout.kind != LayoutKind::Body {
        return Err(invalid("body partition needs a body layout"));
    }
    let parts: Vec<Vec<usize>> = match layout.convention {
        Some(Convention::Body25) => vec![
            vec![3, 2, 20, 8, 9, 10, 11],
            vec![3, 2, 20, 4, 5, 6, 7],
            vec![20, 1, 0, 16, 17, 18, 19],
            vec![20, 1, 0, 12, 13, 14, 15],
        ],
        Some(Convention::Body20) => vec![
            vec![3, 2, 8, 9, 10, 11],
            vec![3, 2, 4, 5, 6, 7],
            vec![2, 1, 0, 16, 17, 18, 19],
            vec![2, 1, 0, 12, 13, 14, 15],
        ],
        _ => return Err(invalid("body partition needs a known body joint convention")),
    };
    PartitionScheme::new(parts, layout.joint_count)
}

/// The built-in scheme for a layout, if it has one.
pub fn default_partition(layout: &JointLayout) -> Result<PartitionScheme> {
    match layout.kind {
        LayoutKind::Hand => hand_partition(layout),
        LayoutKind::Body => body_partition(layout),
        LayoutKind::Custom => Err(invalid("custom layouts must supply their own partition scheme")),
    }
}

/// Per part, per frame, the `m_p × 3` coordinate matrix of that part's joints.
#[derive(Debug, Clone)]
pub struct PartitionedSequence {
    pub parts: Vec<Vec<DMatrix<f64>>>,
}

impl PartitionedSequence {
    pub fn new(seq: &SkeletonSequence, scheme: &PartitionScheme) -> Result<Self> {
        scheme.validate(seq.joint_count())?;
        let parts = scheme
            .parts
            .iter()
            .map(|joints| {
                seq.frames()
                    .iter()
                    .map(|f| DMatrix::from_fn(joints.len(), 3, |r, c| f[joints[r]][c]))
                    .collect()
            })
            .collect();
        Ok(PartitionedSequence { parts })
    }

    pub fn frame_count(&self) -> usize {
        self.parts.first().map_or(0, Vec::len)
    }
}

/// Number of temporal subsequences fed to the network.
pub const SUBSEQUENCES: usize = 6;

/// `[whole, first half, second half, first third, second third, last third]`
/// with floor boundaries; the last piece of each split absorbs the remainder.
pub fn subsequence_spans(len: usize) -> Result<[Range<usize>; SUBSEQUENCES]> {
    if len < SUBSEQUENCES {
        return Err(invalid(format!("need at least {SUBSEQUENCES} frames to split, got {len}")));
    }
    let h = len / 2;
    let t = len / 3;
    Ok([0..len, 0..h, h..len, 0..t, t..2 * t, 2 * t..len])
}

pub fn split_subsequences(seq: &SkeletonSequence) -> Result<Vec<SkeletonSequence>> {
    subsequence_spans(seq.len())?.into_iter().map(|r| seq.slice(r)).collect()
}

/// Most frequent label. Ties go to the tied label whose first occurrence is
/// latest in the window.
pub fn dominant_label(labels: &[u32]) -> Option<u32> {
    let mut stats: Vec<(u32, usize, usize)> = Vec::new(); // (label, count, first index)
    for (i, &l) in labels.iter().enumerate() {
        match stats.iter_mut().find(|s| s.0 == l) {
            Some(s) => s.1 += 1,
            None => stats.push((l, 1, i)),
        }
    }
    stats.into_iter().max_by(|a, b| a.1.cmp(&b.1).then(a.2.cmp(&b.2))).map(|s| s.0)
}

/// A fixed-length training window with its dominant state.
#[derive(Debug, Clone)]
pub struct LabeledWindow {
    pub window: SkeletonSequence,
    pub label: u32,
    pub start: usize,
    pub end: usize,
}

/// `count` windows of `ws` frames at seeded uniform offsets, each labeled by
/// [`dominant_label`] of the per-frame labels it covers.
pub fn extract_random_windows(
    seq: &SkeletonSequence,
    frame_labels: &[u32],
    ws: usize,
    count: usize,
    seed: u64,
) -> Result<Vec<LabeledWindow>> {
    if ws == 0 || ws > seq.len() {
        return Err(invalid(format!("window size {ws} does not fit a sequence of {} frames", seq.len())));
    }
    if frame_labels.len() != seq.len() {
        return Err(mismatch(format!("{} frame labels for {} frames", frame_labels.len(), seq.len())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let start = rng.random_range(0..=seq.len() - ws);
            let end = start + ws;
            Ok(LabeledWindow {
                window: seq.slice(start..end)?,
                label: dominant_label(&frame_labels[start..end]).expect("window is non-empty"),
                start,
                end,
            })
        })
        .collect()
}
