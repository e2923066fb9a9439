use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, mismatch, Result};
use crate::model::{train_classifier, ClassifierOptions, RecognitionModel};
use crate::network::TrainReport;
use crate::skeleton::{extract_random_windows, PartitionScheme, SkeletonSequence};

/// State 0 is idle in both modes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectorMode {
    /// States 0 (idle) and 1 (active).
    Binary,
    /// State `c + 1` for motion class `c`.
    Multiclass,
}

impl DetectorMode {
    /// Detector state for a per-frame label (0 idle, `c + 1` for class `c`).
    pub fn state_of(self, frame_label: u32) -> u32 {
        match self {
            DetectorMode::Binary => frame_label.min(1),
            DetectorMode::Multiclass => frame_label,
        }
    }
}

/// A window classifier over kinetic states.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectorModel {
    pub mode: DetectorMode,
    pub ws: usize,
    pub model: RecognitionModel,
}

impl DetectorModel {
    pub fn validate(&self) -> Result<()> {
        if self.ws < 2 {
            return Err(invalid("detector window size must be at least 2"));
        }
        self.model.validate()?;
        let classes = self.model.gallery.classes();
        if classes.len() < 2 {
            return Err(invalid("detector gallery needs at least two states"));
        }
        if self.mode == DetectorMode::Binary && classes.iter().any(|&c| c > 1) {
            return Err(invalid("binary detector gallery holds states other than idle and active"));
        }
        Ok(())
    }
}

/// Names for detector states given the motion class names.
pub fn state_names(mode: DetectorMode, class_names: &[String]) -> Vec<String> {
    match mode {
        DetectorMode::Binary => vec!["idle".into(), "active".into()],
        DetectorMode::Multiclass => std::iter::once("idle".to_string()).chain(class_names.iter().cloned()).collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorOptions {
    pub ws: usize,
    pub mode: DetectorMode,
    pub windows_per_sequence: usize,
    pub classifier: ClassifierOptions,
}

/// Trains a state detector on random fixed-size windows of annotated streams.
/// `frame_labels[i][t]` is 0 for idle frames and `c + 1` for class `c`.
pub fn train_detector(
    streams: &[SkeletonSequence],
    frame_labels: &[Vec<u32>],
    class_names: &[String],
    scheme: PartitionScheme,
    options: &DetectorOptions,
) -> Result<(DetectorModel, TrainReport)> {
    if streams.is_empty() {
        return Err(invalid("no training streams"));
    }
    if streams.len() != frame_labels.len() {
        return Err(mismatch(format!("{} streams but {} label tracks", streams.len(), frame_labels.len())));
    }
    let shortest = streams.iter().map(SkeletonSequence::len).min().unwrap_or(0);
    if options.ws < 2 || options.ws > shortest {
        return Err(invalid(format!("window size {} must lie in 2..={shortest} (shortest stream)", options.ws)));
    }
    let seed = options.classifier.train.seed;
    let windows: Vec<_> = streams
        .par_iter()
        .zip(frame_labels)
        .enumerate()
        .map(|(i, (s, l))| {
            let states: Vec<u32> = l.iter().map(|&x| options.mode.state_of(x)).collect();
            extract_random_windows(s, &states, options.ws, options.windows_per_sequence, seed.wrapping_add(1000 + i as u64))
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    let mut distinct: Vec<u32> = windows.iter().map(|w| w.label).collect();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < 2 {
        return Err(invalid(format!("training windows cover a single state ({:?})", distinct)));
    }
    let labels: Vec<u32> = windows.iter().map(|w| w.label).collect();
    let seqs: Vec<SkeletonSequence> = windows.into_iter().map(|w| w.window).collect();
    let names = state_names(options.mode, class_names);
    if let Some(&top) = distinct.last() {
        if top as usize >= names.len() {
            return Err(invalid(format!("state {top} has no class name")));
        }
    }
    let (model, report) = train_classifier(&seqs, &labels, names, scheme, &options.classifier)?;
    let detector = DetectorModel {
        mode: options.mode,
        ws: options.ws,
        model,
    };
    detector.validate()?;
    Ok((detector, report))
}

/// Kinetic state of one window of exactly `ws` frames.
pub fn detect_window(model: &DetectorModel, window: &SkeletonSequence) -> Result<u32> {
    if window.len() != model.ws {
        return Err(mismatch(format!("window of {} frames for a detector with ws={}", window.len(), model.ws)));
    }
    model.model.classify(window)
}
