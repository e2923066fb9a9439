//! Ground-truth motion annotations. Idle is implicit: any frame outside a
//! listed segment.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{GroundTruth, Segment};
use crate::skeleton::SkeletonSequence;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnotatedSegment {
    pub start_frame: usize,
    pub end_frame: usize,
    pub class_name: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnotationFile {
    /// Class dictionary; a class's index is its label.
    pub classes: Vec<String>,
    pub segments: Vec<AnnotatedSegment>,
    pub total_frames: usize,
}

impl AnnotationFile {
    pub fn validate(&self) -> Result<()> {
        for (i, c) in self.classes.iter().enumerate() {
            if self.classes[..i].contains(c) {
                return Err(Error::Parse(format!("class `{c}` listed twice")));
            }
        }
        self.ground_truth().map(|_| ())
    }

    pub fn class_index(&self, name: &str) -> Option<u32> {
        self.classes.iter().position(|c| c == name).map(|i| i as u32)
    }

    pub fn ground_truth(&self) -> Result<GroundTruth> {
        let segments = self
            .segments
            .iter()
            .map(|s| {
                let class = self.class_index(&s.class_name).ok_or_else(|| Error::Parse(format!("unknown class `{}`", s.class_name)))?;
                Ok(Segment::new(s.start_frame, s.end_frame, class))
            })
            .collect::<Result<Vec<_>>>()?;
        GroundTruth::new(segments, self.total_frames).map_err(|e| Error::Parse(format!("annotations: {e}")))
    }

    /// Per-frame labels: 0 idle, `c + 1` for class `c`.
    pub fn frame_labels(&self) -> Result<Vec<u32>> {
        Ok(self.ground_truth()?.frame_labels())
    }

    /// The annotated motions of `seq` with their class labels.
    pub fn extract_segments(&self, seq: &SkeletonSequence) -> Result<Vec<(SkeletonSequence, u32)>> {
        if seq.len() != self.total_frames {
            return Err(Error::DimensionMismatch(format!("annotations cover {} frames, sequence has {}", self.total_frames, seq.len())));
        }
        self.ground_truth()?.segments.iter().map(|s| Ok((seq.slice(s.start..s.end)?, s.class))).collect()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let a: AnnotationFile = serde_json::from_str(text).map_err(|e| Error::Parse(format!("annotations: {e}")))?;
        a.validate()?;
        Ok(a)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("annotations serialize")
    }
}
