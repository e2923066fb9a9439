//! Recognition models: preprocessing, a trained network and its gallery.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, mismatch, Result};
use crate::network::{build_gallery, forward_partitioned, knn_classify, sample_pairs, train, FeatureVector, Gallery, NetworkConfig, NetworkParams, TrainConfig, TrainReport};
use crate::skeleton::{derivative, interpolate, normalize, JointLayout, PartitionScheme, PartitionedSequence, SkeletonSequence};

/// How a raw sequence becomes network input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Preprocess {
    /// Fixed length every input is resampled to.
    pub frames: usize,
    /// Feed joint velocities instead of positions.
    pub derivative: bool,
}

impl Default for Preprocess {
    fn default() -> Self {
        Preprocess { frames: 24, derivative: false }
    }
}

impl Preprocess {
    pub fn validate(&self) -> Result<()> {
        if self.frames < crate::skeleton::SUBSEQUENCES {
            return Err(invalid(format!("preprocessing length must be at least {} frames", crate::skeleton::SUBSEQUENCES)));
        }
        Ok(())
    }

    pub fn apply(&self, seq: &SkeletonSequence) -> Result<SkeletonSequence> {
        if self.derivative {
            let n = normalize(seq)?;
            derivative(&interpolate(&n, self.frames + 1)?)
        } else {
            normalize(&interpolate(seq, self.frames)?)
        }
    }
}

/// A network, its partition scheme and a labeled feature gallery.
#[derive(Debug, Clone, PartialEq)]
pub struct RecognitionModel {
    pub layout: JointLayout,
    pub scheme: PartitionScheme,
    pub preprocess: Preprocess,
    pub params: NetworkParams,
    pub gallery: Gallery,
    /// Names indexed by gallery label.
    pub class_names: Vec<String>,
}

impl RecognitionModel {
    pub fn validate(&self) -> Result<()> {
        self.layout.validate()?;
        self.scheme.validate(self.layout.joint_count)?;
        self.preprocess.validate()?;
        self.params.validate()?;
        if self.params.parts() != self.scheme.len() {
            return Err(mismatch(format!("network has {} parts, scheme has {}", self.params.parts(), self.scheme.len())));
        }
        if let Some(d) = self.gallery.dim() {
            if d != self.params.feature_dim() {
                return Err(mismatch(format!("gallery dimension {d} differs from feature dimension {}", self.params.feature_dim())));
            }
        }
        if let Some(&l) = self.gallery.classes().last() {
            if l as usize >= self.class_names.len() {
                return Err(invalid(format!("gallery label {l} has no class name")));
            }
        }
        Ok(())
    }

    pub fn prepare(&self, seq: &SkeletonSequence) -> Result<PartitionedSequence> {
        if seq.joint_count() != self.layout.joint_count {
            return Err(mismatch(format!("sequence has {} joints, model expects {}", seq.joint_count(), self.layout.joint_count)));
        }
        PartitionedSequence::new(&self.preprocess.apply(seq)?, &self.scheme)
    }

    pub fn features(&self, seq: &SkeletonSequence) -> Result<FeatureVector> {
        forward_partitioned(&self.prepare(seq)?, &self.params)
    }

    pub fn classify(&self, seq: &SkeletonSequence) -> Result<u32> {
        knn_classify(&self.features(seq)?, &self.gallery)
    }

    pub fn class_name(&self, label: u32) -> Option<&str> {
        self.class_names.get(label as usize).map(String::as_str)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassifierOptions {
    pub preprocess: Preprocess,
    pub network: NetworkConfig,
    pub train: TrainConfig,
    /// Pairs drawn per training run.
    pub pairs: usize,
    pub positive_ratio: f64,
}

impl Default for ClassifierOptions {
    fn default() -> Self {
        ClassifierOptions {
            preprocess: Preprocess::default(),
            network: NetworkConfig {
                feature_dim: 32,
                ..NetworkConfig::default()
            },
            train: TrainConfig::default(),
            pairs: 400,
            positive_ratio: 0.5,
        }
    }
}

/// Trains a Siamese network on labeled sequences and stores their features
/// as the gallery.
pub fn train_classifier(
    sequences: &[SkeletonSequence],
    labels: &[u32],
    class_names: Vec<String>,
    scheme: PartitionScheme,
    options: &ClassifierOptions,
) -> Result<(RecognitionModel, TrainReport)> {
    if sequences.is_empty() {
        return Err(invalid("no training sequences"));
    }
    if sequences.len() != labels.len() {
        return Err(mismatch(format!("{} sequences but {} labels", sequences.len(), labels.len())));
    }
    options.preprocess.validate()?;
    let layout = sequences[0].layout().clone();
    if sequences.iter().any(|s| s.joint_count() != layout.joint_count) {
        return Err(mismatch("training sequences disagree on joint count"));
    }
    scheme.validate(layout.joint_count)?;
    if let Some(&l) = labels.iter().max() {
        if l as usize >= class_names.len() {
            return Err(invalid(format!("label {l} has no class name")));
        }
    }

    let dataset = sequences
        .par_iter()
        .map(|s| PartitionedSequence::new(&options.preprocess.apply(s)?, &scheme))
        .collect::<Result<Vec<_>>>()?;
    let init = NetworkParams::init(scheme.len(), &options.network, options.train.seed)?;
    let pairs = sample_pairs(labels, options.pairs, options.positive_ratio, options.train.seed.wrapping_add(1))?;
    let (params, report) = train(&dataset, &pairs, init, &options.train)?;
    let gallery = build_gallery(&dataset, labels, &params)?;
    let model = RecognitionModel {
        layout,
        scheme,
        preprocess: options.preprocess,
        params,
        gallery,
        class_names,
    };
    model.validate()?;
    Ok((model, report))
}
