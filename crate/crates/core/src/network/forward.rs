use std::ops::Range;

use nalgebra::{DMatrix, DVector};

use super::{spdc_index, ConvKernel, FeatureVector, NetworkParams, BRANCH_DIM, COORDS};
use crate::error::{mismatch, Result};
use crate::skeleton::{subsequence_spans, PartitionScheme, PartitionedSequence, SkeletonSequence, SUBSEQUENCES};
use crate::spd::{
    congruence_add, gaussian_aggregate, spectral_forward, vec_upper_into, SpdMatrix, SpectralCache, SpectralFn, SymMatrix,
};

/// Same-size 3×3 cross-correlation with zero padding, plus bias, applied to
/// each frame's `m × 3` part matrix.
pub fn conv_forward(part_frames: &[DMatrix<f64>], kernel: &ConvKernel) -> Vec<DMatrix<f64>> {
    part_frames.iter().map(|m| conv_frame(m, kernel)).collect()
}

fn conv_frame(input: &DMatrix<f64>, kernel: &ConvKernel) -> DMatrix<f64> {
    let (rows, cols) = input.shape();
    DMatrix::from_fn(rows, cols, |i, j| {
        let mut acc = kernel.bias;
        for (a, krow) in kernel.weights.iter().enumerate() {
            let Some(r) = (i + a).checked_sub(1).filter(|&r| r < rows) else { continue };
            for (b, &w) in krow.iter().enumerate() {
                if let Some(c) = (j + b).checked_sub(1).filter(|&c| c < cols) {
                    acc += w * input[(r, c)];
                }
            }
        }
        acc
    })
}

fn rows_of(m: &DMatrix<f64>) -> Vec<[f64; COORDS]> {
    (0..m.nrows()).map(|r| [m[(r, 0)], m[(r, 1)], m[(r, 2)]]).collect()
}

/// Gaussian embedding → ReEig → LogEig → VecMap for one sample set.
fn local_descriptor(samples: &[[f64; COORDS]], eps: f64) -> Result<(Vec<f64>, SpectralCache)> {
    let y = gaussian_aggregate(samples)?;
    let (log, cache) = spectral_forward(y.as_matrix(), SpectralFn::ClampLog(eps));
    let mut v = Vec::with_capacity(BRANCH_DIM - 1);
    vec_upper_into(&log, &mut v);
    Ok((v, cache))
}

/// Second Gaussian embedding followed by ReEig.
fn aggregate_rectify<S: AsRef<[f64]>>(samples: &[S], eps: f64) -> Result<(DMatrix<f64>, SpectralCache)> {
    let y = gaussian_aggregate(samples)?;
    Ok(spectral_forward(y.as_matrix(), SpectralFn::Clamp(eps)))
}

/// Spatial-temporal branch on one part subsequence: per-frame statistics of
/// the part's joints, then statistics of those descriptors over time.
pub fn st_ga_forward(part_frames: &[DMatrix<f64>], eps: f64) -> Result<SpdMatrix> {
    let vecs = part_frames
        .iter()
        .map(|m| local_descriptor(&rows_of(m), eps).map(|(v, _)| v))
        .collect::<Result<Vec<_>>>()?;
    let (x, _) = aggregate_rectify(&vecs, eps)?;
    Ok(SpdMatrix::new_unchecked(SymMatrix::symmetrized(x)))
}

/// Temporal-spatial branch: per-joint statistics over time, then statistics
/// of those descriptors over the part's joints.
pub fn ts_ga_forward(part_frames: &[DMatrix<f64>], eps: f64) -> Result<SpdMatrix> {
    let (vecs, _) = ts_joint_descriptors(part_frames, eps)?;
    let (x, _) = aggregate_rectify(&vecs, eps)?;
    Ok(SpdMatrix::new_unchecked(SymMatrix::symmetrized(x)))
}

fn ts_joint_descriptors(part_frames: &[DMatrix<f64>], eps: f64) -> Result<(Vec<Vec<f64>>, Vec<SpectralCache>)> {
    let joints = part_frames.first().map_or(0, DMatrix::nrows);
    let mut vecs = Vec::with_capacity(joints);
    let mut caches = Vec::with_capacity(joints);
    for j in 0..joints {
        let traj: Vec<[f64; COORDS]> = part_frames.iter().map(|m| [m[(j, 0)], m[(j, 1)], m[(j, 2)]]).collect();
        let (v, c) = local_descriptor(&traj, eps)?;
        vecs.push(v);
        caches.push(c);
    }
    if joints == 0 {
        return Err(crate::error::Error::EmptyAggregation);
    }
    Ok((vecs, caches))
}

pub(super) struct StTrace {
    pub span: Range<usize>,
    pub cache: SpectralCache,
}

pub(super) struct TsTrace {
    pub span: Range<usize>,
    pub joint_vecs: Vec<Vec<f64>>,
    pub joint_caches: Vec<SpectralCache>,
    pub cache: SpectralCache,
}

pub(super) struct PartTrace {
    pub input: Vec<DMatrix<f64>>,
    pub conv_out: Vec<DMatrix<f64>>,
    /// Spatial descriptor per frame, shared by every subsequence containing it.
    pub frame_vecs: Vec<Vec<f64>>,
    pub frame_caches: Vec<SpectralCache>,
    pub st: Vec<StTrace>,
    pub ts: Vec<TsTrace>,
}

/// Intermediate values kept for the backward pass.
pub struct ForwardTrace {
    pub(super) parts: Vec<PartTrace>,
    /// Compression inputs, indexed like [`NetworkParams::stiefel`].
    pub(super) inputs: Vec<DMatrix<f64>>,
    pub(super) top: SpectralCache,
    pub(super) tangent: DVector<f64>,
    pub feature: FeatureVector,
}

impl ForwardTrace {
    /// Every matrix that came out of a ReEig stage.
    pub fn rectified_matrices(&self) -> impl Iterator<Item = &DMatrix<f64>> {
        self.inputs.iter()
    }

    /// Eigenvalues of the matrices right after each ReEig stage (the
    /// per-frame and per-joint ones, and the branch outputs).
    pub fn rectified_eigenvalues(&self) -> Vec<f64> {
        let clamp = |c: &SpectralCache| -> Vec<f64> {
            let eps = match c.func {
                SpectralFn::Clamp(e) | SpectralFn::ClampLog(e) => e,
                _ => f64::NEG_INFINITY,
            };
            c.eigen.values.iter().map(|l| l.max(eps)).collect()
        };
        let mut out = Vec::new();
        for p in &self.parts {
            p.frame_caches.iter().for_each(|c| out.extend(clamp(c)));
            p.st.iter().for_each(|s| out.extend(clamp(&s.cache)));
            for t in &p.ts {
                t.joint_caches.iter().for_each(|c| out.extend(clamp(c)));
                out.extend(clamp(&t.cache));
            }
        }
        out
    }

    pub fn spdc_input_count(&self) -> usize {
        self.inputs.len()
    }
}

fn part_trace(part_frames: &[DMatrix<f64>], kernel: &ConvKernel, eps: f64) -> Result<PartTrace> {
    let conv_out = conv_forward(part_frames, kernel);
    let spans = subsequence_spans(conv_out.len()).map_err(|e| e.in_stage("split"))?;

    let mut frame_vecs = Vec::with_capacity(conv_out.len());
    let mut frame_caches = Vec::with_capacity(conv_out.len());
    for m in &conv_out {
        let (v, c) = local_descriptor(&rows_of(m), eps).map_err(|e| e.in_stage("st_ga"))?;
        frame_vecs.push(v);
        frame_caches.push(c);
    }

    let mut st = Vec::with_capacity(SUBSEQUENCES);
    let mut ts = Vec::with_capacity(SUBSEQUENCES);
    for span in spans {
        let (_, cache) = aggregate_rectify(&frame_vecs[span.clone()], eps).map_err(|e| e.in_stage("st_ga"))?;
        st.push(StTrace { span: span.clone(), cache });

        let (joint_vecs, joint_caches) =
            ts_joint_descriptors(&conv_out[span.clone()], eps).map_err(|e| e.in_stage("ts_ga"))?;
        let (_, cache) = aggregate_rectify(&joint_vecs, eps).map_err(|e| e.in_stage("ts_ga"))?;
        ts.push(TsTrace {
            span,
            joint_vecs,
            joint_caches,
            cache,
        });
    }
    Ok(PartTrace {
        input: part_frames.to_vec(),
        conv_out,
        frame_vecs,
        frame_caches,
        st,
        ts,
    })
}

/// Forward pass that keeps everything needed by [`super::backward_feature`].
pub fn forward_traced(seq: &PartitionedSequence, params: &NetworkParams) -> Result<ForwardTrace> {
    if seq.parts.len() != params.parts() {
        return Err(mismatch(format!("sequence has {} parts, network expects {}", seq.parts.len(), params.parts())));
    }
    let eps = params.epsilon;
    let parts = seq
        .parts
        .iter()
        .zip(&params.conv)
        .map(|(frames, kernel)| part_trace(frames, kernel, eps))
        .collect::<Result<Vec<_>>>()?;

    let mut inputs = vec![DMatrix::zeros(0, 0); params.stiefel.len()];
    for (p, part) in parts.iter().enumerate() {
        for s in 0..SUBSEQUENCES {
            inputs[spdc_index(p, s, 0)] = part.st[s].cache.eigen.map(|l| part.st[s].cache.func.value(l));
            inputs[spdc_index(p, s, 1)] = part.ts[s].cache.eigen.map(|l| part.ts[s].cache.func.value(l));
        }
    }

    let d_out = params.spdc_dim();
    let mut compressed = DMatrix::zeros(d_out, d_out);
    for (x, w) in inputs.iter().zip(&params.stiefel) {
        congruence_add(&mut compressed, w.as_matrix(), x);
    }
    let compressed = SymMatrix::symmetrized(compressed);
    let lmin = compressed.eigen().min();
    if !(lmin > 0.0) {
        return Err(crate::error::Error::NotPositiveDefinite(lmin).in_stage("log_eig"));
    }
    let (log, top) = spectral_forward(compressed.as_matrix(), SpectralFn::Log);
    let mut tangent = Vec::with_capacity(params.fc.weight.ncols());
    vec_upper_into(&log, &mut tangent);
    let tangent = DVector::from_vec(tangent);
    let y = &params.fc.weight * &tangent + &params.fc.bias;
    if y.iter().any(|v| !v.is_finite()) {
        return Err(crate::error::invalid("non-finite feature").in_stage("fc"));
    }
    Ok(ForwardTrace {
        parts,
        inputs,
        top,
        tangent,
        feature: FeatureVector(y.iter().copied().collect()),
    })
}

pub fn forward_partitioned(seq: &PartitionedSequence, params: &NetworkParams) -> Result<FeatureVector> {
    forward_traced(seq, params).map(|t| t.feature)
}

/// Full pipeline on a preprocessed sequence.
pub fn network_forward(seq: &SkeletonSequence, scheme: &PartitionScheme, params: &NetworkParams) -> Result<FeatureVector> {
    let parted = PartitionedSequence::new(seq, scheme).map_err(|e| e.in_stage("partition"))?;
    forward_partitioned(&parted, params)
}
