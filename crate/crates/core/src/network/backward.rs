use nalgebra::{DMatrix, DVector};

use super::forward::{forward_traced, ForwardTrace, PartTrace};
use super::loss::{contrastive_loss, contrastive_loss_grad};
use super::{spdc_index, ConvKernel, FeatureVector, NetworkParams, COORDS, LOCAL_DIM};
use crate::error::{mismatch, Result};
use crate::skeleton::{PartitionedSequence, SUBSEQUENCES};
use crate::spd::{spectral_backward, vec_adjoint, vec_len, GapStats};

/// Gradients shaped like [`NetworkParams`]. Stiefel entries are Euclidean.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub conv: Vec<ConvKernel>,
    pub stiefel: Vec<DMatrix<f64>>,
    pub fc_weight: DMatrix<f64>,
    pub fc_bias: DVector<f64>,
}

impl Gradients {
    pub fn zeros_like(params: &NetworkParams) -> Self {
        Gradients {
            conv: vec![ConvKernel::default(); params.conv.len()],
            stiefel: params.stiefel.iter().map(|w| DMatrix::zeros(w.rows(), w.cols())).collect(),
            fc_weight: DMatrix::zeros(params.fc.weight.nrows(), params.fc.weight.ncols()),
            fc_bias: DVector::zeros(params.fc.bias.len()),
        }
    }

    /// `self += a · other`
    pub fn axpy(&mut self, a: f64, other: &Gradients) {
        for (x, y) in self.conv.iter_mut().zip(&other.conv) {
            x.axpy(a, y);
        }
        for (x, y) in self.stiefel.iter_mut().zip(&other.stiefel) {
            *x += y * a;
        }
        self.fc_weight += &other.fc_weight * a;
        self.fc_bias.axpy(a, &other.fc_bias, 1.0);
    }

    pub fn scale(&mut self, a: f64) {
        for k in &mut self.conv {
            k.weights.iter_mut().flatten().for_each(|w| *w *= a);
            k.bias *= a;
        }
        self.stiefel.iter_mut().for_each(|g| *g *= a);
        self.fc_weight *= a;
        self.fc_bias *= a;
    }

    pub fn max_abs(&self) -> f64 {
        let conv = self.conv.iter().flat_map(|k| k.weights.iter().flatten().chain(std::iter::once(&k.bias)));
        conv.copied()
            .map(f64::abs)
            .chain(self.stiefel.iter().map(|g| g.amax()))
            .chain([self.fc_weight.amax(), self.fc_bias.amax()])
            .fold(0.0, f64::max)
    }
}

/// `dL/dx_k` for the Gaussian embedding `Y = (1/n) Σ [x;1][x;1]ᵀ`, given the
/// symmetric gradient w.r.t. `Y`: `(2/n) (G [x;1])` without its last entry.
fn aggregate_backward_into<'a>(grad: &DMatrix<f64>, samples: impl ExactSizeIterator<Item = &'a [f64]>, mut sink: impl FnMut(usize, &[f64])) {
    let n = samples.len() as f64;
    let d = grad.nrows() - 1;
    let mut out = vec![0.0; d];
    for (k, x) in samples.enumerate() {
        for (i, o) in out.iter_mut().enumerate() {
            let mut acc = grad[(i, d)];
            for (j, xj) in x.iter().enumerate() {
                acc += grad[(i, j)] * xj;
            }
            *o = 2.0 * acc / n;
        }
        sink(k, &out);
    }
}

fn part_backward(part: &PartTrace, spdc_grads: &[DMatrix<f64>], p: usize, stats: &mut GapStats) -> ConvKernel {
    let frames = part.conv_out.len();
    let joints = part.conv_out.first().map_or(0, DMatrix::nrows);
    let local = vec_len(LOCAL_DIM);
    let mut g_frame_vecs = vec![vec![0.0; local]; frames];
    let mut g_conv_out = vec![DMatrix::<f64>::zeros(joints, COORDS); frames];

    for s in 0..SUBSEQUENCES {
        // spatial-temporal: second aggregation runs over the span's frames
        let st = &part.st[s];
        let g = spectral_backward(&st.cache, &spdc_grads[spdc_index(p, s, 0)], stats);
        let samples = part.frame_vecs[st.span.clone()].iter().map(Vec::as_slice);
        let offset = st.span.start;
        aggregate_backward_into(&g, samples, |k, gx| {
            for (a, b) in g_frame_vecs[offset + k].iter_mut().zip(gx) {
                *a += b;
            }
        });

        // temporal-spatial: second aggregation runs over the part's joints
        let ts = &part.ts[s];
        let g = spectral_backward(&ts.cache, &spdc_grads[spdc_index(p, s, 1)], stats);
        let mut g_joint_vecs = vec![vec![0.0; local]; joints];
        aggregate_backward_into(&g, ts.joint_vecs.iter().map(Vec::as_slice), |k, gx| g_joint_vecs[k].copy_from_slice(gx));
        for (j, gv) in g_joint_vecs.iter().enumerate() {
            let g_local = spectral_backward(&ts.joint_caches[j], &vec_adjoint(gv, LOCAL_DIM), stats);
            let traj: Vec<[f64; COORDS]> = part.conv_out[ts.span.clone()]
                .iter()
                .map(|m| [m[(j, 0)], m[(j, 1)], m[(j, 2)]])
                .collect();
            aggregate_backward_into(&g_local, traj.iter().map(|x| x.as_slice()), |k, gx| {
                let m = &mut g_conv_out[ts.span.start + k];
                for c in 0..COORDS {
                    m[(j, c)] += gx[c];
                }
            });
        }
    }

    for t in 0..frames {
        let g_local = spectral_backward(&part.frame_caches[t], &vec_adjoint(&g_frame_vecs[t], LOCAL_DIM), stats);
        let m = &part.conv_out[t];
        let rows: Vec<[f64; COORDS]> = (0..joints).map(|r| [m[(r, 0)], m[(r, 1)], m[(r, 2)]]).collect();
        let gm = &mut g_conv_out[t];
        aggregate_backward_into(&g_local, rows.iter().map(|x| x.as_slice()), |r, gx| {
            for c in 0..COORDS {
                gm[(r, c)] += gx[c];
            }
        });
    }

    let mut gk = ConvKernel::default();
    for (input, gout) in part.input.iter().zip(&g_conv_out) {
        let (rows, cols) = input.shape();
        for i in 0..rows {
            for j in 0..cols {
                let go = gout[(i, j)];
                if go == 0.0 {
                    continue;
                }
                gk.bias += go;
                for a in 0..3 {
                    let Some(r) = (i + a).checked_sub(1).filter(|&r| r < rows) else { continue };
                    for b in 0..3 {
                        if let Some(c) = (j + b).checked_sub(1).filter(|&c| c < cols) {
                            gk.weights[a][b] += go * input[(r, c)];
                        }
                    }
                }
            }
        }
    }
    gk
}

/// Reverse pass from a gradient on the output feature.
pub fn backward_feature(trace: &ForwardTrace, params: &NetworkParams, grad_feature: &[f64], stats: &mut GapStats) -> Result<Gradients> {
    if grad_feature.len() != params.feature_dim() {
        return Err(mismatch(format!("feature gradient of length {} for feature dim {}", grad_feature.len(), params.feature_dim())));
    }
    let gy = DVector::from_column_slice(grad_feature);
    let fc_weight = &gy * trace.tangent.transpose();
    let g_tangent = params.fc.weight.tr_mul(&gy);
    let d_out = params.spdc_dim();
    let g_log = vec_adjoint(g_tangent.as_slice(), d_out);
    let g_compressed = spectral_backward(&trace.top, &g_log, stats);

    let mut stiefel = Vec::with_capacity(params.stiefel.len());
    let mut spdc_grads = Vec::with_capacity(params.stiefel.len());
    for (w, x) in params.stiefel.iter().zip(&trace.inputs) {
        let w = w.as_matrix();
        let gw = &g_compressed * w;
        stiefel.push((&gw * x) * 2.0);
        spdc_grads.push(w.tr_mul(&gw));
    }

    let conv = trace
        .parts
        .iter()
        .enumerate()
        .map(|(p, part)| part_backward(part, &spdc_grads, p, stats))
        .collect();

    Ok(Gradients {
        conv,
        stiefel,
        fc_weight,
        fc_bias: gy,
    })
}

/// Loss and gradients of one Siamese pair.
#[derive(Debug, Clone)]
pub struct PairGradients {
    pub loss: f64,
    pub grads: Gradients,
    pub features: (FeatureVector, FeatureVector),
    pub gaps: GapStats,
}

/// Contrastive-loss gradients for a pair; both branches share `params`.
pub fn backward(params: &NetworkParams, left: &PartitionedSequence, right: &PartitionedSequence, same: bool) -> Result<PairGradients> {
    let tl = forward_traced(left, params)?;
    let tr = forward_traced(right, params)?;
    let loss = contrastive_loss(&tl.feature, &tr.feature, same, params.margin)?;
    let (gl, gr) = contrastive_loss_grad(&tl.feature, &tr.feature, same, params.margin)?;
    let mut gaps = GapStats::default();
    let mut grads = backward_feature(&tl, params, &gl, &mut gaps)?;
    let right_grads = backward_feature(&tr, params, &gr, &mut gaps)?;
    grads.axpy(1.0, &right_grads);
    Ok(PairGradients {
        loss,
        grads,
        features: (tl.feature, tr.feature),
        gaps,
    })
}
