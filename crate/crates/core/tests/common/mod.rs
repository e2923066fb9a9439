#![allow(dead_code)]

pub mod bench;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spd_motion::network::{backward, contrastive_loss, forward_partitioned, NetworkConfig, NetworkParams};
use spd_motion::skeleton::{JointLayout, PartitionScheme, PartitionedSequence, SkeletonSequence};
use spd_motion::spd::StiefelWeight;

/// Random smooth-ish skeleton sequence for a custom layout.
pub fn random_sequence(rng: &mut ChaCha8Rng, frames: usize, joints: usize) -> SkeletonSequence {
    let base: Vec<[f64; 3]> = (0..joints).map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]).collect();
    let vel: Vec<[f64; 3]> = (0..joints).map(|_| [rng.random_range(-0.2..0.2), rng.random_range(-0.2..0.2), rng.random_range(-0.2..0.2)]).collect();
    let frames = (0..frames)
        .map(|t| {
            (0..joints)
                .map(|j| {
                    let mut p = [0.0; 3];
                    for c in 0..3 {
                        p[c] = base[j][c] + vel[j][c] * t as f64 + rng.random_range(-0.15..0.15);
                    }
                    p
                })
                .collect()
        })
        .collect();
    SkeletonSequence::new(frames, 30.0, JointLayout::custom(joints).unwrap()).unwrap()
}

/// Relative error of one parameter group: max entry error over the group's
/// largest magnitude. A group whose analytic gradient is identically zero
/// (the FC bias cancels out of a pair distance) is scaled by `fallback`, the
/// largest gradient entry of the whole network, since its finite differences
/// are pure roundoff.
pub fn group_error(analytic: &[f64], numeric: &[f64], fallback: f64) -> f64 {
    let own = numeric.iter().chain(analytic).fold(0.0f64, |m, v| m.max(v.abs()));
    let scale = if analytic.iter().all(|&a| a == 0.0) { fallback } else { own }.max(1e-8);
    analytic.iter().zip(numeric).map(|(a, n)| (a - n).abs()).fold(0.0, f64::max) / scale
}

pub struct GradCheck {
    pub conv: f64,
    pub stiefel: f64,
    pub fc_weight: f64,
    pub fc_bias: f64,
}

impl GradCheck {
    pub fn max(&self) -> f64 {
        self.conv.max(self.stiefel).max(self.fc_weight).max(self.fc_bias)
    }
}

fn pair_loss(params: &NetworkParams, a: &PartitionedSequence, b: &PartitionedSequence, same: bool) -> f64 {
    let fa = forward_partitioned(a, params).unwrap();
    let fb = forward_partitioned(b, params).unwrap();
    contrastive_loss(&fa, &fb, same, params.margin).unwrap()
}

/// Compares analytic pair gradients against central differences with step `h`
/// for every scalar parameter. Stiefel weights are perturbed as plain
/// matrices (their gradient is the Euclidean one).
pub fn gradient_check(params: &NetworkParams, a: &PartitionedSequence, b: &PartitionedSequence, same: bool, h: f64) -> GradCheck {
    let analytic = backward(params, a, b, same).unwrap().grads;
    let mut global = analytic.fc_weight.amax().max(analytic.fc_bias.amax());
    for k in &analytic.conv {
        global = k.weights.iter().flatten().fold(global.max(k.bias.abs()), |m, v| m.max(v.abs()));
    }
    for w in &analytic.stiefel {
        global = global.max(w.amax());
    }
    let fd = |perturb: &dyn Fn(&mut NetworkParams, f64)| {
        let mut p = params.clone();
        perturb(&mut p, h);
        let up = pair_loss(&p, a, b, same);
        let mut p = params.clone();
        perturb(&mut p, -h);
        let down = pair_loss(&p, a, b, same);
        (up - down) / (2.0 * h)
    };

    let mut an = Vec::new();
    let mut nu = Vec::new();
    for k in 0..params.conv.len() {
        for r in 0..3 {
            for c in 0..3 {
                an.push(analytic.conv[k].weights[r][c]);
                nu.push(fd(&|p, d| p.conv[k].weights[r][c] += d));
            }
        }
        an.push(analytic.conv[k].bias);
        nu.push(fd(&|p, d| p.conv[k].bias += d));
    }
    let conv = group_error(&an, &nu, global);

    let (mut an, mut nu) = (Vec::new(), Vec::new());
    for k in 0..params.stiefel.len() {
        let (rows, cols) = params.stiefel[k].as_matrix().shape();
        for r in 0..rows {
            for c in 0..cols {
                an.push(analytic.stiefel[k][(r, c)]);
                nu.push(fd(&|p, d| {
                    let mut m: DMatrix<f64> = p.stiefel[k].as_matrix().clone();
                    m[(r, c)] += d;
                    p.stiefel[k] = unchecked_stiefel(m);
                }));
            }
        }
    }
    let stiefel = group_error(&an, &nu, global);

    let (mut an, mut nu) = (Vec::new(), Vec::new());
    let (rows, cols) = params.fc.weight.shape();
    for r in 0..rows {
        for c in 0..cols {
            an.push(analytic.fc_weight[(r, c)]);
            nu.push(fd(&|p, d| p.fc.weight[(r, c)] += d));
        }
    }
    let fc_weight = group_error(&an, &nu, global);

    let (mut an, mut nu) = (Vec::new(), Vec::new());
    for r in 0..rows {
        an.push(analytic.fc_bias[r]);
        nu.push(fd(&|p, d| p.fc.bias[r] += d));
    }
    let fc_bias = group_error(&an, &nu, global);

    GradCheck { conv, stiefel, fc_weight, fc_bias }
}

fn unchecked_stiefel(m: DMatrix<f64>) -> StiefelWeight {
    StiefelWeight::from_matrix_unchecked(m)
}

pub fn small_network(parts: usize, spdc_dim: usize, feature_dim: usize, seed: u64) -> NetworkParams {
    let cfg = NetworkConfig {
        feature_dim,
        spdc_dim,
        conv_init_scale: 0.3,
        ..NetworkConfig::default()
    };
    let mut p = NetworkParams::init(parts, &cfg, seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    for k in &mut p.conv {
        k.bias = rng.random_range(-0.2..0.2);
    }
    for b in p.fc.bias.iter_mut() {
        *b = rng.random_range(-0.5..0.5);
    }
    p
}

pub fn partitioned(seq: &SkeletonSequence, scheme: &PartitionScheme) -> PartitionedSequence {
    PartitionedSequence::new(seq, scheme).unwrap()
}
