//! The SPD network: per-part convolution, the six temporal subsequences, the
//! spatial-temporal and temporal-spatial Gaussian-aggregation branches, the
//! Stiefel-weighted compression, tangent-space vectorization and the fully
//! connected feature layer. Training is Siamese with a contrastive loss.

mod backward;
mod forward;
mod gallery;
mod loss;
mod optim;
mod train;

pub use backward::{backward, backward_feature, Gradients, PairGradients};
pub use forward::{
    conv_forward, forward_partitioned, forward_traced, network_forward, st_ga_forward, ts_ga_forward, ForwardTrace,
};
pub use gallery::{build_gallery, knn_classify, Gallery};
pub use loss::{contrastive_loss, contrastive_loss_grad};
pub use optim::{stiefel_step, tangent_projection};
pub use train::{mean_loss, sample_pairs, train, Pair, PairBatch, TrainConfig, TrainReport};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::skeleton::SUBSEQUENCES;
use crate::spd::{orthonormality_error, vec_len, StiefelWeight, DEFAULT_EPSILON, STIEFEL_TOL};

/// Coordinates per joint.
pub const COORDS: usize = 3;
/// Side of the per-frame / per-joint Gaussian embedding (`COORDS + 1`).
pub const LOCAL_DIM: usize = COORDS + 1;
/// Side of every matrix entering the compression layer: the Gaussian
/// embedding of vectorized `LOCAL_DIM × LOCAL_DIM` matrices.
pub const BRANCH_DIM: usize = vec_len(LOCAL_DIM) + 1;
/// Branches per (part, subsequence): spatial-temporal, temporal-spatial.
pub const BRANCHES: usize = 2;

/// Hyperparameters fixed at initialization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub feature_dim: usize,
    pub spdc_dim: usize,
    pub epsilon: f64,
    pub margin: f64,
    /// Half-width of the uniform perturbation added to the identity-like
    /// initial convolution kernels.
    pub conv_init_scale: f64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            feature_dim: 128,
            spdc_dim: 8,
            epsilon: DEFAULT_EPSILON,
            margin: 1.0,
            conv_init_scale: 0.1,
        }
    }
}

/// 3×3 cross-correlation kernel with bias.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ConvKernel {
    pub weights: [[f64; 3]; 3],
    pub bias: f64,
}

impl ConvKernel {
    pub fn identity() -> Self {
        let mut weights = [[0.0; 3]; 3];
        weights[1][1] = 1.0;
        ConvKernel { weights, bias: 0.0 }
    }

    pub(crate) fn axpy(&mut self, a: f64, other: &ConvKernel) {
        for (r, o) in self.weights.iter_mut().zip(&other.weights) {
            for (x, y) in r.iter_mut().zip(o) {
                *x += a * y;
            }
        }
        self.bias += a * other.bias;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FcLayer {
    pub weight: DMatrix<f64>,
    pub bias: DVector<f64>,
}

/// All learnable parameters plus ε and the contrastive margin.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    /// One kernel per part.
    pub conv: Vec<ConvKernel>,
    /// Indexed by `(part * SUBSEQUENCES + subsequence) * BRANCHES + branch`,
    /// branch 0 spatial-temporal, 1 temporal-spatial.
    pub stiefel: Vec<StiefelWeight>,
    pub fc: FcLayer,
    pub epsilon: f64,
    pub margin: f64,
}

/// Position of a compression input in [`NetworkParams::stiefel`].
pub const fn spdc_index(part: usize, subsequence: usize, branch: usize) -> usize {
    (part * SUBSEQUENCES + subsequence) * BRANCHES + branch
}

impl NetworkParams {
    /// Seeded initialization: near-identity conv kernels, Haar-random Stiefel
    /// weights, Xavier-uniform FC weights and zero biases.
    pub fn init(parts: usize, config: &NetworkConfig, seed: u64) -> Result<Self> {
        if parts == 0 {
            return Err(invalid("network needs at least one part"));
        }
        if config.spdc_dim == 0 || config.spdc_dim > BRANCH_DIM {
            return Err(invalid(format!("spdc_dim must be in 1..={BRANCH_DIM}")));
        }
        if config.feature_dim == 0 {
            return Err(invalid("feature_dim must be positive"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = config.conv_init_scale;
        let conv = (0..parts)
            .map(|_| {
                let mut k = ConvKernel::identity();
                for row in &mut k.weights {
                    for w in row {
                        if s > 0.0 {
                            *w += rng.random_range(-s..s);
                        }
                    }
                }
                k
            })
            .collect();
        let stiefel = (0..parts * SUBSEQUENCES * BRANCHES)
            .map(|_| StiefelWeight::random(config.spdc_dim, BRANCH_DIM, &mut rng))
            .collect::<Result<Vec<_>>>()?;
        let fan_in = vec_len(config.spdc_dim);
        let bound = (6.0 / (fan_in + config.feature_dim) as f64).sqrt();
        let weight = DMatrix::from_fn(config.feature_dim, fan_in, |_, _| rng.random_range(-bound..bound));
        let params = NetworkParams {
            conv,
            stiefel,
            fc: FcLayer {
                weight,
                bias: DVector::zeros(config.feature_dim),
            },
            epsilon: config.epsilon,
            margin: config.margin,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn parts(&self) -> usize {
        self.conv.len()
    }

    pub fn feature_dim(&self) -> usize {
        self.fc.weight.nrows()
    }

    pub fn spdc_dim(&self) -> usize {
        self.stiefel.first().map_or(0, StiefelWeight::rows)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) {
            return Err(invalid("epsilon must be positive"));
        }
        if !(self.margin > 0.0) {
            return Err(invalid("margin must be positive"));
        }
        if self.conv.is_empty() {
            return Err(invalid("network has no parts"));
        }
        let expected = self.parts() * SUBSEQUENCES * BRANCHES;
        if self.stiefel.len() != expected {
            return Err(invalid(format!("{} stiefel weights, expected {expected}", self.stiefel.len())));
        }
        let d_out = self.spdc_dim();
        for (k, w) in self.stiefel.iter().enumerate() {
            if w.rows() != d_out || w.cols() != BRANCH_DIM {
                return Err(invalid(format!("stiefel weight {k} is {}x{}, expected {d_out}x{BRANCH_DIM}", w.rows(), w.cols())));
            }
            let err = orthonormality_error(w.as_matrix());
            if err > STIEFEL_TOL {
                return Err(invalid(format!("stiefel weight {k} lost orthonormality ({err:e})")));
            }
        }
        if self.fc.weight.ncols() != vec_len(d_out) || self.fc.bias.len() != self.fc.weight.nrows() {
            return Err(invalid("fully connected layer shape does not match the compression size"));
        }
        Ok(())
    }
}

/// Output of the feature layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeatureVector(pub Vec<f64>);

impl FeatureVector {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn distance(&self, other: &FeatureVector) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_is_seeded_and_valid() {
        let cfg = NetworkConfig::default();
        let a = NetworkParams::init(4, &cfg, 1).unwrap();
        let b = NetworkParams::init(4, &cfg, 1).unwrap();
        let c = NetworkParams::init(4, &cfg, 2).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.stiefel.len(), 48);
        assert_eq!(a.feature_dim(), 128);
        assert_eq!(a.fc.weight.ncols(), 36);
    }

    #[test]
    fn init_rejects_bad_config() {
        let mut cfg = NetworkConfig::default();
        cfg.spdc_dim = BRANCH_DIM + 1;
        assert!(NetworkParams::init(2, &cfg, 0).is_err());
        assert!(NetworkParams::init(0, &NetworkConfig::default(), 0).is_err());
        let mut p = NetworkParams::init(1, &NetworkConfig::default(), 0).unwrap();
        p.margin = 0.0;
        assert!(p.validate().is_err());
    }
}
