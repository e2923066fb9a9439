use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{backward, forward_partitioned, contrastive_loss, stiefel_step, Gradients, NetworkParams};
use crate::error::{invalid, Error, Result};
use crate::skeleton::PartitionedSequence;
use crate::spd::GapStats;

/// Two dataset indices and whether they share a class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pair {
    pub left: usize,
    pub right: usize,
    pub same: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PairBatch {
    pub pairs: Vec<Pair>,
}

impl PairBatch {
    pub fn positive_fraction(&self) -> f64 {
        self.pairs.iter().filter(|p| p.same).count() as f64 / self.pairs.len().max(1) as f64
    }
}

/// Seeded pair sampling with exactly `round(count · positive_ratio)` positive
/// pairs; the rest are negatives.
pub fn sample_pairs(labels: &[u32], count: usize, positive_ratio: f64, seed: u64) -> Result<PairBatch> {
    if !(0.0..=1.0).contains(&positive_ratio) {
        return Err(invalid("positive ratio must lie in [0, 1]"));
    }
    let mut classes: Vec<(u32, Vec<usize>)> = Vec::new();
    for (i, &l) in labels.iter().enumerate() {
        match classes.iter_mut().find(|c| c.0 == l) {
            Some(c) => c.1.push(i),
            None => classes.push((l, vec![i])),
        }
    }
    let positives = (count as f64 * positive_ratio).round() as usize;
    let negatives = count - positives;
    if negatives > 0 && classes.len() < 2 {
        return Err(invalid("negative pairs need at least two classes"));
    }
    let multi: Vec<&Vec<usize>> = classes.iter().map(|c| &c.1).filter(|m| m.len() >= 2).collect();
    if positives > 0 && multi.is_empty() {
        return Err(invalid("positive pairs need a class with at least two items"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pairs = Vec::with_capacity(count);
    for _ in 0..positives {
        let members = multi[rng.random_range(0..multi.len())];
        let a = rng.random_range(0..members.len());
        let mut b = rng.random_range(0..members.len() - 1);
        if b >= a {
            b += 1;
        }
        pairs.push(Pair { left: members[a], right: members[b], same: true });
    }
    for _ in 0..negatives {
        let ca = rng.random_range(0..classes.len());
        let mut cb = rng.random_range(0..classes.len() - 1);
        if cb >= ca {
            cb += 1;
        }
        let (ma, mb) = (&classes[ca].1, &classes[cb].1);
        pairs.push(Pair {
            left: ma[rng.random_range(0..ma.len())],
            right: mb[rng.random_range(0..mb.len())],
            same: false,
        });
    }
    pairs.shuffle(&mut rng);
    Ok(PairBatch { pairs })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    /// Multiplied into the learning rate after every epoch.
    pub lr_decay: f64,
    /// Momentum for the Euclidean parameters (conv and FC).
    pub momentum: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 10,
            learning_rate: 0.01,
            lr_decay: 0.95,
            momentum: 0.9,
            batch_size: 16,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean contrastive loss over the pairs seen in each epoch.
    pub epoch_losses: Vec<f64>,
    /// Near-repeated eigenvalue pairs met during backprop.
    pub degenerate_eigengaps: usize,
}

fn check_pairs(dataset: &[PartitionedSequence], pairs: &PairBatch) -> Result<()> {
    if pairs.pairs.is_empty() {
        return Err(invalid("no training pairs"));
    }
    if let Some(p) = pairs.pairs.iter().find(|p| p.left >= dataset.len() || p.right >= dataset.len()) {
        return Err(invalid(format!("pair ({}, {}) out of range for {} sequences", p.left, p.right, dataset.len())));
    }
    Ok(())
}

/// Mean contrastive loss of `params` over `pairs`.
pub fn mean_loss(params: &NetworkParams, dataset: &[PartitionedSequence], pairs: &PairBatch) -> Result<f64> {
    check_pairs(dataset, pairs)?;
    let features = dataset.par_iter().map(|s| forward_partitioned(s, params)).collect::<Result<Vec<_>>>()?;
    let mut total = 0.0;
    for p in &pairs.pairs {
        total += contrastive_loss(&features[p.left], &features[p.right], p.same, params.margin)?;
    }
    Ok(total / pairs.pairs.len() as f64)
}

/// Siamese training: both branches use one parameter set. Conv and FC take
/// momentum SGD steps; Stiefel weights take projected steps with QR
/// retraction. Pair gradients are computed in parallel and summed in pair
/// order, so a run is reproducible from its seed.
pub fn train(dataset: &[PartitionedSequence], pairs: &PairBatch, init: NetworkParams, config: &TrainConfig) -> Result<(NetworkParams, TrainReport)> {
    check_pairs(dataset, pairs)?;
    if config.batch_size == 0 || !(config.learning_rate > 0.0) {
        return Err(invalid("batch size and learning rate must be positive"));
    }
    init.validate()?;
    let mut params = init;
    let mut velocity = Gradients::zeros_like(&params);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..pairs.pairs.len()).collect();
    let mut report = TrainReport::default();
    let mut lr = config.learning_rate;

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let results = chunk
                .par_iter()
                .map(|&i| {
                    let p = pairs.pairs[i];
                    backward(&params, &dataset[p.left], &dataset[p.right], p.same)
                })
                .collect::<Result<Vec<_>>>()?;
            let mut grad = Gradients::zeros_like(&params);
            let mut gaps = GapStats::default();
            for r in &results {
                if !r.loss.is_finite() {
                    return Err(Error::Diverged { epoch });
                }
                epoch_loss += r.loss;
                grad.axpy(1.0, &r.grads);
                gaps.merge(r.gaps);
            }
            report.degenerate_eigengaps += gaps.degenerate_pairs;
            grad.scale(1.0 / chunk.len() as f64);
            if !grad.max_abs().is_finite() {
                return Err(Error::Diverged { epoch });
            }

            velocity.scale(config.momentum);
            velocity.axpy(1.0, &grad);
            for (k, v) in params.conv.iter_mut().zip(&velocity.conv) {
                k.axpy(-lr, v);
            }
            params.fc.weight -= &velocity.fc_weight * lr;
            params.fc.bias.axpy(-lr, &velocity.fc_bias, 1.0);
            for (w, g) in params.stiefel.iter_mut().zip(&grad.stiefel) {
                *w = stiefel_step(w, g, lr)?;
            }
        }
        let mean = epoch_loss / pairs.pairs.len() as f64;
        if !mean.is_finite() {
            return Err(Error::Diverged { epoch });
        }
        report.epoch_losses.push(mean);
        lr *= config.lr_decay;
    }
    Ok((params, report))
}
